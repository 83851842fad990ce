//! Batching, optimization, evaluation and hyperparameter sweeps.

mod metrics;
mod optim;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use metrics::{auc, mean_std, rmse, MetricKind};
pub use optim::{clip_global_norm, Adam};

use crate::data::{featurize_dataset, DataError, Dataset, MoleculeInput, TaskKind};
use crate::losses::{
    align_loss, contrast_subsample, motif_contrastive_loss, supervised_loss, total_loss, LossError,
    LossReport, LossTerms, LossWeights, DEFAULT_MAX_CONTRAST,
};
use crate::model::{
    explain, AmctModel, Batch, BoundParams, Dropout, ForwardOptions, ModelConfig, ModelError,
    PropertyExplanation,
};
use crate::motif::MotifVocabulary;
use crate::tensor::{Tape, Tensor, TensorError, Var};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("training diverged at epoch {epoch}: total loss is not finite")]
    DivergedLoss { epoch: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid training config: {0}")]
    Config(String),
}

impl From<TrainError> for ModelError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Model(m) => m,
            other => ModelError::Checkpoint(other.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, TrainError>;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Ablation {
    pub no_align: bool,
    pub no_contrastive: bool,
    /// Skip the decoder; predictions come from the readout head.
    pub no_paware: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub lambda_a: f64,
    pub lambda_b: f64,
    pub temperature: f64,
    pub alpha: f64,
    pub ablation: Ablation,
    pub task: TaskKind,
    /// Train / validation / test fractions for a single-file dataset.
    pub split: [f64; 3],
    pub clip_norm: f64,
    pub max_contrast: usize,
    /// Predict with the readout head even when the decoder runs.
    pub predict_with_linear: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let w = LossWeights::default();
        TrainConfig {
            model: ModelConfig::default(),
            epochs: 100,
            batch_size: 32,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
            seed: 0,
            lambda_a: w.lambda_a,
            lambda_b: w.lambda_b,
            temperature: w.temperature,
            alpha: 0.5,
            ablation: Ablation::default(),
            task: TaskKind::Classification,
            split: [0.8, 0.1, 0.1],
            clip_norm: 5.0,
            max_contrast: DEFAULT_MAX_CONTRAST,
            predict_with_linear: false,
        }
    }
}

impl TrainConfig {
    pub fn weights(&self) -> LossWeights {
        LossWeights {
            lambda_a: self.lambda_a,
            lambda_b: self.lambda_b,
            temperature: self.temperature,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate().map_err(TrainError::Config)?;
        self.weights().validate()?;
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch_size must be at least 1".into()));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(TrainError::Config(format!(
                "lr {} must be non-negative",
                self.lr
            )));
        }
        let total: f64 = self.split.iter().sum();
        if self.split.iter().any(|f| !(0.0..=1.0).contains(f))
            || self.split[0] <= 0.0
            || total > 1.0 + 1e-12
        {
            return Err(TrainError::Config(format!(
                "invalid split fractions {:?}",
                self.split
            )));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(TrainError::Config(format!(
                "alpha {} outside [0, 1]",
                self.alpha
            )));
        }
        if self.max_contrast == 0 {
            return Err(TrainError::Config("max_contrast must be at least 1".into()));
        }
        Ok(())
    }

    fn decode(&self) -> bool {
        !self.ablation.no_paware
    }

    fn predict_linear(&self) -> bool {
        self.ablation.no_paware || self.predict_with_linear
    }
}

/// Featurized molecules with their labels.
#[derive(Clone, Debug)]
pub struct PreparedData {
    pub task: TaskKind,
    pub num_tasks: usize,
    pub inputs: Vec<MoleculeInput>,
    pub labels: Vec<Vec<Option<f64>>>,
}

impl PreparedData {
    pub fn new(data: &Dataset, vocab: &MotifVocabulary, config: &ModelConfig) -> Result<Self> {
        Ok(PreparedData {
            task: data.task,
            num_tasks: data.num_tasks(),
            inputs: featurize_dataset(data, vocab, &config.schema)?,
            labels: data.records.iter().map(|r| r.labels.clone()).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn subset(&self, indices: &[usize]) -> PreparedData {
        PreparedData {
            task: self.task,
            num_tasks: self.num_tasks,
            inputs: indices.iter().map(|&i| self.inputs[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i].clone()).collect(),
        }
    }
}

/// Batches of at most `q` molecules. With a seed the order is shuffled.
pub fn make_batches(
    data: &PreparedData,
    q: usize,
    shuffle: Option<&mut ChaCha8Rng>,
) -> Result<Vec<Batch>> {
    if data.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    if q == 0 {
        return Err(TrainError::Config("batch_size must be at least 1".into()));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    if let Some(rng) = shuffle {
        order.shuffle(rng);
    }
    Ok(order
        .chunks(q)
        .map(|chunk| {
            let items: Vec<_> = chunk
                .iter()
                .map(|&i| (i, &data.inputs[i], data.labels[i].as_slice()))
                .collect();
            Batch::collate(&items, data.num_tasks, 0, 0)
        })
        .collect())
}

/// Seeded split of `n` items into train / validation / test index lists.
pub fn split_indices(n: usize, fractions: [f64; 3], seed: u64) -> [Vec<usize>; 3] {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((fractions[0] * n as f64).round() as usize).clamp(1.min(n), n);
    let n_valid = ((fractions[1] * n as f64).round() as usize).min(n - n_train);
    let n_test = ((fractions[2] * n as f64).round() as usize).min(n - n_train - n_valid);
    let test = order[n_train + n_valid..n_train + n_valid + n_test].to_vec();
    let valid = order[n_train..n_train + n_valid].to_vec();
    order.truncate(n_train);
    [order, valid, test]
}

/// Builds the combined loss of one batch on `tape`.
pub fn batch_loss(
    model: &AmctModel,
    tape: &mut Tape,
    params: &BoundParams,
    batch: &Batch,
    config: &TrainConfig,
    task: TaskKind,
    dropout: &mut Dropout,
    subsample: Option<&mut ChaCha8Rng>,
) -> std::result::Result<(Var, LossReport), LossError> {
    let opts = ForwardOptions {
        decode: config.decode(),
        trace: false,
    };
    let out = model.forward(tape, params, batch, opts, dropout)?;
    let targets = Tensor::new(vec![batch.size, batch.num_tasks], batch.labels.clone())?;
    let any_label = batch.label_mask.iter().any(|m| *m);
    let mut terms = LossTerms::default();
    if any_label {
        if let Some(o) = out.o {
            terms.sup_o = Some(supervised_loss(tape, o, &targets, &batch.label_mask, task)?);
        }
        terms.sup_h = Some(supervised_loss(
            tape,
            out.h_linear,
            &targets,
            &batch.label_mask,
            task,
        )?);
    }
    if !config.ablation.no_align && config.lambda_a != 0.0 {
        terms.align = Some(align_loss(
            tape,
            out.h_readout,
            out.z_readout,
            config.temperature,
        )?);
    }
    if !config.ablation.no_contrastive && config.lambda_b != 0.0 {
        let l = out.motif_tokens.len();
        let (rows, labels) = match subsample {
            Some(rng) if l > config.max_contrast => {
                let keep = contrast_subsample(rng, l, config.max_contrast);
                let rows = tape.embedding_lookup(out.motif_rows, &keep)?;
                (rows, keep.iter().map(|&i| out.motif_tokens[i]).collect())
            }
            _ => (out.motif_rows, out.motif_tokens.clone()),
        };
        terms.contrastive = Some(motif_contrastive_loss(tape, rows, &labels)?);
    }
    total_loss(tape, terms, &config.weights())
}

/// One JSON-lines training log record.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub sup_o: f64,
    pub sup_h: f64,
    pub align: f64,
    pub contrastive: f64,
    pub total: f64,
    pub eval_metric: Option<f64>,
}

/// Owns the model and optimizer state for a training run.
pub struct Trainer {
    pub model: AmctModel,
    pub config: TrainConfig,
    adam: Adam,
    rng: ChaCha8Rng,
    epoch: usize,
}

impl Trainer {
    pub fn new(model: AmctModel, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let adam = Adam::new(
            model.params(),
            config.lr,
            (config.beta1, config.beta2),
            config.eps,
            config.weight_decay,
        );
        let rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_7a11);
        Ok(Trainer {
            model,
            config,
            adam,
            rng,
            epoch: 0,
        })
    }

    /// Builds a fresh model sized for `vocab` and `data`, seeded from the config.
    pub fn from_scratch(
        mut config: TrainConfig,
        vocab: &MotifVocabulary,
        num_tasks: usize,
    ) -> Result<Self> {
        config.model.vocab_size = vocab.len();
        config.model.num_tasks = num_tasks;
        let model = AmctModel::new(config.model.clone(), config.seed)?;
        Self::new(model, config)
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// Forward, backward, clip and update on one batch.
    pub fn step(&mut self, batch: &Batch, task: TaskKind) -> Result<LossReport> {
        let mut tape = Tape::new();
        let params = self.model.params().bind(&mut tape, true);
        let rate = self.config.model.dropout;
        let mut dropout_rng = ChaCha8Rng::seed_from_u64(rand::Rng::gen(&mut self.rng));
        let mut dropout = Dropout::train(rate, &mut dropout_rng);
        let result = batch_loss(
            &self.model,
            &mut tape,
            &params,
            batch,
            &self.config,
            task,
            &mut dropout,
            Some(&mut self.rng),
        );
        let (loss, report) = match result {
            Ok(r) => r,
            Err(LossError::NonFinite(_))
            | Err(LossError::Tensor(TensorError::NonFinite { .. })) => {
                return Err(TrainError::DivergedLoss { epoch: self.epoch });
            }
            Err(e) => return Err(e.into()),
        };
        let mut grads = tape.backward(loss)?;
        let mut flat: Vec<Option<Tensor>> = params.vars().iter().map(|&v| grads.take(v)).collect();
        clip_global_norm(&mut flat, self.config.clip_norm);
        if flat.iter().flatten().any(|g| !g.is_finite()) {
            return Err(TrainError::DivergedLoss { epoch: self.epoch });
        }
        self.adam.update(self.model.params_mut(), &flat);
        Ok(report)
    }

    /// One shuffled pass over `data`; returns the batch-averaged report.
    pub fn train_epoch(&mut self, data: &PreparedData) -> Result<LossReport> {
        let batches = make_batches(data, self.config.batch_size, Some(&mut self.rng))?;
        let mut sum = LossReport::default();
        for batch in &batches {
            let r = self.step(batch, data.task)?;
            sum.sup_o += r.sup_o;
            sum.sup_h += r.sup_h;
            sum.align += r.align;
            sum.contrastive += r.contrastive;
            sum.total += r.total;
        }
        let n = batches.len() as f64;
        self.epoch += 1;
        Ok(LossReport {
            sup_o: sum.sup_o / n,
            sup_h: sum.sup_h / n,
            align: sum.align / n,
            contrastive: sum.contrastive / n,
            total: sum.total / n,
        })
    }

    /// Runs `config.epochs` epochs, evaluating on `valid` after each one.
    /// `on_epoch` sees every log record as it is produced.
    pub fn fit(
        &mut self,
        train: &PreparedData,
        valid: Option<&PreparedData>,
        mut on_epoch: impl FnMut(&EpochLog),
    ) -> Result<Vec<EpochLog>> {
        let mut logs = Vec::with_capacity(self.config.epochs);
        for _ in 0..self.config.epochs {
            let r = self.train_epoch(train)?;
            let eval_metric = match valid {
                Some(v) if !v.is_empty() => evaluate(&self.model, v, &self.config)?.mean,
                _ => None,
            };
            let log = EpochLog {
                epoch: self.epoch,
                sup_o: r.sup_o,
                sup_h: r.sup_h,
                align: r.align,
                contrastive: r.contrastive,
                total: r.total,
                eval_metric,
            };
            on_epoch(&log);
            logs.push(log);
        }
        Ok(logs)
    }
}

/// Per-molecule predictions (`rows × c`), in data order. Classification
/// scores are probabilities.
pub fn predict(
    model: &AmctModel,
    data: &PreparedData,
    config: &TrainConfig,
) -> Result<Vec<Vec<f64>>> {
    let batches = make_batches(data, config.batch_size.max(1), None)?;
    let opts = ForwardOptions {
        decode: !config.predict_linear(),
        trace: false,
    };
    let parts: Vec<Vec<Vec<f64>>> = batches
        .par_iter()
        .map(|batch| -> Result<Vec<Vec<f64>>> {
            let mut tape = Tape::new();
            let params = model.params().bind(&mut tape, false);
            let out = model.forward(&mut tape, &params, batch, opts, &mut Dropout::eval())?;
            let pred = if config.predict_linear() {
                out.h_linear
            } else {
                out.prediction()
            };
            let v = tape.value(pred);
            Ok((0..v.rows())
                .map(|r| {
                    v.row(r)
                        .iter()
                        .map(|&x| match data.task {
                            TaskKind::Classification => 1.0 / (1.0 + (-x).exp()),
                            TaskKind::Regression => x,
                        })
                        .collect()
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(parts.into_iter().flatten().collect())
}

/// Cross-attention explanation of one molecule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MoleculeExplanation {
    /// Row in the explained data.
    pub row: usize,
    pub properties: Vec<PropertyExplanation>,
}

/// Runs the decoder over `data` and explains each molecule at threshold `alpha`.
pub fn explain_data(
    model: &AmctModel,
    data: &PreparedData,
    config: &TrainConfig,
    alpha: f64,
) -> Result<Vec<MoleculeExplanation>> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(TrainError::Config(format!("alpha {alpha} outside [0, 1]")));
    }
    let batches = make_batches(data, config.batch_size.max(1), None)?;
    let parts: Vec<Vec<MoleculeExplanation>> = batches
        .par_iter()
        .map(|batch| -> Result<Vec<MoleculeExplanation>> {
            let mut tape = Tape::new();
            let params = model.params().bind(&mut tape, false);
            let opts = ForwardOptions {
                decode: true,
                trace: false,
            };
            let out = model.forward(&mut tape, &params, batch, opts, &mut Dropout::eval())?;
            out.attention
                .iter()
                .zip(&batch.rows)
                .map(|(a, &row)| {
                    let properties =
                        explain(a, alpha).map_err(|e| TrainError::Config(e.to_string()))?;
                    Ok(MoleculeExplanation { row, properties })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(parts.into_iter().flatten().collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metric: MetricKind,
    /// Per-task metric; `None` for tasks skipped as single-class or unlabeled.
    pub per_task: Vec<Option<f64>>,
    /// Mean over scored tasks, then over runs.
    pub mean: Option<f64>,
    /// Standard deviation of `mean` across runs.
    pub std: f64,
    pub runs: usize,
    /// Tasks skipped because only one label value was present.
    pub single_class: Vec<usize>,
}

impl EvalReport {
    /// Combines single-run reports.
    pub fn aggregate(reports: &[EvalReport]) -> Option<EvalReport> {
        let first = reports.first()?;
        let c = first.per_task.len();
        let per_task = (0..c)
            .map(|t| {
                let v: Vec<f64> = reports.iter().filter_map(|r| r.per_task[t]).collect();
                (!v.is_empty()).then(|| mean_std(&v).0)
            })
            .collect();
        let means: Vec<f64> = reports.iter().filter_map(|r| r.mean).collect();
        let (mean, std) = if means.is_empty() {
            (None, 0.0)
        } else {
            let (m, s) = mean_std(&means);
            (Some(m), s)
        };
        let mut single_class: Vec<usize> = reports
            .iter()
            .flat_map(|r| r.single_class.iter().copied())
            .collect();
        single_class.sort_unstable();
        single_class.dedup();
        Some(EvalReport {
            metric: first.metric,
            per_task,
            mean,
            std,
            runs: reports.len(),
            single_class,
        })
    }
}

/// Scores `preds` against the labels of `data`.
pub fn score(data: &PreparedData, preds: &[Vec<f64>]) -> EvalReport {
    let metric = match data.task {
        TaskKind::Classification => MetricKind::Auc,
        TaskKind::Regression => MetricKind::Rmse,
    };
    let mut per_task = Vec::with_capacity(data.num_tasks);
    let mut single_class = Vec::new();
    for t in 0..data.num_tasks {
        let (mut s, mut y) = (Vec::new(), Vec::new());
        for (p, labels) in preds.iter().zip(&data.labels) {
            if let Some(v) = labels[t] {
                s.push(p[t]);
                y.push(v);
            }
        }
        let value = match metric {
            MetricKind::Auc => {
                let b: Vec<bool> = y.iter().map(|v| *v == 1.0).collect();
                let a = auc(&s, &b);
                if a.is_none() && !y.is_empty() {
                    single_class.push(t);
                }
                a
            }
            MetricKind::Rmse => rmse(&s, &y),
        };
        per_task.push(value);
    }
    let scored: Vec<f64> = per_task.iter().flatten().copied().collect();
    let mean = (!scored.is_empty()).then(|| scored.iter().sum::<f64>() / scored.len() as f64);
    EvalReport {
        metric,
        per_task,
        mean,
        std: 0.0,
        runs: 1,
        single_class,
    }
}

pub fn evaluate(
    model: &AmctModel,
    data: &PreparedData,
    config: &TrainConfig,
) -> Result<EvalReport> {
    let preds = predict(model, data, config)?;
    Ok(score(data, &preds))
}

/// Seed for run `run` of the sweep cell at (`lambda_a`, `lambda_b`). Depends
/// only on the cell coordinates and the base seed, never on grid order.
pub fn cell_seed(base: u64, lambda_a: f64, lambda_b: f64, run: usize) -> u64 {
    let mut x = base
        ^ lambda_a.to_bits().rotate_left(17)
        ^ lambda_b.to_bits().rotate_left(43)
        ^ (run as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    // splitmix64 finalizer
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lambda_a: f64,
    pub lambda_b: f64,
    pub metric_mean: Option<f64>,
    pub metric_std: f64,
}

/// Trains and evaluates `runs` models per (λa, λb) cell.
pub fn sweep(
    lambdas_a: &[f64],
    lambdas_b: &[f64],
    runs: usize,
    config: &TrainConfig,
    vocab: &MotifVocabulary,
    train: &PreparedData,
    test: &PreparedData,
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::with_capacity(lambdas_a.len() * lambdas_b.len());
    for &a in lambdas_a {
        for &b in lambdas_b {
            let mut reports = Vec::with_capacity(runs);
            for run in 0..runs.max(1) {
                let mut cfg = config.clone();
                cfg.lambda_a = a;
                cfg.lambda_b = b;
                cfg.seed = cell_seed(config.seed, a, b, run);
                let mut trainer = Trainer::from_scratch(cfg, vocab, train.num_tasks)?;
                trainer.fit(train, None, |_| {})?;
                reports.push(evaluate(&trainer.model, test, &trainer.config)?);
            }
            let agg = EvalReport::aggregate(&reports).expect("at least one run");
            rows.push(SweepRow {
                lambda_a: a,
                lambda_b: b,
                metric_mean: agg.mean,
                metric_std: agg.std,
            });
        }
    }
    Ok(rows)
}

/// `lambda_a,lambda_b,metric_mean,metric_std` with one line per row.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("lambda_a,lambda_b,metric_mean,metric_std\n");
    for r in rows {
        let mean = r.metric_mean.map_or(String::new(), |m| m.to_string());
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.lambda_a, r.lambda_b, mean, r.metric_std
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::read_csv;
    use crate::molgraph::ParseLimits;
    use crate::motif::build_vocabulary;

    fn toy(task: TaskKind, text: &str) -> (PreparedData, MotifVocabulary) {
        let d = read_csv(text, task, &ParseLimits::default()).unwrap();
        let vocab = build_vocabulary(d.graphs()).unwrap();
        let cfg = ModelConfig::default();
        (PreparedData::new(&d, &vocab, &cfg).unwrap(), vocab)
    }

    fn small() -> TrainConfig {
        TrainConfig {
            model: ModelConfig {
                d_model: 8,
                heads: 2,
                encoder_layers: 1,
                decoder_layers: 1,
                dropout: 0.0,
                ..ModelConfig::default()
            },
            epochs: 2,
            batch_size: 2,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn batch_sizes() {
        let (data, _) = toy(
            TaskKind::Regression,
            "smiles,y\nC,1\nCC,2\nCCC,3\nCCO,4\nC1CC1,5\n",
        );
        let b = make_batches(&data, 2, None).unwrap();
        assert_eq!(b.iter().map(|b| b.size).collect::<Vec<_>>(), vec![2, 2, 1]);
        let mut r1 = ChaCha8Rng::seed_from_u64(3);
        let mut r2 = ChaCha8Rng::seed_from_u64(3);
        let a = make_batches(&data, 2, Some(&mut r1)).unwrap();
        let c = make_batches(&data, 2, Some(&mut r2)).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn zero_lr_keeps_parameters() {
        let (data, vocab) = toy(TaskKind::Regression, "smiles,y\nCCO,1.5\nc1ccccc1,0.2\n");
        let cfg = TrainConfig { lr: 0.0, ..small() };
        let mut t = Trainer::from_scratch(cfg, &vocab, 1).unwrap();
        let before = t.model.params().clone();
        t.train_epoch(&data).unwrap();
        assert_eq!(&before, t.model.params());
    }

    #[test]
    fn one_step_descends() {
        let (data, vocab) = toy(TaskKind::Regression, "smiles,y\nCCO,1.5\n");
        let cfg = TrainConfig {
            lr: 1e-3,
            lambda_a: 0.0,
            lambda_b: 0.0,
            ..small()
        };
        let mut t = Trainer::from_scratch(cfg, &vocab, 1).unwrap();
        let before = t.train_epoch(&data).unwrap().total;
        let after = t.train_epoch(&data).unwrap().total;
        assert!(after < before, "{after} >= {before}");
    }

    #[test]
    fn ablation_zeroes_components() {
        let (data, vocab) = toy(
            TaskKind::Classification,
            "smiles,y\nCCO,1\nc1ccccc1,0\nC1CCCCC1O,1\n",
        );
        let mut cfg = small();
        cfg.ablation = Ablation {
            no_align: true,
            no_contrastive: true,
            no_paware: true,
        };
        let mut t = Trainer::from_scratch(cfg, &vocab, 1).unwrap();
        let r = t.train_epoch(&data).unwrap();
        assert_eq!((r.align, r.contrastive, r.sup_o), (0.0, 0.0, 0.0));
        assert!(r.sup_h > 0.0);
    }

    #[test]
    fn split_covers_without_overlap() {
        let [a, b, c] = split_indices(10, [0.8, 0.1, 0.1], 7);
        assert_eq!((a.len(), b.len(), c.len()), (8, 1, 1));
        let mut all: Vec<usize> = a.into_iter().chain(b).chain(c).collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn cell_seed_is_order_free() {
        assert_eq!(cell_seed(1, 0.1, 0.2, 0), cell_seed(1, 0.1, 0.2, 0));
        assert_ne!(cell_seed(1, 0.1, 0.2, 0), cell_seed(1, 0.2, 0.1, 0));
    }

    #[test]
    fn sweep_emits_grid() {
        let (data, vocab) = toy(TaskKind::Regression, "smiles,y\nCCO,1.5\nCC,0.5\n");
        let cfg = TrainConfig {
            epochs: 1,
            ..small()
        };
        let rows = sweep(&[0.0, 0.1], &[0.0, 0.1, 1.0], 1, &cfg, &vocab, &data, &data).unwrap();
        assert_eq!(rows.len(), 6);
        assert_eq!(sweep_csv(&rows).lines().count(), 7);
    }
}
