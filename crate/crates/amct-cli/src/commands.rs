use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use thiserror::Error;

use amct::data::{read_csv, synthetic, DataError, Dataset, TaskKind};
use amct::model::{check_vocab, AmctModel, CheckpointMeta, ModelError};
use amct::molgraph::ParseLimits;
use amct::motif::{build_vocabulary, MotifVocabulary, VocabError};
use amct::train::{
    evaluate, explain_data, split_indices, sweep, sweep_csv, EpochLog, PreparedData, TrainConfig,
    TrainError, Trainer,
};

use crate::manifest::{manifest_path, RunManifest};
use crate::schema::{
    self, EvalOutput, ExplainReport, ExplainedMolecule, ExplainedMotif, ExplainedProperty,
};
use crate::{AblateFlag, Command, TaskArg, TrainArgs};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0:#}")]
    Input(#[from] anyhow::Error),
    #[error("{0}")]
    VocabMismatch(ModelError),
    #[error("{0}")]
    Diverged(TrainError),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::VocabMismatch(_) => 3,
            CliError::Diverged(_) => 4,
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::DivergedLoss { .. } => CliError::Diverged(e),
            TrainError::Model(ModelError::VocabMismatch { .. }) => match e {
                TrainError::Model(m) => CliError::VocabMismatch(m),
                _ => unreachable!(),
            },
            other => CliError::Input(flat(other)),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::VocabMismatch { .. } => CliError::VocabMismatch(e),
            other => CliError::Input(flat(other)),
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

/// Library errors already spell out their cause, so keep only the message.
fn flat(e: impl std::fmt::Display) -> anyhow::Error {
    anyhow!(e.to_string())
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::BuildVocab { data, out, top } => build_vocab(&data, &out, top),
        Command::Train {
            common,
            out,
            log,
            eval_data,
        } => train(&common, &out, log, eval_data.as_deref()),
        Command::Eval {
            ckpt,
            data,
            vocab,
            linear,
            out,
        } => eval(&ckpt, &data, vocab, linear, out.as_deref()),
        Command::Sweep {
            common,
            grid_a,
            grid_b,
            runs,
            eval_data,
            out,
        } => run_sweep(&common, &grid_a, &grid_b, runs, eval_data.as_deref(), &out),
        Command::Explain {
            ckpt,
            data,
            vocab,
            alpha,
            out,
            csv,
        } => run_explain(&ckpt, &data, vocab, alpha, &out, csv),
        Command::Check { kind, file } => {
            let summary = schema::check(kind, &file)?;
            println!("ok: {summary}");
            Ok(())
        }
        Command::Synth { out_dir } => synth(&out_dir),
    }
}

fn read_text(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn read_dataset(path: &Path, task: TaskKind) -> anyhow::Result<Dataset> {
    let text = read_text(path)?;
    read_csv(&text, task, &ParseLimits::default())
        .map_err(|e: DataError| flat(e))
        .with_context(|| format!("parsing {}", path.display()))
}

fn load_vocab(path: &Path) -> anyhow::Result<MotifVocabulary> {
    MotifVocabulary::from_json(&read_text(path)?)
        .map_err(|e: VocabError| flat(e))
        .with_context(|| format!("loading vocabulary {}", path.display()))
}

fn build_vocab(data: &Path, out: &Path, top: usize) -> Result<()> {
    let text = read_text(data)?;
    let vocab = if text.trim().is_empty() {
        Err(VocabError::EmptyCorpus)
    } else {
        let d = read_csv(&text, TaskKind::Regression, &ParseLimits::default())
            .map_err(flat)
            .with_context(|| format!("parsing {}", data.display()))?;
        build_vocabulary(d.graphs())
    }
    .map_err(flat)?;
    write_text(out, &vocab.to_json())?;
    println!("motifs: {}", vocab.len());
    println!("{:>6}  {:>8}  key", "id", "count");
    for id in vocab.most_frequent(top) {
        println!(
            "{:>6}  {:>8}  {}",
            id,
            vocab.count(id),
            vocab.key(id).unwrap_or_default()
        );
    }
    Ok(())
}

/// Default config, then the config file, then flags. Reports each layer on stderr.
fn resolve_config(args: &TrainArgs) -> anyhow::Result<TrainConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            eprintln!("config: defaults < {}", path.display());
            serde_json::from_str(&read_text(path)?)
                .with_context(|| format!("parsing config {}", path.display()))?
        }
        None => {
            eprintln!("config: defaults");
            TrainConfig::default()
        }
    };
    let mut flags = Vec::new();
    macro_rules! set {
        ($field:ident, $value:expr) => {
            if let Some(v) = $value {
                cfg.$field = v;
                flags.push(stringify!($field));
            }
        };
    }
    set!(seed, args.seed);
    set!(epochs, args.epochs);
    set!(batch_size, args.batch_size);
    set!(lr, args.lr);
    set!(lambda_a, args.lambda_a);
    set!(lambda_b, args.lambda_b);
    set!(temperature, args.temperature);
    set!(
        task,
        args.task.map(|t| match t {
            TaskArg::Classification => TaskKind::Classification,
            TaskArg::Regression => TaskKind::Regression,
        })
    );
    for flag in &args.ablate {
        match flag {
            AblateFlag::NoAloss => cfg.ablation.no_align = true,
            AblateFlag::NoCloss => cfg.ablation.no_contrastive = true,
            AblateFlag::NoPaware => cfg.ablation.no_paware = true,
        }
        flags.push("ablation");
    }
    if !flags.is_empty() {
        eprintln!("config: flags override {}", flags.join(", "));
    }
    cfg.validate().map_err(flat)?;
    Ok(cfg)
}

struct Inputs {
    cfg: TrainConfig,
    data: Dataset,
    vocab: MotifVocabulary,
    train: PreparedData,
    held_out: Option<PreparedData>,
}

/// Loads data and vocabulary; splits `--data` when no separate held-out file
/// is given. `held_out_test` picks the test part of the split over validation.
fn load_inputs(args: &TrainArgs, eval_data: Option<&Path>, held_out_test: bool) -> Result<Inputs> {
    let cfg = resolve_config(args)?;
    let data = read_dataset(&args.data, cfg.task)?;
    let vocab = load_vocab(&args.vocab)?;
    let all = PreparedData::new(&data, &vocab, &cfg.model)?;
    let (train, held_out) = match eval_data {
        Some(path) => {
            let d = read_dataset(path, cfg.task)?;
            if d.num_tasks() != data.num_tasks() {
                return Err(anyhow!(
                    "{} has {} tasks but the training data has {}",
                    path.display(),
                    d.num_tasks(),
                    data.num_tasks()
                )
                .into());
            }
            (all, Some(PreparedData::new(&d, &vocab, &cfg.model)?))
        }
        None => {
            let [tr, va, te] = split_indices(all.len(), cfg.split, cfg.seed);
            let pick = if held_out_test && !te.is_empty() {
                te
            } else {
                va
            };
            let held = (!pick.is_empty()).then(|| all.subset(&pick));
            (all.subset(&tr), held)
        }
    };
    Ok(Inputs {
        cfg,
        data,
        vocab,
        train,
        held_out,
    })
}

fn train(
    args: &TrainArgs,
    out: &Path,
    log: Option<PathBuf>,
    eval_data: Option<&Path>,
) -> Result<()> {
    let inputs = load_inputs(args, eval_data, false)?;
    let log_path = log.unwrap_or_else(|| {
        let mut s = out.as_os_str().to_owned();
        s.push(".log.jsonl");
        PathBuf::from(s)
    });
    let mut trainer = Trainer::from_scratch(inputs.cfg, &inputs.vocab, inputs.data.num_tasks())?;
    let mut log_text = String::new();
    let result = trainer.fit(&inputs.train, inputs.held_out.as_ref(), |rec: &EpochLog| {
        let line = serde_json::to_string(rec).expect("log record serializes");
        eprintln!("{line}");
        log_text.push_str(&line);
        log_text.push('\n');
    });
    write_text(&log_path, &log_text)?;
    result?;

    let cfg = &trainer.config;
    let manifest_file = manifest_path(out);
    let meta = CheckpointMeta {
        config: cfg.model.clone(),
        vocab_hash: inputs.vocab.hash(),
        vocab_path: Some(args.vocab.display().to_string()),
        task: inputs.data.task,
        task_names: inputs.data.task_names.clone(),
        predict_with_linear: cfg.ablation.no_paware || cfg.predict_with_linear,
        manifest: Some(manifest_file.display().to_string()),
    };
    let mut bytes = Vec::new();
    trainer.model.save(&mut bytes, &meta)?;
    fs::write(out, &bytes).with_context(|| format!("writing {}", out.display()))?;

    let mut manifest = RunManifest::new(
        "train",
        serde_json::to_value(cfg).expect("config serializes"),
        inputs.data.content_hash.clone(),
        inputs.vocab.hash(),
        cfg.seed,
    );
    manifest.output(out);
    manifest.output(&log_path);
    write_text(&manifest_file, &pretty(&manifest))?;
    println!(
        "{}",
        serde_json::json!({
            "checkpoint": out.display().to_string(),
            "log": log_path.display().to_string(),
            "epochs": cfg.epochs,
            "final_total": trainer_final(&log_text),
        })
    );
    Ok(())
}

fn trainer_final(log: &str) -> Option<f64> {
    let last = log.lines().last()?;
    serde_json::from_str::<EpochLog>(last).ok().map(|r| r.total)
}

fn pretty<T: serde::Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializes");
    s.push('\n');
    s
}

struct Loaded {
    model: AmctModel,
    meta: CheckpointMeta,
    vocab: MotifVocabulary,
    data: Dataset,
    prepared: PreparedData,
    cfg: TrainConfig,
}

fn load_checkpoint(ckpt: &Path, data: &Path, vocab: Option<PathBuf>) -> Result<Loaded> {
    let file = fs::File::open(ckpt).with_context(|| format!("opening {}", ckpt.display()))?;
    let (model, meta) = AmctModel::load(std::io::BufReader::new(file))?;
    let vocab_path = vocab
        .or_else(|| meta.vocab_path.as_ref().map(PathBuf::from))
        .ok_or_else(|| anyhow!("checkpoint records no vocabulary path; pass --vocab"))?;
    let vocab = load_vocab(&vocab_path)?;
    check_vocab(&meta, &vocab)?;
    let data = read_dataset(data, meta.task)?;
    if data.num_tasks() != meta.config.num_tasks {
        return Err(anyhow!(
            "data has {} tasks, checkpoint expects {}",
            data.num_tasks(),
            meta.config.num_tasks
        )
        .into());
    }
    let prepared = PreparedData::new(&data, &vocab, &meta.config)?;
    let cfg = TrainConfig {
        model: meta.config.clone(),
        task: meta.task,
        predict_with_linear: meta.predict_with_linear,
        ..TrainConfig::default()
    };
    Ok(Loaded {
        model,
        meta,
        vocab,
        data,
        prepared,
        cfg,
    })
}

fn eval(
    ckpt: &Path,
    data: &Path,
    vocab: Option<PathBuf>,
    linear: bool,
    out: Option<&Path>,
) -> Result<()> {
    let mut l = load_checkpoint(ckpt, data, vocab)?;
    l.cfg.predict_with_linear |= linear;
    let report = evaluate(&l.model, &l.prepared, &l.cfg)?;
    let output = EvalOutput {
        checkpoint: ckpt.display().to_string(),
        dataset_hash: l.data.content_hash.clone(),
        task_names: l.meta.task_names.clone(),
        report,
    };
    let text = pretty(&output);
    print!("{text}");
    if let Some(path) = out {
        write_text(path, &text)?;
    }
    Ok(())
}

fn run_sweep(
    args: &TrainArgs,
    grid_a: &[f64],
    grid_b: &[f64],
    runs: usize,
    eval_data: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let inputs = load_inputs(args, eval_data, true)?;
    let held = inputs
        .held_out
        .as_ref()
        .ok_or_else(|| anyhow!("no held-out molecules to score; pass --eval-data"))?;
    let rows = sweep(
        grid_a,
        grid_b,
        runs,
        &inputs.cfg,
        &inputs.vocab,
        &inputs.train,
        held,
    )?;
    write_text(out, &sweep_csv(&rows))?;
    let mut manifest = RunManifest::new(
        "sweep",
        serde_json::json!({
            "train": inputs.cfg,
            "grid_a": grid_a,
            "grid_b": grid_b,
            "runs": runs,
        }),
        inputs.data.content_hash.clone(),
        inputs.vocab.hash(),
        inputs.cfg.seed,
    );
    manifest.output(out);
    write_text(&manifest_path(out), &pretty(&manifest))?;
    print!("{}", sweep_csv(&rows));
    Ok(())
}

fn run_explain(
    ckpt: &Path,
    data: &Path,
    vocab: Option<PathBuf>,
    alpha: f64,
    out: &Path,
    csv_path: Option<PathBuf>,
) -> Result<()> {
    let l = load_checkpoint(ckpt, data, vocab)?;
    let explanations = explain_data(&l.model, &l.prepared, &l.cfg, alpha)?;
    let manifest_file = manifest_path(out);
    let mut molecules = Vec::with_capacity(explanations.len());
    for e in &explanations {
        let record = &l.data.records[e.row];
        let properties = e
            .properties
            .iter()
            .map(|p| {
                let mut order: Vec<usize> = (0..p.weights.len()).collect();
                order.sort_by(|&a, &b| p.weights[b].total_cmp(&p.weights[a]).then(a.cmp(&b)));
                ExplainedProperty {
                    property: l.meta.task_names[p.property].clone(),
                    degenerate: p.degenerate,
                    motifs: order
                        .into_iter()
                        .map(|i| {
                            let m = &record.motifs.motifs[i];
                            ExplainedMotif {
                                motif_index: i,
                                motif_id: l.vocab.id(&m.canonical_key),
                                canonical_key: m.canonical_key.clone(),
                                kind: m.kind,
                                atom_indices: m.atom_indices.clone(),
                                weight: p.weights[i],
                                selected: p.weights[i] >= alpha,
                            }
                        })
                        .collect(),
                }
            })
            .collect();
        molecules.push(ExplainedMolecule {
            molecule_id: e.row,
            smiles: record.graph.source_text().to_owned(),
            properties,
        });
    }
    let report = ExplainReport {
        checkpoint: ckpt.display().to_string(),
        manifest: manifest_file.display().to_string(),
        alpha,
        molecules,
    };
    write_text(out, &pretty(&report))?;

    let csv_path = csv_path.unwrap_or_else(|| out.with_extension("csv"));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(schema::EXPLAIN_CSV_HEADER)
        .map_err(anyhow::Error::from)?;
    for m in &report.molecules {
        for p in &m.properties {
            for motif in &p.motifs {
                w.write_record([
                    m.molecule_id.to_string(),
                    p.property.clone(),
                    motif.motif_id.map_or(String::new(), |id| id.to_string()),
                    motif.weight.to_string(),
                ])
                .map_err(anyhow::Error::from)?;
            }
        }
    }
    let bytes = w.into_inner().map_err(|e| anyhow!("{e}"))?;
    fs::write(&csv_path, bytes).with_context(|| format!("writing {}", csv_path.display()))?;

    let mut manifest = RunManifest::new(
        "explain",
        serde_json::json!({ "alpha": alpha, "checkpoint": ckpt.display().to_string() }),
        l.data.content_hash.clone(),
        l.vocab.hash(),
        0,
    );
    manifest.output(out);
    manifest.output(&csv_path);
    write_text(&manifest_file, &pretty(&manifest))?;
    let selected: usize = report
        .molecules
        .iter()
        .flat_map(|m| &m.properties)
        .map(|p| p.motifs.iter().filter(|m| m.selected).count())
        .sum();
    println!(
        "explained {} molecules, {} motifs selected at alpha {}",
        report.molecules.len(),
        selected,
        alpha
    );
    Ok(())
}

fn synth(out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let train = out_dir.join("planted_train.csv");
    let test = out_dir.join("planted_test.csv");
    write_text(
        &train,
        &synthetic::planted_motif_csv(synthetic::TRAIN_SIZE, synthetic::TRAIN_SEED),
    )?;
    write_text(
        &test,
        &synthetic::planted_motif_csv(synthetic::TEST_SIZE, synthetic::TEST_SEED),
    )?;
    println!("{}\n{}", train.display(), test.display());
    Ok(())
}
