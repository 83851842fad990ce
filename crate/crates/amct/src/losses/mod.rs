//! Training objectives: supervised, atom-motif alignment, motif contrastive,
//! and their weighted sum.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::TaskKind;
use crate::motif::UNK_TOKEN;
use crate::tensor::{Tape, Tensor, TensorError, Var};

/// Default softening temperature for the alignment loss.
pub const DEFAULT_TEMPERATURE: f64 = 4.0;

/// Largest motif count fed to the contrastive term before subsampling.
pub const DEFAULT_MAX_CONTRAST: usize = 512;

#[derive(Debug, Error)]
pub enum LossError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("contrastive loss needs at least one motif")]
    EmptyBatch,
    #[error("no labels present in batch")]
    NoLabels,
    #[error("loss component {0} is not finite")]
    NonFinite(&'static str),
    #[error("invalid loss weights: {0}")]
    Weights(String),
}

pub type Result<T> = std::result::Result<T, LossError>;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_a: f64,
    pub lambda_b: f64,
    pub temperature: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_a: 0.1,
            lambda_b: 0.1,
            temperature: DEFAULT_TEMPERATURE,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !ok(self.lambda_a) || !ok(self.lambda_b) {
            return Err(LossError::Weights(format!(
                "lambda_a {} and lambda_b {} must be finite and non-negative",
                self.lambda_a, self.lambda_b
            )));
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(LossError::Weights(format!(
                "temperature {} must be positive",
                self.temperature
            )));
        }
        Ok(())
    }
}

/// Scalar values of one loss evaluation. Skipped components are 0.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub sup_o: f64,
    pub sup_h: f64,
    pub align: f64,
    pub contrastive: f64,
    pub total: f64,
}

impl LossReport {
    /// Recomputes `total` from the components in the order the tape adds them.
    pub fn weighted_sum(&self, w: &LossWeights) -> f64 {
        ((self.sup_o + self.sup_h) + w.lambda_a * self.align) + w.lambda_b * self.contrastive
    }
}

/// `T²/q · Σ_i KL(softmax(h_i/T) ‖ softmax(z_i/T))`.
pub fn align_loss(tape: &mut Tape, h: Var, z: Var, temperature: f64) -> Result<Var> {
    if tape.shape(h) != tape.shape(z) {
        return Err(TensorError::ShapeMismatch {
            op: "align_loss",
            lhs: tape.shape(h).to_vec(),
            rhs: tape.shape(z).to_vec(),
        }
        .into());
    }
    let q = tape.value(h).rows() as f64;
    let hs = tape.scale(h, 1.0 / temperature)?;
    let zs = tape.scale(z, 1.0 / temperature)?;
    let p = tape.row_softmax(hs)?;
    let r = tape.row_softmax(zs)?;
    let kl = tape.kl_divergence(p, r)?;
    let total = tape.sum(kl)?;
    Ok(tape.scale(total, temperature * temperature / q)?)
}

/// Supervised contrastive loss over motif rows with vocabulary-token labels.
///
/// For each anchor `i`, `−ln(Σ_{k: y_k = y_i} e^{⟨Z_i,Z_k⟩} / Σ_j e^{⟨Z_i,Z_j⟩})`,
/// self pairs included, averaged over anchors. UNK motifs never count as
/// positives and are not used as anchors, but stay in every denominator.
/// With no usable anchor the loss is a constant 0.
pub fn motif_contrastive_loss(tape: &mut Tape, rows: Var, labels: &[usize]) -> Result<Var> {
    let l = tape.value(rows).rows();
    if l == 0 {
        return Err(LossError::EmptyBatch);
    }
    if labels.len() != l {
        return Err(TensorError::ShapeMismatch {
            op: "motif_contrastive_loss",
            lhs: tape.shape(rows).to_vec(),
            rhs: vec![labels.len()],
        }
        .into());
    }
    let anchors: Vec<usize> = (0..l).filter(|&i| labels[i] != UNK_TOKEN).collect();
    if anchors.is_empty() {
        return Ok(tape.constant(Tensor::scalar(0.0)));
    }
    let t = tape.transpose(rows)?;
    let sim = tape.matmul(rows, t)?;
    let sim = tape.embedding_lookup(sim, &anchors)?;
    let mut positive = Vec::with_capacity(anchors.len() * l);
    for &i in &anchors {
        positive.extend(labels.iter().map(|&y| y == labels[i]));
    }
    let all = tape.row_logsumexp(sim, None)?;
    let pos = tape.row_logsumexp(sim, Some(&positive))?;
    let gap = tape.sub(all, pos)?;
    Ok(tape.mean(gap)?)
}

/// Indices of at most `max` motifs, chosen uniformly without replacement and
/// returned in ascending order.
pub fn contrast_subsample<R: Rng + ?Sized>(rng: &mut R, l: usize, max: usize) -> Vec<usize> {
    if l <= max {
        return (0..l).collect();
    }
    let mut idx = sample(rng, l, max).into_vec();
    idx.sort_unstable();
    idx
}

/// Mean per-element loss over present labels. Classification takes logits and
/// applies sigmoid cross-entropy; regression uses squared error.
pub fn supervised_loss(
    tape: &mut Tape,
    pred: Var,
    targets: &Tensor,
    present: &[bool],
    task: TaskKind,
) -> Result<Var> {
    if present.len() != targets.len() {
        return Err(TensorError::ShapeMismatch {
            op: "supervised_loss",
            lhs: targets.shape().to_vec(),
            rhs: vec![present.len()],
        }
        .into());
    }
    let count = present.iter().filter(|p| **p).count();
    if count == 0 {
        return Err(LossError::NoLabels);
    }
    let per = match task {
        TaskKind::Classification => tape.cross_entropy_with_logits(pred, targets)?,
        TaskKind::Regression => {
            let y = tape.constant(targets.clone());
            tape.squared_error(pred, y)?
        }
    };
    let w = 1.0 / count as f64;
    let weights = present.iter().map(|&p| if p { w } else { 0.0 }).collect();
    let weights = tape.constant(Tensor::new(targets.shape().to_vec(), weights)?);
    let masked = tape.mul(per, weights)?;
    Ok(tape.sum(masked)?)
}

/// Loss components of one batch; `None` marks a skipped component.
#[derive(Clone, Copy, Debug, Default)]
pub struct LossTerms {
    pub sup_o: Option<Var>,
    pub sup_h: Option<Var>,
    pub align: Option<Var>,
    pub contrastive: Option<Var>,
}

/// `((sup_o + sup_h) + λa·align) + λb·contrastive`, skipping absent terms and
/// terms whose weight is zero.
pub fn total_loss(
    tape: &mut Tape,
    terms: LossTerms,
    weights: &LossWeights,
) -> Result<(Var, LossReport)> {
    let mut report = LossReport::default();
    let mut total: Option<Var> = None;
    let mut push = |tape: &mut Tape, v: Var| -> Result<()> {
        total = Some(match total {
            None => v,
            Some(acc) => tape.add(acc, v)?,
        });
        Ok(())
    };
    let value = |tape: &Tape, v: Var, name: &'static str| -> Result<f64> {
        let x = tape.value(v).item();
        if x.is_finite() {
            Ok(x)
        } else {
            Err(LossError::NonFinite(name))
        }
    };
    if let Some(v) = terms.sup_o {
        report.sup_o = value(tape, v, "sup_o")?;
        push(tape, v)?;
    }
    if let Some(v) = terms.sup_h {
        report.sup_h = value(tape, v, "sup_h")?;
        push(tape, v)?;
    }
    if let Some(v) = terms.align.filter(|_| weights.lambda_a != 0.0) {
        report.align = value(tape, v, "align")?;
        let s = tape.scale(v, weights.lambda_a)?;
        push(tape, s)?;
    }
    if let Some(v) = terms.contrastive.filter(|_| weights.lambda_b != 0.0) {
        report.contrastive = value(tape, v, "contrastive")?;
        let s = tape.scale(v, weights.lambda_b)?;
        push(tape, s)?;
    }
    let total = match total {
        Some(t) => t,
        None => tape.constant(Tensor::scalar(0.0)),
    };
    report.total = value(tape, total, "total")?;
    Ok((total, report))
}
