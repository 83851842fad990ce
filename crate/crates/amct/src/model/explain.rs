use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::Tensor;

/// Default selection threshold.
pub const DEFAULT_ALPHA: f64 = 0.5;

/// Rows whose max and min differ by no more than this are treated as constant.
pub const DEGENERATE_SPAN: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum ExplainError {
    #[error("alpha {0} outside [0, 1]")]
    Alpha(f64),
    #[error("attention matrix contains a non-finite value")]
    NonFinite,
    #[error("attention matrix has no motif columns")]
    Empty,
}

/// Normalized cross-attention for one property row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropertyExplanation {
    pub property: usize,
    /// Min–max normalized weight of every motif, in motif order.
    pub weights: Vec<f64>,
    /// Set when the row was constant; every weight is then 1.0.
    pub degenerate: bool,
    /// `(motif index, weight)` with weight ≥ alpha, heaviest first, ties by index.
    pub selected: Vec<(usize, f64)>,
}

/// Min–max normalizes each row of `a` (`c × m`, real motifs only) and selects
/// the motifs at or above `alpha`.
pub fn explain(a: &Tensor, alpha: f64) -> Result<Vec<PropertyExplanation>, ExplainError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(ExplainError::Alpha(alpha));
    }
    if !a.is_finite() {
        return Err(ExplainError::NonFinite);
    }
    if a.cols() == 0 {
        return Err(ExplainError::Empty);
    }
    let mut out = Vec::with_capacity(a.rows());
    for property in 0..a.rows() {
        let row = a.row(property);
        let min = row.iter().copied().fold(f64::INFINITY, f64::min);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let degenerate = max - min <= DEGENERATE_SPAN;
        let weights: Vec<f64> = if degenerate {
            vec![1.0; row.len()]
        } else {
            row.iter().map(|v| (v - min) / (max - min)).collect()
        };
        let mut selected: Vec<(usize, f64)> = weights
            .iter()
            .enumerate()
            .filter(|(_, &w)| w >= alpha)
            .map(|(i, &w)| (i, w))
            .collect();
        selected.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
        out.push(PropertyExplanation {
            property,
            weights,
            degenerate,
            selected,
        });
    }
    Ok(out)
}
