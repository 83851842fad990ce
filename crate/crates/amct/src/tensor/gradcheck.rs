//! Central finite-difference gradient checking.
//!
//! Uses only forward evaluations, so it stays independent of the backward
//! rules it validates.

use super::{Result, Tape, Tensor, Var};

#[derive(Clone, Debug, PartialEq)]
pub struct Mismatch {
    pub input: usize,
    pub element: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// Largest `|analytic - numeric| / max(1, |numeric|)` seen.
    pub max_error: f64,
    pub worst: Option<Mismatch>,
    pub checked: usize,
}

/// Compares tape gradients of the scalar built by `f` against central
/// differences with step `step` for every element of every input.
pub fn check<F>(inputs: &[Tensor], step: f64, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone(), true)).collect();
    let loss = f(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;

    let eval = |values: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.leaf(t.clone(), false)).collect();
        let out = f(&mut tape, &vars)?;
        Ok(tape.value(out).item())
    };

    let mut report = GradCheckReport {
        max_error: 0.0,
        worst: None,
        checked: 0,
    };
    let mut work = inputs.to_vec();
    for (input, var) in vars.iter().enumerate() {
        let zeros = Tensor::zeros(inputs[input].shape());
        let analytic = grads.get(*var).unwrap_or(&zeros).clone();
        for element in 0..inputs[input].len() {
            let original = inputs[input].data()[element];
            work[input].data_mut()[element] = original + step;
            let plus = eval(&work)?;
            work[input].data_mut()[element] = original - step;
            let minus = eval(&work)?;
            work[input].data_mut()[element] = original;

            let numeric = (plus - minus) / (2.0 * step);
            let a = analytic.data()[element];
            let err = (a - numeric).abs() / numeric.abs().max(1.0);
            report.checked += 1;
            if err > report.max_error || report.worst.is_none() {
                report.max_error = report.max_error.max(err);
                report.worst = Some(Mismatch {
                    input,
                    element,
                    analytic: a,
                    numeric,
                });
            }
        }
    }
    Ok(report)
}
