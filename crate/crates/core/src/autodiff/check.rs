//! Central finite-difference verification of tape gradients.

use super::{ParameterSet, Tape, Var};
use crate::error::Result;

pub const DEFAULT_EPS: f64 = 1e-5;

/// Worst coordinate found by [`grad_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub coordinates: usize,
}

/// `|a - n| / max(1e-8, |a| + |n|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Compares the gradient of `loss_fn` at `params` with central differences
/// `(f(p + eps) - f(p - eps)) / (2 eps)` for every coordinate.
///
/// `loss_fn` records a scalar loss on the supplied tape. It must be
/// deterministic in the parameter values.
pub fn grad_check<F>(params: &ParameterSet, eps: f64, mut loss_fn: F) -> Result<GradCheckReport>
where
    F: FnMut(&ParameterSet, &mut Tape) -> Result<Var>,
{
    let mut work = params.clone();
    work.zero_grads();
    let mut tape = Tape::new();
    let loss = loss_fn(&work, &mut tape)?;
    tape.backward(loss, &mut work)?;
    let analytic: Vec<Vec<f64>> = work.iter().map(|(_, p)| p.grad.data().to_vec()).collect();

    let mut eval = |ps: &ParameterSet| -> Result<f64> {
        let mut tape = Tape::new();
        let loss = loss_fn(ps, &mut tape)?;
        Ok(tape.value(loss).item())
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        coordinates: 0,
    };
    for p in 0..work.len() {
        for i in 0..work.get(p).value.len() {
            let orig = work.get(p).value.data()[i];
            work.get_mut(p).value.data_mut()[i] = orig + eps;
            let plus = eval(&work)?;
            work.get_mut(p).value.data_mut()[i] = orig - eps;
            let minus = eval(&work)?;
            work.get_mut(p).value.data_mut()[i] = orig;

            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic[p][i];
            let err = relative_error(a, numeric);
            report.coordinates += 1;
            if err > report.max_rel_error || report.worst_param.is_empty() {
                report.max_rel_error = err;
                report.worst_param = work.name(p).to_string();
                report.worst_index = i;
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}
