//! Central finite-difference gradient checking.

use super::graph::{Graph, Var};
use super::params::Params;
use super::tensor::Tensor;
use crate::error::Result;

/// Relative error floor used in [`relative_error`].
pub const REL_FLOOR: f64 = 1e-5;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Central-difference gradient of a scalar function of one tensor.
pub fn numeric_grad(at: &Tensor, eps: f64, mut f: impl FnMut(&Tensor) -> f64) -> Tensor {
    let mut grad = Tensor::zeros(at.rows(), at.cols());
    let mut probe = at.clone();
    for i in 0..at.len() {
        let orig = probe.data()[i];
        let mut at_step = |s: f64| {
            probe.data_mut()[i] = orig + s;
            f(&probe)
        };
        let (up, down) = (at_step(eps), at_step(-eps));
        probe.data_mut()[i] = orig;
        grad.data_mut()[i] = (up - down) / (2.0 * eps);
    }
    grad
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    /// Backprop and finite-difference values at the worst entry.
    pub worst_analytic: f64,
    pub worst_numeric: f64,
    pub checked: usize,
    /// Entries whose perturbation crossed a kink, where finite differences
    /// say nothing about the gradient.
    pub skipped: usize,
}

/// Compares backprop gradients of the scalar built by `f` with central
/// differences for every scalar parameter in `params`. Entries whose probes
/// change the graph's [`Graph::regime`] are counted in `skipped`
/// instead of compared.
pub fn grad_check<F>(params: &Params, eps: f64, mut f: F) -> Result<GradCheckReport>
where
    F: FnMut(&mut Graph, &Params) -> Result<Var>,
{
    let mut work = params.clone();
    work.zero_grad();
    let mut g = Graph::new();
    let loss = f(&mut g, &work)?;
    g.backward(loss)?;
    g.accumulate_param_grads(&mut work);
    let base = g.regime();

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        worst_analytic: 0.0,
        worst_numeric: 0.0,
        checked: 0,
        skipped: 0,
    };
    for pi in 0..work.len() {
        let analytic = work.grad_at(pi).clone();
        for k in 0..analytic.len() {
            let orig = work.value_at(pi).data()[k];
            let mut vals = [0.0; 2];
            let mut crossed = false;
            for (v, s) in vals.iter_mut().zip([eps, -eps]) {
                work.value_at_mut(pi).data_mut()[k] = orig + s;
                let (value, regime) = eval(&mut f, &work)?;
                *v = value;
                crossed |= regime != base;
            }
            work.value_at_mut(pi).data_mut()[k] = orig;
            if crossed {
                report.skipped += 1;
                continue;
            }
            let numeric = (vals[0] - vals[1]) / (2.0 * eps);
            let err = relative_error(analytic.data()[k], numeric);
            report.checked += 1;
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst_param = work.names()[pi].clone();
                report.worst_index = k;
                report.worst_analytic = analytic.data()[k];
                report.worst_numeric = numeric;
            }
        }
    }
    Ok(report)
}

fn eval<F>(f: &mut F, p: &Params) -> Result<(f64, u64)>
where
    F: FnMut(&mut Graph, &Params) -> Result<Var>,
{
    let mut g = Graph::new();
    let v = f(&mut g, p)?;
    Ok((g.value(v).item(), g.regime()))
}
