//! Central finite-difference verification of tape gradients.

use crate::error::Result;
use crate::params::{Binding, ParamStore};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Denominator floor for the relative error.
pub const RELATIVE_FLOOR: f64 = 1e-8;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR);
    (analytic - numeric).abs() / denom
}

/// Worst coordinate found by a gradient check.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Parameter name (if checking a store) and flat coordinate of the worst error.
    pub worst: Option<(String, usize)>,
    pub analytic: f64,
    pub numeric: f64,
    pub coordinates: usize,
}

impl GradCheckReport {
    fn empty() -> Self {
        Self {
            max_relative_error: 0.0,
            worst: None,
            analytic: 0.0,
            numeric: 0.0,
            coordinates: 0,
        }
    }

    fn observe(&mut self, name: &str, coord: usize, analytic: f64, numeric: f64) {
        self.coordinates += 1;
        let err = relative_error(analytic, numeric);
        if err > self.max_relative_error || self.worst.is_none() {
            self.max_relative_error = err;
            self.worst = Some((name.to_string(), coord));
            self.analytic = analytic;
            self.numeric = numeric;
        }
    }
}

fn scalar_of(tape: &Tape, v: Var) -> f64 {
    tape.value(v).data()[0]
}

/// Compare the tape gradient of a scalar map `f` at `point` against central
/// differences `(f(x+εeᵢ) − f(x−εeᵢ)) / 2ε`. Returns the worst coordinate.
pub fn finite_diff_check<F>(f: F, point: &Tensor, eps: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let eval = |x: &Tensor| -> Result<f64> {
        let mut tape = Tape::new();
        let leaf = tape.constant(x.clone())?;
        let out = f(&mut tape, leaf)?;
        Ok(scalar_of(&tape, out))
    };

    let mut tape = Tape::new();
    let x = tape.leaf(point.clone())?;
    let out = f(&mut tape, x)?;
    tape.backward(out)?;
    let analytic = tape
        .grad(x)
        .cloned()
        .unwrap_or_else(|| Tensor::zeros(point.shape()));

    let mut report = GradCheckReport::empty();
    let mut probe = point.clone();
    for i in 0..point.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + eps;
        let plus = eval(&probe)?;
        probe.data_mut()[i] = orig - eps;
        let minus = eval(&probe)?;
        probe.data_mut()[i] = orig;
        report.observe("x", i, analytic.data()[i], (plus - minus) / (2.0 * eps));
    }
    Ok(report)
}

/// Gradient check over every coordinate of every parameter in `store`.
/// `f` builds a scalar loss from a binding of the store onto a fresh tape.
pub fn param_gradient_check<F>(store: &ParamStore, f: F, eps: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &Binding) -> Result<Var>,
{
    let mut work = store.clone();
    work.zero_grads();
    let mut tape = Tape::new();
    let binding = work.bind(&mut tape)?;
    let loss = f(&mut tape, &binding)?;
    tape.backward(loss)?;
    work.accumulate_grads(&tape, &binding);
    let analytic = work.clone();

    let eval = |s: &ParamStore| -> Result<f64> {
        let mut tape = Tape::new();
        let binding = s.bind_frozen(&mut tape)?;
        let loss = f(&mut tape, &binding)?;
        Ok(scalar_of(&tape, loss))
    };

    let mut report = GradCheckReport::empty();
    let ids: Vec<_> = work.ids().collect();
    for id in ids {
        let name = work.get(id).name.clone();
        for i in 0..work.value(id).len() {
            let orig = work.value(id).data()[i];
            work.value_mut(id).data_mut()[i] = orig + eps;
            let plus = eval(&work)?;
            work.value_mut(id).data_mut()[i] = orig - eps;
            let minus = eval(&work)?;
            work.value_mut(id).data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            report.observe(&name, i, analytic.grad(id).data()[i], numeric);
        }
    }
    Ok(report)
}
