use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::tape::{Tape, Var};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum LossKind {
    /// Mean squared error.
    #[default]
    Squared,
    /// Mean absolute error, subgradient 0 at 0.
    Absolute,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::Squared => "squared",
            LossKind::Absolute => "absolute",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "squared" | "mse" => Ok(LossKind::Squared),
            "absolute" | "mae" => Ok(LossKind::Absolute),
            other => Err(Error::InvalidConfig(format!("unknown loss kind `{other}`"))),
        }
    }
}

/// Mean loss over a batch of predictions, each a `[1]` or `[]` tape value.
pub fn loss_var(tape: &mut Tape, predictions: &[Var], targets: &[f64], kind: LossKind) -> Result<Var> {
    if predictions.len() != targets.len() {
        return Err(Error::Length {
            expected: predictions.len(),
            found: targets.len(),
        });
    }
    if predictions.is_empty() {
        return Err(Error::EmptyInput { op: "loss" });
    }
    let flat: Vec<Var> = predictions
        .iter()
        .map(|&p| tape.reshape(p, &[1]))
        .collect::<Result<_>>()?;
    let yhat = tape.concat(&flat, 0)?;
    let y = tape.constant(crate::tensor::Tensor::vector(targets.to_vec()))?;
    let diff = tape.sub(yhat, y)?;
    let per = match kind {
        LossKind::Squared => tape.mul(diff, diff)?,
        LossKind::Absolute => tape.abs(diff)?,
    };
    let total = tape.sum(per)?;
    tape.scale(total, 1.0 / targets.len() as f64)
}

/// Value-level loss.
pub fn loss(yhat: &[f64], y: &[f64], kind: LossKind) -> Result<f64> {
    if yhat.len() != y.len() {
        return Err(Error::Length {
            expected: yhat.len(),
            found: y.len(),
        });
    }
    if y.is_empty() {
        return Err(Error::EmptyInput { op: "loss" });
    }
    let sum: f64 = yhat
        .iter()
        .zip(y)
        .map(|(p, t)| match kind {
            LossKind::Squared => (p - t) * (p - t),
            LossKind::Absolute => (p - t).abs(),
        })
        .sum();
    Ok(sum / y.len() as f64)
}
