use crate::error::{Error, Result};

fn check(y: &[f64], yhat: &[f64]) -> Result<()> {
    if y.len() != yhat.len() {
        return Err(Error::Length {
            expected: y.len(),
            found: yhat.len(),
        });
    }
    if y.is_empty() {
        return Err(Error::EmptyInput { op: "metric" });
    }
    Ok(())
}

/// `sqrt((1/N) Σ (y − ŷ)²)`.
pub fn rmse(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check(y, yhat)?;
    let sq: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((sq / y.len() as f64).sqrt())
}

/// `(1/N) Σ |y − ŷ|`.
pub fn mae(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check(y, yhat)?;
    let abs: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b).abs()).sum();
    Ok(abs / y.len() as f64)
}

/// RMSE and MAE pooled over all forecast steps and per step.
#[derive(Clone, Debug, PartialEq)]
pub struct Metrics {
    pub rmse: f64,
    pub mae: f64,
    pub per_step_rmse: Vec<f64>,
    pub per_step_mae: Vec<f64>,
}

impl Metrics {
    /// `truths[i]` and `preds[i]` are the k-step series of sample `i`.
    pub fn compute(truths: &[Vec<f64>], preds: &[Vec<f64>]) -> Result<Self> {
        if truths.len() != preds.len() {
            return Err(Error::Length {
                expected: truths.len(),
                found: preds.len(),
            });
        }
        let k = truths.first().map(Vec::len).ok_or(Error::EmptyInput { op: "metric" })?;
        for (t, p) in truths.iter().zip(preds) {
            if t.len() != k || p.len() != k {
                return Err(Error::Length {
                    expected: k,
                    found: t.len().max(p.len()),
                });
            }
        }
        let flat = |v: &[Vec<f64>]| v.iter().flatten().copied().collect::<Vec<_>>();
        let (ft, fp) = (flat(truths), flat(preds));
        let column = |v: &[Vec<f64>], j: usize| v.iter().map(|r| r[j]).collect::<Vec<_>>();
        let mut per_step_rmse = Vec::with_capacity(k);
        let mut per_step_mae = Vec::with_capacity(k);
        for j in 0..k {
            let (t, p) = (column(truths, j), column(preds, j));
            per_step_rmse.push(rmse(&t, &p)?);
            per_step_mae.push(mae(&t, &p)?);
        }
        let m = Self {
            rmse: rmse(&ft, &fp)?,
            mae: mae(&ft, &fp)?,
            per_step_rmse,
            per_step_mae,
        };
        m.assert_power_mean();
        Ok(m)
    }

    /// Component-wise mean over several runs.
    pub fn mean(runs: &[Metrics]) -> Result<Self> {
        let first = runs.first().ok_or(Error::EmptyInput { op: "metric mean" })?;
        let n = runs.len() as f64;
        let avg = |f: &dyn Fn(&Metrics) -> f64| runs.iter().map(f).sum::<f64>() / n;
        let k = first.per_step_rmse.len();
        let m = Self {
            rmse: avg(&|m| m.rmse),
            mae: avg(&|m| m.mae),
            per_step_rmse: (0..k).map(|j| avg(&|m| m.per_step_rmse[j])).collect(),
            per_step_mae: (0..k).map(|j| avg(&|m| m.per_step_mae[j])).collect(),
        };
        m.assert_power_mean();
        Ok(m)
    }

    fn assert_power_mean(&self) {
        let ok = |r: f64, a: f64| r >= 0.0 && a >= 0.0 && r >= a * (1.0 - 1e-12);
        assert!(ok(self.rmse, self.mae), "rmse {} < mae {}", self.rmse, self.mae);
        for (r, a) in self.per_step_rmse.iter().zip(&self.per_step_mae) {
            assert!(ok(*r, *a), "rmse {r} < mae {a}");
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(rmse(&[1., 2.], &[1., 2.]).unwrap(), 0.0);
        assert_eq!(mae(&[1., 2.], &[1., 2.]).unwrap(), 0.0);
        assert!((rmse(&[3., 4.], &[1., 1.]).unwrap() - 6.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(mae(&[3., 4.], &[1., 1.]).unwrap(), 2.5);
        assert_eq!(rmse(&[0., 0.], &[1., 1.]).unwrap(), 1.0);
        assert!(mae(&[3., 4.], &[1., 1.]).unwrap() <= rmse(&[3., 4.], &[1., 1.]).unwrap());
        assert!(rmse(&[], &[]).is_err());
        assert!(mae(&[1.], &[1., 2.]).is_err());
    }

    #[test]
    fn pooled_and_per_step() {
        let truths = vec![vec![1., 2.], vec![3., 4.]];
        let preds = vec![vec![1., 0.], vec![2., 4.]];
        let m = Metrics::compute(&truths, &preds).unwrap();
        assert_eq!(m.per_step_mae, vec![0.5, 1.0]);
        assert!((m.rmse - (5.0f64 / 4.0).sqrt()).abs() < 1e-15);
        assert_eq!(m.mae, 0.75);
        let mean = Metrics::mean(&[m.clone(), m.clone()]).unwrap();
        assert_eq!(mean, m);
    }
}
