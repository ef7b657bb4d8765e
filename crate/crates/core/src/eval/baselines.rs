use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// `ŷ_{t+j} = y_{t+j−period}`, reusing forecasts once `j > period`.
pub fn seasonal_naive(history: &[f64], period: usize, k: usize) -> Result<Vec<f64>> {
    if period == 0 {
        return Err(Error::InvalidConfig("period must be at least 1".into()));
    }
    if history.len() < period {
        return Err(Error::SeriesTooShort {
            required: period,
            found: history.len(),
        });
    }
    let mut ext = history.to_vec();
    for _ in 0..k {
        ext.push(ext[ext.len() - period]);
    }
    Ok(ext.split_off(history.len()))
}

/// Ridge damping applied to lag coefficients when the normal equations are
/// singular.
pub const RIDGE: f64 = 1e-8;

/// `y_t = c + Σⱼ aⱼ·y_{t−j}` fitted by least squares.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearAr {
    pub intercept: f64,
    /// `coefficients[j]` multiplies `y_{t−j−1}`.
    pub coefficients: Vec<f64>,
    /// Whether the fit needed ridge damping.
    pub damped: bool,
}

impl LinearAr {
    /// Fit on `(history, next value)` pairs using the last `order` history values.
    pub fn fit(rows: &[(&[f64], f64)], order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidConfig("AR order must be at least 1".into()));
        }
        if rows.len() <= order {
            return Err(Error::TooFewSamples {
                required: order + 1,
                found: rows.len(),
            });
        }
        let n = rows.len();
        let mut x = DMatrix::<f64>::zeros(n, order + 1);
        let mut y = DVector::<f64>::zeros(n);
        for (i, (hist, target)) in rows.iter().enumerate() {
            if hist.len() < order {
                return Err(Error::SeriesTooShort {
                    required: order,
                    found: hist.len(),
                });
            }
            x[(i, 0)] = 1.0;
            for j in 0..order {
                x[(i, j + 1)] = hist[hist.len() - 1 - j];
            }
            y[i] = *target;
        }
        let xt = x.transpose();
        let gram = &xt * &x;
        let rhs = &xt * &y;
        let (beta, damped) = match gram.clone().cholesky() {
            Some(ch) if ch.l().diagonal().iter().all(|d| *d > 1e-7 * gram.diagonal().max().sqrt()) => {
                (ch.solve(&rhs), false)
            }
            _ => {
                let mut damped = gram;
                for j in 1..=order {
                    damped[(j, j)] += RIDGE;
                }
                let beta = damped
                    .lu()
                    .solve(&rhs)
                    .ok_or_else(|| Error::InvalidConfig("AR normal equations are singular".into()))?;
                (beta, true)
            }
        };
        Ok(Self {
            intercept: beta[0],
            coefficients: beta.iter().skip(1).copied().collect(),
            damped,
        })
    }

    /// Fit on every window of a single series.
    pub fn fit_series(y: &[f64], order: usize) -> Result<Self> {
        let rows: Vec<(&[f64], f64)> = (order..y.len()).map(|t| (&y[t - order..t], y[t])).collect();
        Self::fit(&rows, order)
    }

    pub fn order(&self) -> usize {
        self.coefficients.len()
    }

    /// Recursive `k`-step forecast.
    pub fn forecast(&self, history: &[f64], k: usize) -> Result<Vec<f64>> {
        let p = self.order();
        if history.len() < p {
            return Err(Error::SeriesTooShort {
                required: p,
                found: history.len(),
            });
        }
        let mut ext = history.to_vec();
        for _ in 0..k {
            let n = ext.len();
            let next = self.intercept + (0..p).map(|j| self.coefficients[j] * ext[n - 1 - j]).sum::<f64>();
            ext.push(next);
        }
        Ok(ext.split_off(history.len()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::seeded_rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn seasonal_examples() {
        let periodic: Vec<f64> = (0..28).map(|i| [3., 1., 4., 1., 5., 9., 2.][i % 7]).collect();
        let f = seasonal_naive(&periodic[..21], 7, 7).unwrap();
        assert_eq!(f, periodic[21..28]);
        assert_eq!(seasonal_naive(&[4.0; 10], 7, 3).unwrap(), vec![4.0; 3]);
        let h = [0., 0., 42., 0., 0., 0., 0., 0., 0.];
        assert_eq!(seasonal_naive(&h, 7, 1).unwrap(), vec![42.0]);
        assert_eq!(seasonal_naive(&periodic[..7], 7, 10).unwrap(), periodic[7..17]);
        assert!(seasonal_naive(&[1.0; 6], 7, 1).is_err());
    }

    #[test]
    fn recovers_ar1_coefficient() {
        let y: Vec<f64> = (0..40).map(|t| 100.0 * 0.5f64.powi(t)).collect();
        let ar = LinearAr::fit_series(&y, 1).unwrap();
        assert!((ar.coefficients[0] - 0.5).abs() < 1e-8, "{ar:?}");
        assert!(ar.intercept.abs() < 1e-8);
    }

    #[test]
    fn constant_series_forecasts_constant() {
        let y = vec![7.5; 30];
        let ar = LinearAr::fit_series(&y, 1).unwrap();
        assert!(ar.damped);
        for v in ar.forecast(&y, 5).unwrap() {
            assert!((v - 7.5).abs() < 1e-6, "{v}");
        }
    }

    #[test]
    fn white_noise_rmse_matches_sigma() {
        let sigma = 2.0;
        let normal = Normal::new(0.0, sigma).unwrap();
        let mut rng = seeded_rng(13);
        let y: Vec<f64> = (0..4000).map(|_| normal.sample(&mut rng)).collect();
        let ar = LinearAr::fit_series(&y[..2000], 3).unwrap();
        let mut sq = 0.0;
        let mut n = 0;
        for t in 2000..4000 {
            let f = ar.forecast(&y[t - 3..t], 1).unwrap()[0];
            sq += (f - y[t]).powi(2);
            n += 1;
        }
        let rmse = (sq / n as f64).sqrt();
        assert!((rmse - sigma).abs() < 0.2 * sigma, "{rmse}");
    }

    #[test]
    fn too_few_rows() {
        assert!(LinearAr::fit_series(&[1.0, 2.0], 2).is_err());
    }
}
