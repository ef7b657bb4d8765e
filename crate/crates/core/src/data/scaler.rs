use crate::error::{Error, Result};

/// Observed range of one column.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScalerState {
    pub min: f64,
    pub max: f64,
}

impl ScalerState {
    pub fn is_constant(&self) -> bool {
        self.max == self.min
    }

    /// A constant column uses a unit range, so its observed value maps to 0.
    fn range(&self) -> f64 {
        if self.is_constant() {
            1.0
        } else {
            self.max - self.min
        }
    }
}

/// Min-max scaler. Values outside the fitted range extrapolate linearly.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MinMaxScaler {
    state: Option<ScalerState>,
}

impl MinMaxScaler {
    pub fn fit(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput { op: "scaler_fit" });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { op: "scaler_fit" });
        }
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(Self::from_state(ScalerState { min, max }))
    }

    pub fn from_state(state: ScalerState) -> Self {
        Self { state: Some(state) }
    }

    /// Maps `[0, 1]` to itself.
    pub fn identity() -> Self {
        Self::from_state(ScalerState { min: 0.0, max: 1.0 })
    }

    pub fn state(&self) -> Option<ScalerState> {
        self.state
    }

    pub fn is_constant(&self) -> bool {
        self.state.is_some_and(|s| s.is_constant())
    }

    pub fn apply(&self, x: f64) -> Result<f64> {
        let s = self.state.ok_or(Error::ScalerNotFitted)?;
        Ok((x - s.min) / s.range())
    }

    pub fn invert(&self, x: f64) -> Result<f64> {
        let s = self.state.ok_or(Error::ScalerNotFitted)?;
        Ok(x * s.range() + s.min)
    }

    pub fn apply_all(&self, xs: &[f64]) -> Result<Vec<f64>> {
        xs.iter().map(|&x| self.apply(x)).collect()
    }

    pub fn invert_all(&self, xs: &[f64]) -> Result<Vec<f64>> {
        xs.iter().map(|&x| self.invert(x)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_apply_invert() {
        let s = MinMaxScaler::fit(&[10., 20., 30.]).unwrap();
        assert_eq!(s.apply(20.).unwrap(), 0.5);
        assert_eq!(s.apply(10.).unwrap(), 0.0);
        assert_eq!(s.apply(30.).unwrap(), 1.0);
        for x in [10., 17., 30.] {
            assert!((s.invert(s.apply(x).unwrap()).unwrap() - x).abs() < 1e-12);
        }
        assert_eq!(s.apply(40.).unwrap(), 1.5);
        assert!(!s.is_constant());
    }

    #[test]
    fn constant_column() {
        let s = MinMaxScaler::fit(&[5., 5., 5.]).unwrap();
        assert!(s.is_constant());
        assert_eq!(s.apply(5.).unwrap(), 0.0);
        assert_eq!(s.invert(0.0).unwrap(), 5.0);
    }

    #[test]
    fn unfitted_and_empty() {
        assert!(matches!(MinMaxScaler::default().invert(0.3), Err(Error::ScalerNotFitted)));
        assert!(matches!(MinMaxScaler::default().apply(0.3), Err(Error::ScalerNotFitted)));
        assert!(MinMaxScaler::fit(&[]).is_err());
    }
}
