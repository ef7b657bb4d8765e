use crate::data::dataset::SeriesDataset;
use crate::error::{Error, Result};
use crate::hfr::FeatureValue;

/// One forecasting instance anchored at day `t` (0-based index `anchor`).
/// Values are raw; scaling happens inside the model.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub anchor: usize,
    /// `y_{t−h+1} … y_t`.
    pub history: Vec<f64>,
    /// Features of days `t+1−l … t+k+l`.
    pub features: Vec<Vec<FeatureValue>>,
    /// `y_{t+1} … y_{t+k}`.
    pub targets: Vec<f64>,
    pub half_window: usize,
}

impl Sample {
    pub fn horizon(&self) -> usize {
        self.targets.len()
    }

    /// Feature window of forecast step `j` (0-based): days `t+1+j−l … t+1+j+l`.
    pub fn window(&self, step: usize) -> &[Vec<FeatureValue>] {
        &self.features[step..step + 2 * self.half_window + 1]
    }

    /// Index of day `t+1` in the source dataset.
    pub fn target_index(&self) -> usize {
        self.anchor + 1
    }
}

/// Minimum series length for a single `k`-step sample.
pub fn required_length(h: usize, l: usize, k: usize) -> usize {
    h + l + k
}

/// Single-step samples: count `T − h − l`.
pub fn make_windows(ds: &SeriesDataset, h: usize, l: usize) -> Result<Vec<Sample>> {
    make_horizon_windows(ds, h, l, 1)
}

/// `k`-step samples for every anchor whose targets and feature windows lie in
/// the series: count `T − h − l − k + 1`.
pub fn make_horizon_windows(ds: &SeriesDataset, h: usize, l: usize, k: usize) -> Result<Vec<Sample>> {
    check_shape(h, l, k)?;
    let t = ds.len();
    let required = required_length(h, l, k);
    if t < required {
        return Err(Error::SeriesTooShort { required, found: t });
    }
    (h - 1..=t - l - k - 1).map(|a| sample_at(ds, a, h, l, k)).collect()
}

/// The `k`-step sample anchored at index `anchor`.
pub fn sample_at(ds: &SeriesDataset, anchor: usize, h: usize, l: usize, k: usize) -> Result<Sample> {
    check_shape(h, l, k)?;
    if anchor + 1 < h || anchor + k + l >= ds.len() {
        return Err(Error::InvalidConfig(format!(
            "anchor {anchor} leaves no room for history {h}, half window {l}, horizon {k} in {} days",
            ds.len()
        )));
    }
    let recs = ds.records();
    Ok(Sample {
        anchor,
        history: recs[anchor + 1 - h..=anchor].iter().map(|r| r.y).collect(),
        features: recs[anchor + 1 - l..=anchor + k + l].iter().map(|r| r.features()).collect(),
        targets: recs[anchor + 1..=anchor + k].iter().map(|r| r.y).collect(),
        half_window: l,
    })
}

fn check_shape(h: usize, l: usize, k: usize) -> Result<()> {
    if h == 0 || k == 0 {
        return Err(Error::InvalidConfig("history and horizon must be at least 1".into()));
    }
    if l > h {
        return Err(Error::InvalidConfig(format!(
            "half window {l} exceeds history {h}; the first window would start before the series"
        )));
    }
    Ok(())
}

/// Contiguous chronological partition, in order train | test | validation.
#[derive(Clone, Debug, PartialEq)]
pub struct Split<T> {
    pub train: Vec<T>,
    pub test: Vec<T>,
    pub validation: Vec<T>,
}

/// Sizes of a 60/20/20 split of `n` items, rounded to sum to `n`.
pub fn split_sizes(n: usize) -> Result<(usize, usize, usize)> {
    if n < 5 {
        return Err(Error::TooFewSamples { required: 5, found: n });
    }
    let train = (n as f64 * 0.6).round() as usize;
    let test = (n as f64 * 0.2).round() as usize;
    Ok((train, test, n - train - test))
}

pub fn split_dataset<T: Clone>(items: &[T]) -> Result<Split<T>> {
    let (train, test, _) = split_sizes(items.len())?;
    Ok(Split {
        train: items[..train].to_vec(),
        test: items[train..train + test].to_vec(),
        validation: items[train + test..].to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::dataset::DayRecord;
    use chrono::NaiveDate;

    fn series(t: usize) -> SeriesDataset {
        let start = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        SeriesDataset::new(
            (0..t)
                .map(|i| DayRecord {
                    date: start + chrono::Days::new(i as u64),
                    y: i as f64,
                    temperature: 100.0 + i as f64,
                    weather: 0,
                    holiday: 0,
                    week: i % 7,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn count_examples() {
        assert_eq!(make_windows(&series(30), 21, 3).unwrap().len(), 6);
        assert_eq!(make_windows(&series(25), 21, 3).unwrap().len(), 1);
        assert!(matches!(
            make_windows(&series(24), 21, 3),
            Err(Error::SeriesTooShort { required: 25, found: 24 })
        ));
    }

    #[test]
    fn window_contents() {
        let s = &make_windows(&series(30), 21, 3).unwrap()[0];
        assert_eq!(s.anchor, 20);
        assert_eq!(s.history, (0..21).map(f64::from).collect::<Vec<_>>());
        assert_eq!(s.targets, vec![21.0]);
        let temps: Vec<f64> = s
            .window(0)
            .iter()
            .map(|d| match d[0] {
                FeatureValue::Numerical(x) => x - 100.0,
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(temps, vec![18., 19., 20., 21., 22., 23., 24.]);
    }

    #[test]
    fn zero_half_window_is_target_day() {
        let s = &make_windows(&series(10), 4, 0).unwrap()[2];
        assert_eq!(s.window(0).len(), 1);
        assert_eq!(s.window(0)[0][0], FeatureValue::Numerical(100.0 + s.target_index() as f64));
    }

    #[test]
    fn horizon_windows() {
        let ws = make_horizon_windows(&series(30), 5, 2, 3).unwrap();
        assert_eq!(ws.len(), 30 - 5 - 2 - 3 + 1);
        let last = ws.last().unwrap();
        assert_eq!(last.targets, vec![25., 26., 27.]);
        assert_eq!(last.features.len(), 3 + 4);
        assert_eq!(last.window(2).len(), 5);
    }

    #[test]
    fn split_examples() {
        let ten: Vec<usize> = (0..10).collect();
        let s = split_dataset(&ten).unwrap();
        assert_eq!((s.train.len(), s.test.len(), s.validation.len()), (6, 2, 2));
        assert!(s.train.iter().max() < s.test.iter().min());
        assert!(s.test.iter().max() < s.validation.iter().min());
        assert_eq!(split_sizes(5).unwrap(), (3, 1, 1));
        assert!(split_sizes(4).is_err());
    }
}
