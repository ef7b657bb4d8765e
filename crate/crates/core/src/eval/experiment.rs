//! Shared windowing, splitting and scoring used by evaluation, ablation and
//! grid search.

use crate::data::{make_windows, sample_at, split_dataset, MinMaxScaler, Sample, SeriesDataset};
use crate::error::{Error, Result};
use crate::eval::metrics::Metrics;
use crate::model::DeepExpressModel;

/// Single-step training and validation samples plus the anchors of every
/// split, from a chronological 60/20/20 partition.
#[derive(Clone, Debug)]
pub struct ExperimentData {
    pub history: usize,
    pub half_window: usize,
    pub train: Vec<Sample>,
    pub validation: Vec<Sample>,
    pub test_anchors: Vec<usize>,
    pub validation_anchors: Vec<usize>,
}

impl ExperimentData {
    pub fn prepare(ds: &SeriesDataset, h: usize, l: usize) -> Result<Self> {
        let windows = make_windows(ds, h, l)?;
        let split = split_dataset(&windows)?;
        let anchors = |s: &[Sample]| s.iter().map(|x| x.anchor).collect::<Vec<_>>();
        Ok(Self {
            history: h,
            half_window: l,
            test_anchors: anchors(&split.test),
            validation_anchors: anchors(&split.validation),
            train: split.train,
            validation: split.validation,
        })
    }
}

/// `k`-step samples for the given anchors, skipping anchors too close to the
/// end of the series.
pub fn horizon_samples(ds: &SeriesDataset, anchors: &[usize], h: usize, l: usize, k: usize) -> Result<Vec<Sample>> {
    let samples: Vec<Sample> = anchors
        .iter()
        .filter(|&&a| a + k + l < ds.len())
        .map(|&a| sample_at(ds, a, h, l, k))
        .collect::<Result<_>>()?;
    if samples.is_empty() {
        return Err(Error::TooFewSamples { required: 1, found: 0 });
    }
    Ok(samples)
}

/// Metrics of one forecaster in scaled and original units.
#[derive(Clone, Debug, PartialEq)]
pub struct Scored {
    pub scaled: Metrics,
    pub unscaled: Metrics,
    pub samples: usize,
}

pub fn score(samples: &[Sample], preds: &[Vec<f64>], scaler: &MinMaxScaler) -> Result<Scored> {
    let truths: Vec<Vec<f64>> = samples.iter().map(|s| s.targets.clone()).collect();
    let scale = |rows: &[Vec<f64>]| -> Result<Vec<Vec<f64>>> { rows.iter().map(|r| scaler.apply_all(r)).collect() };
    Ok(Scored {
        scaled: Metrics::compute(&scale(&truths)?, &scale(preds)?)?,
        unscaled: Metrics::compute(&truths, preds)?,
        samples: samples.len(),
    })
}

/// Roll the model out `k` steps from each sample and score it.
pub fn score_model(model: &DeepExpressModel, samples: &[Sample], k: usize) -> Result<Scored> {
    let preds = model.predict_samples(samples, k)?;
    score(samples, &preds, &model.scalers().target)
}
