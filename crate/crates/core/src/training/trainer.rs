use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::config::KeyValues;
use crate::data::Sample;
use crate::error::{Error, Result};
use crate::layers::{seeded_rng, DropoutCtx};
use crate::model::{DeepExpressModel, Prepared, Scalers};
use crate::params::ParamStore;
use crate::tape::Tape;
use crate::tensor::Tensor;
use crate::training::adam::{AdamConfig, AdamState};
use crate::training::loss::{loss, loss_var, LossKind};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Stop after this many epochs without a validation improvement.
    pub patience: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 64,
            adam: AdamConfig::default(),
            seed: 0,
            patience: None,
        }
    }
}

impl TrainConfig {
    pub const KEYS: &'static [&'static str] = &[
        "epochs",
        "batch_size",
        "learning_rate",
        "beta1",
        "beta2",
        "epsilon",
        "seed",
        "patience",
    ];

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig("epochs and batch_size must be at least 1".into()));
        }
        let a = &self.adam;
        if !(a.learning_rate >= 0.0 && a.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("learning_rate must be finite and nonnegative".into()));
        }
        if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || a.epsilon <= 0.0 {
            return Err(Error::InvalidConfig("Adam needs beta1, beta2 in [0, 1) and epsilon > 0".into()));
        }
        Ok(())
    }

    pub fn from_config(kv: &KeyValues) -> Result<Self> {
        let d = Self::default();
        let cfg = Self {
            epochs: kv.get_or("epochs", d.epochs)?,
            batch_size: kv.get_or("batch_size", d.batch_size)?,
            adam: AdamConfig {
                learning_rate: kv.get_or("learning_rate", d.adam.learning_rate)?,
                beta1: kv.get_or("beta1", d.adam.beta1)?,
                beta2: kv.get_or("beta2", d.adam.beta2)?,
                epsilon: kv.get_or("epsilon", d.adam.epsilon)?,
            },
            seed: kv.get_or("seed", d.seed)?,
            patience: kv.get("patience")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean batch loss over the epoch, dropout on.
    pub train_loss: f64,
    /// Validation loss with dropout off after the epoch's updates.
    pub val_loss: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation loss.
    pub model: DeepExpressModel,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
}

impl TrainOutcome {
    pub fn best_val_loss(&self) -> f64 {
        self.history[self.best_epoch].val_loss
    }

    pub fn final_record(&self) -> &EpochRecord {
        self.history.last().expect("at least one epoch")
    }
}

/// Mix a seed with a position so per-sample dropout streams are independent.
fn stream_seed(seed: u64, epoch: usize, index: usize) -> u64 {
    let mut z = seed ^ ((epoch as u64) << 32 | index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Loss and parameter gradients for one prepared sample.
fn sample_gradients(
    model: &DeepExpressModel,
    p: &Prepared,
    kind: LossKind,
    dropout: Option<DropoutCtx>,
) -> Result<(f64, Vec<Tensor>)> {
    let store = model.store();
    let mut tape = Tape::new();
    let bind = store.bind(&mut tape)?;
    let mut dropout = dropout;
    let y = model.forward_on(&mut tape, &bind, &p.history, &p.window, dropout.as_mut())?;
    let l = loss_var(&mut tape, &[y], &[p.target], kind)?;
    tape.backward(l)?;
    let grads = bind
        .vars()
        .iter()
        .zip(store.iter())
        .map(|(&v, (_, param))| tape.grad(v).cloned().unwrap_or_else(|| Tensor::zeros(param.value.shape())))
        .collect();
    Ok((tape.value(l).data()[0], grads))
}

/// Accumulate `Σᵢ gᵢ / B` into the store gradients in sample order.
fn accumulate(store: &mut ParamStore, per_sample: &[Vec<Tensor>]) {
    let scale = 1.0 / per_sample.len() as f64;
    let ids: Vec<_> = store.ids().collect();
    for grads in per_sample {
        for (id, g) in ids.iter().zip(grads) {
            for (acc, x) in store.grad_mut(*id).data_mut().iter_mut().zip(g.data()) {
                *acc += x * scale;
            }
        }
    }
}

/// Mean eval-mode loss over prepared samples.
pub fn evaluate_loss(model: &DeepExpressModel, prepared: &[Prepared]) -> Result<f64> {
    let preds = prepared
        .par_iter()
        .map(|p| model.predict_scaled(&p.history, &p.window))
        .collect::<Result<Vec<_>>>()?;
    let targets: Vec<f64> = prepared.iter().map(|p| p.target).collect();
    loss(&preds, &targets, model.config().loss)
}

/// One optimisation pass over a batch: zero, forward/backward per sample,
/// average, Adam update. Returns the batch loss.
pub fn train_batch(
    model: &mut DeepExpressModel,
    adam: &mut AdamState,
    batch: &[&Prepared],
    cfg: &TrainConfig,
    epoch: usize,
    batch_index: usize,
    offset: usize,
) -> Result<f64> {
    let kind = model.config().loss;
    let rate = model.config().dropout;
    let results = {
        let m = &*model;
        batch
            .par_iter()
            .enumerate()
            .map(|(i, p)| {
                let ctx = DropoutCtx::train(rate, stream_seed(cfg.seed, epoch, offset + i))?;
                sample_gradients(m, p, kind, Some(ctx))
            })
            .collect::<Vec<Result<_>>>()
    };
    let mut losses = Vec::with_capacity(batch.len());
    let mut grads = Vec::with_capacity(batch.len());
    for r in results {
        match r {
            Ok((l, g)) => {
                losses.push(l);
                grads.push(g);
            }
            Err(Error::NonFinite { .. }) => {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: batch_index,
                })
            }
            Err(e) => return Err(e),
        }
    }
    let batch_loss = losses.iter().sum::<f64>() / losses.len() as f64;
    if !batch_loss.is_finite() {
        return Err(Error::NonFiniteLoss {
            epoch,
            batch: batch_index,
        });
    }
    let store = model.store_mut();
    store.zero_grads();
    accumulate(store, &grads);
    adam.step(store, &cfg.adam)?;
    Ok(batch_loss)
}

/// Fit scalers on the training samples, then optimise with shuffled
/// mini-batches, keeping the parameters with the best validation loss.
pub fn train(
    mut model: DeepExpressModel,
    train_samples: &[Sample],
    val_samples: &[Sample],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_samples.is_empty() || val_samples.is_empty() {
        return Err(Error::TooFewSamples {
            required: 1,
            found: train_samples.len().min(val_samples.len()),
        });
    }
    let scalers = Scalers::fit(model.schema(), train_samples)?;
    model.set_scalers(scalers)?;
    let prep = |s: &[Sample]| s.iter().map(|x| model.prepare(x)).collect::<Result<Vec<_>>>();
    let train_set = prep(train_samples)?;
    let val_set = prep(val_samples)?;

    let mut adam = AdamState::new(model.store());
    let mut rng = seeded_rng(cfg.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, f64, ParamStore)> = None;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&Prepared> = chunk.iter().map(|&i| &train_set[i]).collect();
            total += train_batch(&mut model, &mut adam, &batch, cfg, epoch, b, b * cfg.batch_size)?;
            batches += 1;
        }
        let val_loss = evaluate_loss(&model, &val_set)?;
        history.push(EpochRecord {
            epoch,
            train_loss: total / batches as f64,
            val_loss,
        });
        if best.as_ref().is_none_or(|(_, v, _)| val_loss < *v) {
            best = Some((epoch, val_loss, model.store().clone()));
        }
        let best_epoch = best.as_ref().map(|b| b.0).unwrap_or(0);
        if cfg.patience.is_some_and(|p| epoch - best_epoch >= p) {
            break;
        }
    }

    let (best_epoch, _, params) = best.expect("at least one epoch ran");
    *model.store_mut() = params;
    model.store_mut().zero_grads();
    Ok(TrainOutcome {
        model,
        history,
        best_epoch,
    })
}
