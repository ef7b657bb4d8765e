//! The full encoder / attention / decoder network, its ablation variants and
//! the recursive multi-step rollout.

use std::fmt;
use std::str::FromStr;

use crate::attention::{joint_fuse, uniform_feature_context, FeatureAttention, TemporalAttention};
use crate::config::KeyValues;
use crate::data::{MinMaxScaler, Sample, SeriesDataset};
use crate::error::{Error, Result};
use crate::hfr::{FeatureEncoder, FeatureKind, FeatureSchema, FeatureValue, Hfr, PlainRepresentation};
use crate::layers::{init_uniform, seeded_rng, Activation, DropoutCtx, LstmCell, Mlp};
use crate::params::{Binding, ParamId, ParamStore};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;
use crate::training::loss::LossKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    /// HFR embeddings, temporal and feature attention, joint fusion.
    Full,
    /// Plain feature representation, attention unchanged.
    NoHfr,
    /// HFR embeddings; uniform feature weights and the last encoder state in
    /// place of the temporal context.
    NoJta,
    /// No feature input at all: the feature context is a constant uniform
    /// vector and the temporal context is the last encoder state.
    NoBoth,
    /// Decoder input is the last encoder state.
    PlainSeq2seq,
    /// Decoder input is the temporal context concatenated with the scaled raw
    /// features of the window (categoricals one-hot).
    AttSeq2seq,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Full,
        Variant::NoHfr,
        Variant::NoJta,
        Variant::NoBoth,
        Variant::PlainSeq2seq,
        Variant::AttSeq2seq,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoHfr => "no_hfr",
            Variant::NoJta => "no_jta",
            Variant::NoBoth => "no_both",
            Variant::PlainSeq2seq => "plain_seq2seq",
            Variant::AttSeq2seq => "att_seq2seq",
        }
    }

    fn uses_temporal_attention(self) -> bool {
        matches!(self, Variant::Full | Variant::NoHfr | Variant::AttSeq2seq)
    }

    fn uses_feature_attention(self) -> bool {
        matches!(self, Variant::Full | Variant::NoHfr)
    }

    fn uses_joint_projection(self) -> bool {
        matches!(self, Variant::Full | Variant::NoHfr | Variant::NoJta | Variant::NoBoth)
    }

    /// Whether predictions depend on feature values.
    pub fn reads_features(self) -> bool {
        !matches!(self, Variant::NoBoth | Variant::PlainSeq2seq)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown variant `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    /// h: history length in days.
    pub history: usize,
    /// l: the feature window spans 2l+1 days.
    pub half_window: usize,
    /// k: forecast horizon.
    pub horizon: usize,
    pub enc_hidden: usize,
    pub dec_hidden: usize,
    pub score_dim: usize,
    /// e: per-feature embedding width.
    pub embedding_dim: usize,
    /// Hidden width of the numerical-feature perceptrons.
    pub numeric_hidden: usize,
    /// Hidden width of the prediction head.
    pub head_hidden: usize,
    pub dropout: f64,
    pub output_activation: Activation,
    pub loss: LossKind,
    pub variant: Variant,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            history: 21,
            half_window: 3,
            horizon: 3,
            enc_hidden: 16,
            dec_hidden: 16,
            score_dim: 16,
            embedding_dim: 4,
            numeric_hidden: 8,
            head_hidden: 16,
            dropout: 0.2,
            output_activation: Activation::Identity,
            loss: LossKind::Squared,
            variant: Variant::Full,
        }
    }
}

impl ModelConfig {
    pub const KEYS: &'static [&'static str] = &[
        "history",
        "half_window",
        "horizon",
        "enc_hidden",
        "dec_hidden",
        "score_dim",
        "embedding_dim",
        "numeric_hidden",
        "head_hidden",
        "dropout",
        "output_activation",
        "loss",
        "variant",
    ];

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        for (name, v) in [
            ("history", self.history),
            ("horizon", self.horizon),
            ("enc_hidden", self.enc_hidden),
            ("score_dim", self.score_dim),
            ("embedding_dim", self.embedding_dim),
            ("numeric_hidden", self.numeric_hidden),
            ("head_hidden", self.head_hidden),
        ] {
            if v == 0 {
                return bad(format!("{name} must be at least 1"));
            }
        }
        if self.dec_hidden != self.enc_hidden {
            return bad(format!(
                "dec_hidden ({}) must equal enc_hidden ({})",
                self.dec_hidden, self.enc_hidden
            ));
        }
        if self.half_window > self.history {
            return bad(format!(
                "half_window ({}) must not exceed history ({})",
                self.half_window, self.history
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        Ok(())
    }

    /// Defaults overridden by any model keys in `kv`; other keys are ignored.
    pub fn from_config(kv: &KeyValues) -> Result<Self> {
        let d = Self::default();
        let enc_hidden = kv.get_or("enc_hidden", d.enc_hidden)?;
        let cfg = Self {
            history: kv.get_or("history", d.history)?,
            half_window: kv.get_or("half_window", d.half_window)?,
            horizon: kv.get_or("horizon", d.horizon)?,
            enc_hidden,
            dec_hidden: kv.get_or("dec_hidden", enc_hidden)?,
            score_dim: kv.get_or("score_dim", enc_hidden)?,
            embedding_dim: kv.get_or("embedding_dim", d.embedding_dim)?,
            numeric_hidden: kv.get_or("numeric_hidden", d.numeric_hidden)?,
            head_hidden: kv.get_or("head_hidden", d.head_hidden)?,
            dropout: kv.get_or("dropout", d.dropout)?,
            output_activation: kv.get_or("output_activation", d.output_activation)?,
            loss: kv.get_or("loss", d.loss)?,
            variant: kv.get_or("variant", d.variant)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_config(&self) -> KeyValues {
        let mut kv = KeyValues::default();
        kv.insert("history", self.history);
        kv.insert("half_window", self.half_window);
        kv.insert("horizon", self.horizon);
        kv.insert("enc_hidden", self.enc_hidden);
        kv.insert("dec_hidden", self.dec_hidden);
        kv.insert("score_dim", self.score_dim);
        kv.insert("embedding_dim", self.embedding_dim);
        kv.insert("numeric_hidden", self.numeric_hidden);
        kv.insert("head_hidden", self.head_hidden);
        kv.insert("dropout", format!("{:?}", self.dropout));
        kv.insert("output_activation", self.output_activation);
        kv.insert("loss", self.loss);
        kv.insert("variant", self.variant);
        kv
    }

    pub fn window_len(&self) -> usize {
        2 * self.half_window + 1
    }
}

/// Scalers for the target and each numerical feature, fitted on training data.
#[derive(Clone, Debug, PartialEq)]
pub struct Scalers {
    pub target: MinMaxScaler,
    /// Aligned with the schema; `None` for categorical features.
    pub features: Vec<Option<MinMaxScaler>>,
}

impl Scalers {
    pub fn identity(schema: &FeatureSchema) -> Self {
        Self {
            target: MinMaxScaler::identity(),
            features: schema
                .features()
                .iter()
                .map(|f| (f.kind == FeatureKind::Numerical).then(MinMaxScaler::identity))
                .collect(),
        }
    }

    /// Fit on every target and feature value the samples contain.
    pub fn fit(schema: &FeatureSchema, samples: &[Sample]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyInput { op: "scaler_fit" });
        }
        let ys: Vec<f64> = samples
            .iter()
            .flat_map(|s| s.history.iter().chain(&s.targets).copied())
            .collect();
        let mut features = Vec::with_capacity(schema.len());
        for (i, f) in schema.features().iter().enumerate() {
            if f.kind != FeatureKind::Numerical {
                features.push(None);
                continue;
            }
            let xs: Vec<f64> = samples
                .iter()
                .flat_map(|s| s.features.iter())
                .filter_map(|day| match day.get(i) {
                    Some(FeatureValue::Numerical(x)) => Some(*x),
                    _ => None,
                })
                .collect();
            features.push(Some(MinMaxScaler::fit(&xs)?));
        }
        Ok(Self {
            target: MinMaxScaler::fit(&ys)?,
            features,
        })
    }

    pub fn scale_targets(&self, ys: &[f64]) -> Result<Vec<f64>> {
        self.target.apply_all(ys)
    }

    pub fn scale_day(&self, day: &[FeatureValue]) -> Result<Vec<FeatureValue>> {
        day.iter()
            .zip(&self.features)
            .map(|(v, s)| match (v, s) {
                (FeatureValue::Numerical(x), Some(s)) => Ok(FeatureValue::Numerical(s.apply(*x)?)),
                _ => Ok(*v),
            })
            .collect()
    }
}

/// Supplies raw feature days relative to the anchor day `t`: offset 1 is the
/// first forecast day.
pub trait FeatureProvider {
    fn day(&self, offset: isize) -> Option<Vec<FeatureValue>>;

    fn describe(&self, offset: isize) -> String {
        format!("day t{offset:+}")
    }
}

impl FeatureProvider for Sample {
    fn day(&self, offset: isize) -> Option<Vec<FeatureValue>> {
        let idx = offset - 1 + self.half_window as isize;
        usize::try_from(idx).ok().and_then(|i| self.features.get(i).cloned())
    }
}

/// Features read straight from a dataset, relative to the day at `anchor`.
#[derive(Clone, Copy, Debug)]
pub struct SeriesProvider<'a> {
    pub dataset: &'a SeriesDataset,
    pub anchor: usize,
}

impl FeatureProvider for SeriesProvider<'_> {
    fn day(&self, offset: isize) -> Option<Vec<FeatureValue>> {
        let idx = self.anchor as isize + offset;
        usize::try_from(idx)
            .ok()
            .and_then(|i| self.dataset.records().get(i))
            .map(|r| r.features())
    }

    fn describe(&self, offset: isize) -> String {
        let base = self.dataset.date(self.anchor);
        let days = chrono::Days::new(offset.unsigned_abs() as u64);
        let date = if offset < 0 { base - days } else { base + days };
        format!("day t{offset:+} ({date})")
    }
}

/// Scaled inputs of one training instance.
#[derive(Clone, Debug, PartialEq)]
pub struct Prepared {
    pub history: Vec<f64>,
    pub window: Vec<Vec<FeatureValue>>,
    pub target: f64,
}

/// Encoder outputs on a tape.
#[derive(Clone, Copy, Debug)]
pub struct Encoded {
    /// `[h × enc_hidden]`; present only when temporal attention is used.
    pub states: Option<Var>,
    pub h_last: Var,
    pub c_last: Var,
}

#[derive(Clone, Debug)]
pub struct DeepExpressModel {
    config: ModelConfig,
    schema: FeatureSchema,
    store: ParamStore,
    scalers: Scalers,
    encoder: LstmCell,
    features: Option<FeatureEncoder>,
    temporal: Option<TemporalAttention>,
    feature_attention: Option<FeatureAttention>,
    w_z: Option<ParamId>,
    decoder: LstmCell,
    head: Mlp,
}

impl DeepExpressModel {
    /// Deterministic initialisation; scalers start as the identity.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let schema = FeatureSchema::express(config.embedding_dim);
        let mut rng = seeded_rng(seed);
        let mut store = ParamStore::new();
        let v = config.variant;
        let hidden = config.enc_hidden;
        let m = schema.window_dim(config.half_window);

        let encoder = LstmCell::register(&mut store, "encoder", 1, hidden, &mut rng)?;
        let features = match v {
            Variant::Full | Variant::NoJta => Some(FeatureEncoder::Heterogeneous(Hfr::register(
                &mut store,
                &schema,
                config.numeric_hidden,
                &mut rng,
            )?)),
            Variant::NoHfr => Some(FeatureEncoder::Plain(PlainRepresentation::register(
                &mut store, &schema, &mut rng,
            )?)),
            _ => None,
        };
        let temporal = if v.uses_temporal_attention() {
            Some(TemporalAttention::register(
                &mut store,
                "temporal",
                config.score_dim,
                config.dec_hidden,
                hidden,
                &mut rng,
            )?)
        } else {
            None
        };
        let feature_attention = if v.uses_feature_attention() {
            Some(FeatureAttention::register(
                &mut store,
                "feature",
                config.score_dim,
                config.dec_hidden,
                &mut rng,
            )?)
        } else {
            None
        };
        let w_z = if v.uses_joint_projection() {
            Some(store.register("joint.w_z", init_uniform(&mut rng, &[hidden, m], m))?)
        } else {
            None
        };
        let decoder_input = match v {
            Variant::AttSeq2seq => hidden + raw_day_width(&schema) * config.window_len(),
            _ => hidden,
        };
        let decoder = LstmCell::register(&mut store, "decoder", decoder_input, config.dec_hidden, &mut rng)?;
        let head = Mlp::register(
            &mut store,
            "head",
            config.dec_hidden,
            config.head_hidden,
            1,
            Activation::Sigmoid,
            config.output_activation,
            &mut rng,
        )?;
        Ok(Self {
            config: config.clone(),
            scalers: Scalers::identity(&schema),
            schema,
            store,
            encoder,
            features,
            temporal,
            feature_attention,
            w_z,
            decoder,
            head,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn scalers(&self) -> &Scalers {
        &self.scalers
    }

    pub fn set_scalers(&mut self, scalers: Scalers) -> Result<()> {
        if scalers.features.len() != self.schema.len() {
            return Err(Error::Length {
                expected: self.schema.len(),
                found: scalers.features.len(),
            });
        }
        self.scalers = scalers;
        Ok(())
    }

    pub fn temporal_attention(&self) -> Option<&TemporalAttention> {
        self.temporal.as_ref()
    }

    pub fn feature_attention(&self) -> Option<&FeatureAttention> {
        self.feature_attention.as_ref()
    }

    /// Unrolls the encoder from a zero state over a scaled history.
    pub fn encode_on(&self, tape: &mut Tape, bind: &Binding, history: &[f64]) -> Result<Encoded> {
        if history.len() != self.config.history {
            return Err(Error::Length {
                expected: self.config.history,
                found: history.len(),
            });
        }
        let hidden = self.config.enc_hidden;
        let mut h = tape.constant(Tensor::zeros(&[hidden]))?;
        let mut c = tape.constant(Tensor::zeros(&[hidden]))?;
        let keep_states = self.temporal.is_some();
        let mut rows = Vec::new();
        for &y in history {
            let x = tape.constant(Tensor::vector(vec![y]))?;
            (h, c) = self.encoder.step(tape, bind, x, h, c)?;
            if keep_states {
                rows.push(tape.reshape(h, &[1, hidden])?);
            }
        }
        let states = if keep_states { Some(tape.concat(&rows, 0)?) } else { None };
        Ok(Encoded {
            states,
            h_last: h,
            c_last: c,
        })
    }

    /// The decoder input `z` for one step.
    pub fn decoder_input(
        &self,
        tape: &mut Tape,
        bind: &Binding,
        enc: &Encoded,
        s_prev: Var,
        window: &[Vec<FeatureValue>],
    ) -> Result<Var> {
        let l = self.config.half_window;
        let temporal_context = |tape: &mut Tape| -> Result<Var> {
            let attn = self.temporal.as_ref().expect("variant registers temporal attention");
            let states = enc.states.expect("states kept when temporal attention is used");
            Ok(attn.attend(tape, bind, s_prev, states)?.1)
        };
        match self.config.variant {
            Variant::Full | Variant::NoHfr => {
                let c_h = temporal_context(tape)?;
                let d = self.represent(tape, bind, window)?;
                let attn = self.feature_attention.as_ref().expect("variant registers feature attention");
                let (_, c_d) = attn.attend(tape, bind, s_prev, d)?;
                joint_fuse(tape, c_h, c_d, bind[self.w_z.expect("joint projection")])
            }
            Variant::NoJta => {
                let d = self.represent(tape, bind, window)?;
                let c_d = uniform_feature_context(tape, d)?;
                joint_fuse(tape, enc.h_last, c_d, bind[self.w_z.expect("joint projection")])
            }
            Variant::NoBoth => {
                let m = self.schema.window_dim(l);
                let c_d = tape.constant(Tensor::filled(&[m], 1.0 / m as f64))?;
                joint_fuse(tape, enc.h_last, c_d, bind[self.w_z.expect("joint projection")])
            }
            Variant::PlainSeq2seq => Ok(enc.h_last),
            Variant::AttSeq2seq => {
                let c_h = temporal_context(tape)?;
                let raw = tape.constant(self.raw_window(window)?)?;
                tape.concat(&[c_h, raw], 0)
            }
        }
    }

    fn represent(&self, tape: &mut Tape, bind: &Binding, window: &[Vec<FeatureValue>]) -> Result<Var> {
        self.features
            .as_ref()
            .expect("variant registers a feature encoder")
            .represent_window(tape, bind, window, self.config.half_window)
    }

    /// Scaled numerical values and one-hot categoricals, day-major.
    fn raw_window(&self, window: &[Vec<FeatureValue>]) -> Result<Tensor> {
        let expected = self.config.window_len();
        if window.len() != expected {
            return Err(Error::WindowLength {
                expected,
                found: window.len(),
            });
        }
        let mut out = Vec::with_capacity(raw_day_width(&self.schema) * expected);
        for (d, day) in window.iter().enumerate() {
            self.schema.check_day(day, &|| format!("window day {d}"))?;
            for (f, v) in self.schema.features().iter().zip(day) {
                match (f.kind, v) {
                    (FeatureKind::Numerical, FeatureValue::Numerical(x)) => out.push(*x),
                    (FeatureKind::Categorical { cardinality }, FeatureValue::Categorical(c)) => {
                        out.extend((0..cardinality).map(|i| if i == *c { 1.0 } else { 0.0 }))
                    }
                    _ => unreachable!("day checked against schema"),
                }
            }
        }
        Ok(Tensor::vector(out))
    }

    /// One decoder step: returns `(ŷ [1], s_next, c_next)`.
    #[allow(clippy::too_many_arguments)]
    pub fn step_on(
        &self,
        tape: &mut Tape,
        bind: &Binding,
        enc: &Encoded,
        s_prev: Var,
        c_prev: Var,
        window: &[Vec<FeatureValue>],
        mut dropout: Option<&mut DropoutCtx>,
    ) -> Result<(Var, Var, Var)> {
        let mut z = self.decoder_input(tape, bind, enc, s_prev, window)?;
        if let Some(ctx) = dropout.as_deref_mut() {
            z = ctx.apply(tape, z)?;
        }
        let (s, c) = self.decoder.step(tape, bind, z, s_prev, c_prev)?;
        let y = self.head.forward(tape, bind, s, dropout)?;
        Ok((y, s, c))
    }

    /// Single-step prediction in the scaled domain; the decoder starts from
    /// the last encoder state.
    pub fn forward_on(
        &self,
        tape: &mut Tape,
        bind: &Binding,
        history: &[f64],
        window: &[Vec<FeatureValue>],
        dropout: Option<&mut DropoutCtx>,
    ) -> Result<Var> {
        let enc = self.encode_on(tape, bind, history)?;
        let (y, _, _) = self.step_on(tape, bind, &enc, enc.h_last, enc.c_last, window, dropout)?;
        Ok(y)
    }

    /// Encoder states `[h × enc_hidden]` for a scaled history.
    pub fn encode(&self, history: &[f64]) -> Result<Tensor> {
        if history.len() != self.config.history {
            return Err(Error::Length {
                expected: self.config.history,
                found: history.len(),
            });
        }
        let mut tape = Tape::new();
        let bind = self.store.bind_frozen(&mut tape)?;
        let hidden = self.config.enc_hidden;
        let mut h = tape.constant(Tensor::zeros(&[hidden]))?;
        let mut c = tape.constant(Tensor::zeros(&[hidden]))?;
        let mut data = Vec::with_capacity(history.len() * hidden);
        for &y in history {
            let x = tape.constant(Tensor::vector(vec![y]))?;
            (h, c) = self.encoder.step(&mut tape, &bind, x, h, c)?;
            data.extend_from_slice(tape.value(h).data());
        }
        Tensor::matrix(history.len(), hidden, data)
    }

    /// One decoder step from explicit encoder states and decoder state, in
    /// the scaled domain.
    pub fn predict_one(
        &self,
        states: &Tensor,
        s_prev: &Tensor,
        c_prev: &Tensor,
        window: &[Vec<FeatureValue>],
    ) -> Result<(f64, Tensor, Tensor)> {
        let hidden = self.config.enc_hidden;
        if states.rank() != 2 || states.shape()[1] != hidden || states.shape()[0] == 0 {
            return Err(Error::shape("predict_one", states.shape(), &[self.config.history, hidden]));
        }
        let mut tape = Tape::new();
        let bind = self.store.bind_frozen(&mut tape)?;
        let states_var = tape.constant(states.clone())?;
        let h_last = tape.select_row(states_var, states.shape()[0] - 1)?;
        let enc = Encoded {
            states: Some(states_var),
            h_last,
            c_last: h_last,
        };
        let s = tape.constant(s_prev.clone())?;
        let c = tape.constant(c_prev.clone())?;
        let (y, s, c) = self.step_on(&mut tape, &bind, &enc, s, c, window, None)?;
        Ok((tape.value(y).data()[0], tape.value(s).clone(), tape.value(c).clone()))
    }

    /// Final encoder hidden and cell state for a scaled history.
    pub fn encoder_final_state(&self, history: &[f64]) -> Result<(Tensor, Tensor)> {
        let mut tape = Tape::new();
        let bind = self.store.bind_frozen(&mut tape)?;
        let enc = self.encode_on(&mut tape, &bind, history)?;
        Ok((tape.value(enc.h_last).clone(), tape.value(enc.c_last).clone()))
    }

    /// Scaled single-step prediction with dropout off.
    pub fn predict_scaled(&self, history: &[f64], window: &[Vec<FeatureValue>]) -> Result<f64> {
        let mut tape = Tape::new();
        let bind = self.store.bind_frozen(&mut tape)?;
        let y = self.forward_on(&mut tape, &bind, history, window, None)?;
        Ok(tape.value(y).data()[0])
    }

    /// Scale a sample's single-step inputs.
    pub fn prepare(&self, sample: &Sample) -> Result<Prepared> {
        let history = self.scalers.scale_targets(&sample.history)?;
        let window = sample
            .window(0)
            .iter()
            .map(|d| self.scalers.scale_day(d))
            .collect::<Result<_>>()?;
        let target = self.scalers.target.apply(sample.targets[0])?;
        Ok(Prepared {
            history,
            window,
            target,
        })
    }

    /// Scaled window for forecast step `step` (0-based).
    fn gather_window(&self, provider: &dyn FeatureProvider, step: usize) -> Result<Vec<Vec<FeatureValue>>> {
        let l = self.config.half_window as isize;
        let centre = step as isize + 1;
        (centre - l..=centre + l)
            .map(|offset| {
                let day = provider.day(offset).ok_or_else(|| Error::MissingFeature {
                    day: provider.describe(offset),
                    feature: self.schema.features()[0].name.clone(),
                })?;
                self.schema.check_day(&day, &|| provider.describe(offset))?;
                self.scalers.scale_day(&day)
            })
            .collect()
    }

    /// Recursive `k`-step forecast in original units from a raw history of
    /// length h. Each step re-encodes the most recent h values, predictions
    /// included.
    pub fn predict_sequence(&self, history: &[f64], provider: &dyn FeatureProvider, k: usize) -> Result<Vec<f64>> {
        self.rollout(history, provider, k, None)
    }

    /// As [`predict_sequence`](Self::predict_sequence) but feeding back the
    /// given true values instead of predictions.
    pub fn predict_sequence_teacher(
        &self,
        history: &[f64],
        provider: &dyn FeatureProvider,
        truths: &[f64],
    ) -> Result<Vec<f64>> {
        self.rollout(history, provider, truths.len(), Some(truths))
    }

    fn rollout(
        &self,
        history: &[f64],
        provider: &dyn FeatureProvider,
        k: usize,
        truths: Option<&[f64]>,
    ) -> Result<Vec<f64>> {
        let h = self.config.history;
        if history.len() != h {
            return Err(Error::Length {
                expected: h,
                found: history.len(),
            });
        }
        if k == 0 {
            return Err(Error::InvalidConfig("horizon must be at least 1".into()));
        }
        let mut work = self.scalers.scale_targets(history)?;
        let mut out = Vec::with_capacity(k);
        for step in 0..k {
            let window = self.gather_window(provider, step)?;
            let y = self.predict_scaled(&work[work.len() - h..], &window)?;
            out.push(y);
            let next = match truths {
                Some(t) => self.scalers.target.apply(t[step])?,
                None => y,
            };
            work.push(next);
        }
        self.scalers.target.invert_all(&out)
    }

    /// `k`-step forecasts for each sample, in parallel.
    pub fn predict_samples(&self, samples: &[Sample], k: usize) -> Result<Vec<Vec<f64>>> {
        use rayon::prelude::*;
        samples
            .par_iter()
            .map(|s| self.predict_sequence(&s.history, s, k))
            .collect()
    }
}

fn raw_day_width(schema: &FeatureSchema) -> usize {
    schema
        .features()
        .iter()
        .map(|f| match f.kind {
            FeatureKind::Numerical => 1,
            FeatureKind::Categorical { cardinality } => cardinality,
        })
        .sum()
}
