//! Heterogeneous feature representation.
//!
//! Each raw feature gets its own learned embedding: categorical features use
//! an independent lookup table (one-hot times a learnable matrix), the
//! temperature feature uses a week-gated embedding whose weekend branch is a
//! product of two affine maps (a quadratic in the input) and whose workday
//! branch is a small perceptron. Embeddings of every feature of every day in
//! the window are flattened day-major into one vector of length `n′(2l+1)`.

use crate::error::{Error, Result};
use crate::layers::{init_uniform, Activation, Mlp, SeededRng};
use crate::params::{Binding, ParamId, ParamStore};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Day-of-week ids run Monday = 0 through Sunday = 6.
pub const DAYS_PER_WEEK: usize = 7;

pub fn is_weekend(day_of_week: usize) -> bool {
    day_of_week >= 5
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FeatureValue {
    Numerical(f64),
    Categorical(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeatureKind {
    Numerical,
    Categorical { cardinality: usize },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeatureDescriptor {
    pub name: String,
    pub kind: FeatureKind,
    pub embedding_dim: usize,
    /// Index of the day-of-week feature that switches this numerical feature
    /// between its weekend and workday branches.
    pub gate: Option<usize>,
}

impl FeatureDescriptor {
    pub fn numerical(name: &str, embedding_dim: usize) -> Self {
        Self {
            name: name.to_string(),
            kind: FeatureKind::Numerical,
            embedding_dim,
            gate: None,
        }
    }

    pub fn categorical(name: &str, cardinality: usize, embedding_dim: usize) -> Self {
        Self {
            name: name.to_string(),
            kind: FeatureKind::Categorical { cardinality },
            embedding_dim,
            gate: None,
        }
    }

    pub fn gated_by(mut self, week_feature: usize) -> Self {
        self.gate = Some(week_feature);
        self
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeatureSchema {
    features: Vec<FeatureDescriptor>,
}

impl FeatureSchema {
    pub fn new(features: Vec<FeatureDescriptor>) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::InvalidConfig("feature schema is empty".into()));
        }
        let mut gated = 0;
        for (i, f) in features.iter().enumerate() {
            if f.embedding_dim == 0 {
                return Err(Error::InvalidConfig(format!("feature `{}` has embedding dim 0", f.name)));
            }
            if features[..i].iter().any(|g| g.name == f.name) {
                return Err(Error::InvalidConfig(format!("duplicate feature `{}`", f.name)));
            }
            if let FeatureKind::Categorical { cardinality: 0 } = f.kind {
                return Err(Error::InvalidConfig(format!("feature `{}` has cardinality 0", f.name)));
            }
            if let Some(g) = f.gate {
                gated += 1;
                if f.kind != FeatureKind::Numerical {
                    return Err(Error::InvalidConfig(format!(
                        "only a numerical feature can be week-gated, `{}` is categorical",
                        f.name
                    )));
                }
                let ok = features.get(g).map(|w| w.kind)
                    == Some(FeatureKind::Categorical {
                        cardinality: DAYS_PER_WEEK,
                    });
                if !ok {
                    return Err(Error::InvalidConfig(format!(
                        "gate of `{}` must reference a day-of-week feature with cardinality 7",
                        f.name
                    )));
                }
            }
        }
        if gated > 1 {
            return Err(Error::InvalidConfig("at most one feature may be week-gated".into()));
        }
        Ok(Self { features })
    }

    /// Temperature (week-gated), weather (15), holiday (5), week (7).
    pub fn express(embedding_dim: usize) -> Self {
        Self::new(vec![
            FeatureDescriptor::numerical("temperature", embedding_dim).gated_by(3),
            FeatureDescriptor::categorical("weather", 15, embedding_dim),
            FeatureDescriptor::categorical("holiday", 5, embedding_dim),
            FeatureDescriptor::categorical("week", DAYS_PER_WEEK, embedding_dim),
        ])
        .expect("express schema is valid")
    }

    pub fn features(&self) -> &[FeatureDescriptor] {
        &self.features
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    /// n′: flattened hidden dimension of one day.
    pub fn hidden_dim(&self) -> usize {
        self.features.iter().map(|f| f.embedding_dim).sum()
    }

    /// n′(2l+1).
    pub fn window_dim(&self, half_window: usize) -> usize {
        self.hidden_dim() * (2 * half_window + 1)
    }

    /// Offset of (day, feature) in the flattened window representation.
    pub fn slice_of(&self, day: usize, feature: usize) -> std::ops::Range<usize> {
        let start = day * self.hidden_dim()
            + self.features[..feature].iter().map(|f| f.embedding_dim).sum::<usize>();
        start..start + self.features[feature].embedding_dim
    }

    /// Validate one day of feature values against the schema.
    pub fn check_day(&self, day: &[FeatureValue], label: &dyn Fn() -> String) -> Result<()> {
        for (i, f) in self.features.iter().enumerate() {
            let missing = || Error::MissingFeature {
                day: label(),
                feature: f.name.clone(),
            };
            let value = day.get(i).ok_or_else(missing)?;
            match (f.kind, value) {
                (FeatureKind::Numerical, FeatureValue::Numerical(x)) => {
                    if !x.is_finite() {
                        return Err(Error::NonFinite { op: "feature value" });
                    }
                }
                (FeatureKind::Categorical { cardinality }, FeatureValue::Categorical(c)) => {
                    if *c >= cardinality {
                        return Err(Error::CategoryOutOfRange {
                            feature: f.name.clone(),
                            value: *c,
                            cardinality,
                        });
                    }
                }
                _ => return Err(missing()),
            }
        }
        Ok(())
    }
}

/// One-hot times a learnable `[cardinality × e]` table.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CategoricalEmbedding {
    name: String,
    table: ParamId,
    cardinality: usize,
}

impl CategoricalEmbedding {
    pub fn register(
        store: &mut ParamStore,
        prefix: &str,
        name: &str,
        cardinality: usize,
        dim: usize,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        let table = store.register(format!("{prefix}.table"), init_uniform(rng, &[cardinality, dim], cardinality))?;
        Ok(Self {
            name: name.to_string(),
            table,
            cardinality,
        })
    }

    pub fn table(&self) -> ParamId {
        self.table
    }

    pub fn lookup(&self, tape: &mut Tape, bind: &Binding, category: usize) -> Result<Var> {
        if category >= self.cardinality {
            return Err(Error::CategoryOutOfRange {
                feature: self.name.clone(),
                value: category,
                cardinality: self.cardinality,
            });
        }
        tape.select_row(bind[self.table], category)
    }
}

/// Weekend: `(W·x + b) ⊙ (V·x + c)`; workday: perceptron `f(x)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TemperatureEmbedding {
    w: ParamId,
    b: ParamId,
    v: ParamId,
    c: ParamId,
    workday: Mlp,
}

impl TemperatureEmbedding {
    pub fn register(
        store: &mut ParamStore,
        prefix: &str,
        dim: usize,
        workday_hidden: usize,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        let mut vec_param = |name: &str, rng: &mut SeededRng| {
            store.register(format!("{prefix}.{name}"), init_uniform(rng, &[dim], 1))
        };
        let w = vec_param("w", rng)?;
        let b = vec_param("b", rng)?;
        let v = vec_param("v", rng)?;
        let c = vec_param("c", rng)?;
        let workday = Mlp::register(
            store,
            &format!("{prefix}.workday"),
            1,
            workday_hidden,
            dim,
            Activation::Sigmoid,
            Activation::Identity,
            rng,
        )?;
        Ok(Self { w, b, v, c, workday })
    }

    pub fn weekend_params(&self) -> [ParamId; 4] {
        [self.w, self.b, self.v, self.c]
    }

    pub fn workday(&self) -> &Mlp {
        &self.workday
    }

    pub fn embed(&self, tape: &mut Tape, bind: &Binding, x: f64, is_weekend: bool) -> Result<Var> {
        if !x.is_finite() {
            return Err(Error::NonFinite { op: "embed_numerical" });
        }
        if is_weekend {
            let wx = tape.scale(bind[self.w], x)?;
            let left = tape.add(wx, bind[self.b])?;
            let vx = tape.scale(bind[self.v], x)?;
            let right = tape.add(vx, bind[self.c])?;
            tape.mul(left, right)
        } else {
            let input = tape.constant(Tensor::vector(vec![x]))?;
            self.workday.forward(tape, bind, input, None)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FeatureEmbedding {
    Categorical(CategoricalEmbedding),
    Temperature(TemperatureEmbedding),
    /// Ungated numerical features use the perceptron branch only.
    Numerical(Mlp),
}

/// Learned per-feature embeddings.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Hfr {
    schema: FeatureSchema,
    embeddings: Vec<FeatureEmbedding>,
}

impl Hfr {
    pub fn register(
        store: &mut ParamStore,
        schema: &FeatureSchema,
        numeric_hidden: usize,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        let mut embeddings = Vec::with_capacity(schema.len());
        for f in schema.features() {
            let prefix = format!("hfr.{}", f.name);
            let emb = match (f.kind, f.gate) {
                (FeatureKind::Categorical { cardinality }, _) => FeatureEmbedding::Categorical(
                    CategoricalEmbedding::register(store, &prefix, &f.name, cardinality, f.embedding_dim, rng)?,
                ),
                (FeatureKind::Numerical, Some(_)) => FeatureEmbedding::Temperature(TemperatureEmbedding::register(
                    store,
                    &prefix,
                    f.embedding_dim,
                    numeric_hidden,
                    rng,
                )?),
                (FeatureKind::Numerical, None) => FeatureEmbedding::Numerical(Mlp::register(
                    store,
                    &prefix,
                    1,
                    numeric_hidden,
                    f.embedding_dim,
                    Activation::Sigmoid,
                    Activation::Identity,
                    rng,
                )?),
            };
            embeddings.push(emb);
        }
        Ok(Self {
            schema: schema.clone(),
            embeddings,
        })
    }

    pub fn embeddings(&self) -> &[FeatureEmbedding] {
        &self.embeddings
    }

    fn embed_day(&self, tape: &mut Tape, bind: &Binding, day: &[FeatureValue], out: &mut Vec<Var>) -> Result<()> {
        for (i, (f, emb)) in self.schema.features().iter().zip(&self.embeddings).enumerate() {
            let v = match (emb, day[i]) {
                (FeatureEmbedding::Categorical(e), FeatureValue::Categorical(c)) => e.lookup(tape, bind, c)?,
                (FeatureEmbedding::Temperature(e), FeatureValue::Numerical(x)) => {
                    let gate = f.gate.expect("temperature embedding is gated");
                    let weekend = match day[gate] {
                        FeatureValue::Categorical(dow) => is_weekend(dow),
                        FeatureValue::Numerical(_) => unreachable!("schema checked"),
                    };
                    e.embed(tape, bind, x, weekend)?
                }
                (FeatureEmbedding::Numerical(mlp), FeatureValue::Numerical(x)) => {
                    let input = tape.constant(Tensor::vector(vec![x]))?;
                    mlp.forward(tape, bind, input, None)?
                }
                _ => unreachable!("schema checked"),
            };
            out.push(v);
        }
        Ok(())
    }
}

/// Features fed "as is": numerical values repeated across the embedding
/// width, every categorical feature looked up in one shared table.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PlainRepresentation {
    schema: FeatureSchema,
    table: ParamId,
    rows: usize,
}

impl PlainRepresentation {
    pub fn register(store: &mut ParamStore, schema: &FeatureSchema, rng: &mut SeededRng) -> Result<Self> {
        let dim = schema.features()[0].embedding_dim;
        if schema.features().iter().any(|f| f.embedding_dim != dim) {
            return Err(Error::InvalidConfig(
                "plain representation needs a common embedding dim".into(),
            ));
        }
        let rows = schema
            .features()
            .iter()
            .filter_map(|f| match f.kind {
                FeatureKind::Categorical { cardinality } => Some(cardinality),
                FeatureKind::Numerical => None,
            })
            .max()
            .unwrap_or(1);
        let table = store.register("plain.table", init_uniform(rng, &[rows, dim], rows))?;
        Ok(Self {
            schema: schema.clone(),
            table,
            rows,
        })
    }

    fn embed_day(&self, tape: &mut Tape, bind: &Binding, day: &[FeatureValue], out: &mut Vec<Var>) -> Result<()> {
        for (f, value) in self.schema.features().iter().zip(day) {
            let v = match *value {
                FeatureValue::Numerical(x) => tape.constant(Tensor::filled(&[f.embedding_dim], x))?,
                FeatureValue::Categorical(c) => {
                    debug_assert!(c < self.rows);
                    tape.select_row(bind[self.table], c)?
                }
            };
            out.push(v);
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FeatureEncoder {
    Heterogeneous(Hfr),
    Plain(PlainRepresentation),
}

impl FeatureEncoder {
    pub fn schema(&self) -> &FeatureSchema {
        match self {
            FeatureEncoder::Heterogeneous(h) => &h.schema,
            FeatureEncoder::Plain(p) => &p.schema,
        }
    }

    /// Embed a `(2l+1)`-day window, oldest day first, features in schema
    /// order, into a vector of length `n′(2l+1)`.
    pub fn represent_window(
        &self,
        tape: &mut Tape,
        bind: &Binding,
        window: &[Vec<FeatureValue>],
        half_window: usize,
    ) -> Result<Var> {
        let expected = 2 * half_window + 1;
        if window.len() != expected {
            return Err(Error::WindowLength {
                expected,
                found: window.len(),
            });
        }
        let schema = self.schema();
        let mut parts = Vec::with_capacity(expected * schema.len());
        for (d, day) in window.iter().enumerate() {
            schema.check_day(day, &|| format!("window day {d}"))?;
            match self {
                FeatureEncoder::Heterogeneous(h) => h.embed_day(tape, bind, day, &mut parts)?,
                FeatureEncoder::Plain(p) => p.embed_day(tape, bind, day, &mut parts)?,
            }
        }
        tape.concat(&parts, 0)
    }
}

/// Temperature embedding of a min-max scaled value.
pub fn embed_numerical(emb: &TemperatureEmbedding, store: &ParamStore, x: f64, is_weekend: bool) -> Result<Tensor> {
    let mut tape = Tape::new();
    let bind = store.bind_frozen(&mut tape)?;
    let v = emb.embed(&mut tape, &bind, x, is_weekend)?;
    Ok(tape.value(v).clone())
}

pub fn embed_categorical(emb: &CategoricalEmbedding, store: &ParamStore, category: usize) -> Result<Tensor> {
    let mut tape = Tape::new();
    let bind = store.bind_frozen(&mut tape)?;
    let v = emb.lookup(&mut tape, &bind, category)?;
    Ok(tape.value(v).clone())
}

pub fn represent_window(
    encoder: &FeatureEncoder,
    store: &ParamStore,
    window: &[Vec<FeatureValue>],
    half_window: usize,
) -> Result<Tensor> {
    let mut tape = Tape::new();
    let bind = store.bind_frozen(&mut tape)?;
    let v = encoder.represent_window(&mut tape, &bind, window, half_window)?;
    Ok(tape.value(v).clone())
}
