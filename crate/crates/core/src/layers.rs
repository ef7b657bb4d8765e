//! LSTM cell, two-layer perceptron and inverted dropout.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::params::{Binding, ParamId, ParamStore};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Deterministic generator used for initialisation, shuffling and dropout.
pub type SeededRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform in `[-1/√fan_in, 1/√fan_in]`.
pub fn init_uniform(rng: &mut SeededRng, shape: &[usize], fan_in: usize) -> Tensor {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
    Tensor::from_parts(shape.to_vec(), data)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Sigmoid,
    Tanh,
    Relu,
}

impl Activation {
    pub fn apply(self, tape: &mut Tape, x: Var) -> Result<Var> {
        match self {
            Activation::Identity => Ok(x),
            Activation::Sigmoid => tape.sigmoid(x),
            Activation::Tanh => tape.tanh(x),
            Activation::Relu => tape.relu(x),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Activation::Identity),
            "sigmoid" => Ok(Activation::Sigmoid),
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            other => Err(Error::InvalidConfig(format!("unknown activation `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Gate {
    w: ParamId,
    u: ParamId,
    b: ParamId,
}

impl Gate {
    fn register(
        store: &mut ParamStore,
        prefix: &str,
        input: usize,
        hidden: usize,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        Ok(Self {
            w: store.register(format!("{prefix}.w"), init_uniform(rng, &[hidden, input], input))?,
            u: store.register(format!("{prefix}.u"), init_uniform(rng, &[hidden, hidden], hidden))?,
            b: store.register(format!("{prefix}.b"), init_uniform(rng, &[hidden], hidden))?,
        })
    }

    fn preactivation(&self, tape: &mut Tape, bind: &Binding, x: Var, h: Var) -> Result<Var> {
        let wx = tape.matmul(bind[self.w], x)?;
        let uh = tape.matmul(bind[self.u], h)?;
        let sum = tape.add(wx, uh)?;
        tape.add(sum, bind[self.b])
    }
}

/// The recurrent function g(·): one LSTM step with per-gate input weight,
/// recurrent weight and bias.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LstmCell {
    input_size: usize,
    hidden_size: usize,
    input_gate: Gate,
    forget_gate: Gate,
    output_gate: Gate,
    candidate: Gate,
}

impl LstmCell {
    pub fn register(
        store: &mut ParamStore,
        prefix: &str,
        input_size: usize,
        hidden_size: usize,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        let mut gate = |name: &str| Gate::register(store, &format!("{prefix}.{name}"), input_size, hidden_size, rng);
        Ok(Self {
            input_gate: gate("input")?,
            forget_gate: gate("forget")?,
            output_gate: gate("output")?,
            candidate: gate("candidate")?,
            input_size,
            hidden_size,
        })
    }

    pub fn input_size(&self) -> usize {
        self.input_size
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden_size
    }

    /// `c = f⊙c_prev + i⊙g̃`, `h = o⊙tanh(c)`.
    pub fn step(&self, tape: &mut Tape, bind: &Binding, x: Var, h_prev: Var, c_prev: Var) -> Result<(Var, Var)> {
        if tape.shape(x) != [self.input_size] {
            return Err(Error::shape("lstm_step", tape.shape(x), &[self.input_size]));
        }
        for v in [h_prev, c_prev] {
            if tape.shape(v) != [self.hidden_size] {
                return Err(Error::shape("lstm_step", tape.shape(v), &[self.hidden_size]));
            }
        }
        let i = self.input_gate.preactivation(tape, bind, x, h_prev)?;
        let i = tape.sigmoid(i)?;
        let f = self.forget_gate.preactivation(tape, bind, x, h_prev)?;
        let f = tape.sigmoid(f)?;
        let o = self.output_gate.preactivation(tape, bind, x, h_prev)?;
        let o = tape.sigmoid(o)?;
        let g = self.candidate.preactivation(tape, bind, x, h_prev)?;
        let g = tape.tanh(g)?;

        let keep = tape.mul(f, c_prev)?;
        let write = tape.mul(i, g)?;
        let c = tape.add(keep, write)?;
        let tc = tape.tanh(c)?;
        let h = tape.mul(o, tc)?;
        Ok((h, c))
    }
}

/// Evaluate one LSTM step outside of training.
pub fn lstm_step(
    cell: &LstmCell,
    store: &ParamStore,
    x: &Tensor,
    h_prev: &Tensor,
    c_prev: &Tensor,
) -> Result<(Tensor, Tensor)> {
    let mut tape = Tape::new();
    let bind = store.bind_frozen(&mut tape)?;
    let x = tape.constant(x.clone())?;
    let h = tape.constant(h_prev.clone())?;
    let c = tape.constant(c_prev.clone())?;
    let (h, c) = cell.step(&mut tape, &bind, x, h, c)?;
    Ok((tape.value(h).clone(), tape.value(c).clone()))
}

/// `out_act(W2 · act(W1·x + b1) + b2)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mlp {
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
    input_size: usize,
    hidden_size: usize,
    output_size: usize,
    hidden_activation: Activation,
    output_activation: Activation,
}

impl Mlp {
    #[allow(clippy::too_many_arguments)]
    pub fn register(
        store: &mut ParamStore,
        prefix: &str,
        input_size: usize,
        hidden_size: usize,
        output_size: usize,
        hidden_activation: Activation,
        output_activation: Activation,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        let w1 = store.register(format!("{prefix}.w1"), init_uniform(rng, &[hidden_size, input_size], input_size))?;
        let b1 = store.register(format!("{prefix}.b1"), init_uniform(rng, &[hidden_size], input_size))?;
        let w2 = store.register(format!("{prefix}.w2"), init_uniform(rng, &[output_size, hidden_size], hidden_size))?;
        let b2 = store.register(format!("{prefix}.b2"), init_uniform(rng, &[output_size], hidden_size))?;
        Ok(Self {
            w1,
            b1,
            w2,
            b2,
            input_size,
            hidden_size,
            output_size,
            hidden_activation,
            output_activation,
        })
    }

    pub fn output_size(&self) -> usize {
        self.output_size
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden_size
    }

    pub fn params(&self) -> [ParamId; 4] {
        [self.w1, self.b1, self.w2, self.b2]
    }

    pub fn forward(&self, tape: &mut Tape, bind: &Binding, x: Var, dropout: Option<&mut DropoutCtx>) -> Result<Var> {
        if tape.shape(x) != [self.input_size] {
            return Err(Error::shape("mlp", tape.shape(x), &[self.input_size]));
        }
        let a = tape.matmul(bind[self.w1], x)?;
        let a = tape.add(a, bind[self.b1])?;
        let mut hidden = self.hidden_activation.apply(tape, a)?;
        if let Some(d) = dropout {
            hidden = d.apply(tape, hidden)?;
        }
        let o = tape.matmul(bind[self.w2], hidden)?;
        let o = tape.add(o, bind[self.b2])?;
        self.output_activation.apply(tape, o)
    }
}

/// Evaluate a single-output MLP on `s`, returning the scalar prediction.
pub fn mlp_predict(mlp: &Mlp, store: &ParamStore, s: &Tensor) -> Result<f64> {
    if mlp.output_size != 1 {
        return Err(Error::InvalidConfig(format!(
            "prediction head must have one output, has {}",
            mlp.output_size
        )));
    }
    let mut tape = Tape::new();
    let bind = store.bind_frozen(&mut tape)?;
    let x = tape.constant(s.clone())?;
    let y = mlp.forward(&mut tape, &bind, x, None)?;
    Ok(tape.value(y).data()[0])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DropoutSpec {
    rate: f64,
    mode: Mode,
}

impl DropoutSpec {
    pub fn new(rate: f64, mode: Mode) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::InvalidConfig(format!("dropout rate {rate} not in [0, 1)")));
        }
        Ok(Self { rate, mode })
    }

    pub fn eval() -> Self {
        Self {
            rate: 0.0,
            mode: Mode::Eval,
        }
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    fn is_identity(&self) -> bool {
        self.mode == Mode::Eval || self.rate == 0.0
    }

    /// Inverted-dropout mask: 0 with probability `rate`, else `1/(1-rate)`.
    fn mask(&self, len: usize, rng: &mut SeededRng) -> Vec<f64> {
        let keep = 1.0 - self.rate;
        let scale = 1.0 / keep;
        (0..len)
            .map(|_| if rng.random::<f64>() < self.rate { 0.0 } else { scale })
            .collect()
    }
}

pub fn dropout(spec: &DropoutSpec, x: &Tensor, rng: &mut SeededRng) -> Tensor {
    if spec.is_identity() {
        return x.clone();
    }
    let mask = spec.mask(x.len(), rng);
    let data = x.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
    Tensor::from_parts(x.shape().to_vec(), data)
}

/// Dropout state carried through a forward pass.
#[derive(Clone, Debug)]
pub struct DropoutCtx {
    spec: DropoutSpec,
    rng: SeededRng,
}

impl DropoutCtx {
    pub fn new(spec: DropoutSpec, seed: u64) -> Self {
        Self {
            spec,
            rng: seeded_rng(seed),
        }
    }

    pub fn eval() -> Self {
        Self::new(DropoutSpec::eval(), 0)
    }

    pub fn train(rate: f64, seed: u64) -> Result<Self> {
        Ok(Self::new(DropoutSpec::new(rate, Mode::Train)?, seed))
    }

    pub fn spec(&self) -> &DropoutSpec {
        &self.spec
    }

    pub fn apply(&mut self, tape: &mut Tape, x: Var) -> Result<Var> {
        if self.spec.is_identity() {
            return Ok(x);
        }
        let mask = self.spec.mask(tape.value(x).len(), &mut self.rng);
        let mask = tape.constant(Tensor::from_parts(tape.shape(x).to_vec(), mask))?;
        tape.mul(x, mask)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::param_gradient_check;
    use crate::tape::sigmoid;

    fn zero_store(store: &mut ParamStore) {
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            store.value_mut(id).data_mut().fill(0.0);
        }
    }

    #[test]
    fn zero_lstm_gives_zero_state() {
        let mut store = ParamStore::new();
        let cell = LstmCell::register(&mut store, "enc", 3, 4, &mut seeded_rng(1)).unwrap();
        zero_store(&mut store);
        let (h, c) = lstm_step(
            &cell,
            &store,
            &Tensor::vector(vec![0.3, -2.0, 5.0]),
            &Tensor::zeros(&[4]),
            &Tensor::zeros(&[4]),
        )
        .unwrap();
        assert_eq!(h.data(), &[0.0; 4]);
        assert_eq!(c.data(), &[0.0; 4]);
    }

    #[test]
    fn scalar_lstm_matches_hand_evaluation() {
        let mut store = ParamStore::new();
        let cell = LstmCell::register(&mut store, "c", 1, 1, &mut seeded_rng(0)).unwrap();
        let set = |s: &mut ParamStore, name: &str, v: f64| {
            let id = s.id(name).unwrap();
            s.value_mut(id).data_mut()[0] = v;
        };
        let weights = [
            ("input", 0.5, -0.3, 0.1),
            ("forget", 0.2, 0.4, 0.6),
            ("output", -0.7, 0.9, 0.05),
            ("candidate", 1.1, -0.6, -0.2),
        ];
        for (gate, w, u, b) in weights {
            set(&mut store, &format!("c.{gate}.w"), w);
            set(&mut store, &format!("c.{gate}.u"), u);
            set(&mut store, &format!("c.{gate}.b"), b);
        }
        let (x, h0, c0) = (0.8, -0.25, 0.4);
        let (h, c) = lstm_step(
            &cell,
            &store,
            &Tensor::vector(vec![x]),
            &Tensor::vector(vec![h0]),
            &Tensor::vector(vec![c0]),
        )
        .unwrap();

        let pre = |w: f64, u: f64, b: f64| w * x + u * h0 + b;
        let i = sigmoid(pre(0.5, -0.3, 0.1));
        let f = sigmoid(pre(0.2, 0.4, 0.6));
        let o = sigmoid(pre(-0.7, 0.9, 0.05));
        let g = pre(1.1, -0.6, -0.2).tanh();
        let c_ref = f * c0 + i * g;
        let h_ref = o * c_ref.tanh();
        assert!((c.data()[0] - c_ref).abs() < 1e-12);
        assert!((h.data()[0] - h_ref).abs() < 1e-12);
    }

    #[test]
    fn lstm_gradients_match_finite_differences() {
        let mut store = ParamStore::new();
        let cell = LstmCell::register(&mut store, "c", 2, 3, &mut seeded_rng(7)).unwrap();
        let report = param_gradient_check(
            &store,
            |t, b| {
                let x = t.constant(Tensor::vector(vec![0.7, -1.3]))?;
                let h = t.constant(Tensor::vector(vec![0.1, -0.4, 0.9]))?;
                let c = t.constant(Tensor::vector(vec![-0.5, 0.2, 1.5]))?;
                let (h1, c1) = cell.step(t, b, x, h, c)?;
                let (h2, _) = cell.step(t, b, x, h1, c1)?;
                let sq = t.mul(h2, h2)?;
                t.sum(sq)
            },
            1e-5,
        )
        .unwrap();
        assert!(report.max_relative_error < 1e-6, "{report:?}");
    }

    #[test]
    fn lstm_rejects_bad_shapes() {
        let mut store = ParamStore::new();
        let cell = LstmCell::register(&mut store, "c", 2, 3, &mut seeded_rng(7)).unwrap();
        let r = lstm_step(
            &cell,
            &store,
            &Tensor::vector(vec![1.0]),
            &Tensor::zeros(&[3]),
            &Tensor::zeros(&[3]),
        );
        assert!(matches!(r, Err(Error::Shape { .. })));
    }

    #[test]
    fn zero_mlp_outputs_zero() {
        let mut store = ParamStore::new();
        let mlp = Mlp::register(&mut store, "head", 4, 3, 1, Activation::Sigmoid, Activation::Identity, &mut seeded_rng(2))
            .unwrap();
        zero_store(&mut store);
        let y = mlp_predict(&mlp, &store, &Tensor::vector(vec![1.0, 2.0, 3.0, 4.0])).unwrap();
        assert_eq!(y, 0.0);
    }

    #[test]
    fn single_hidden_unit_mlp_matches_hand_evaluation() {
        let mut store = ParamStore::new();
        let mlp = Mlp::register(&mut store, "h", 2, 1, 1, Activation::Sigmoid, Activation::Identity, &mut seeded_rng(3))
            .unwrap();
        let assign = |s: &mut ParamStore, name: &str, vals: &[f64]| {
            let id = s.id(name).unwrap();
            s.value_mut(id).data_mut().copy_from_slice(vals);
        };
        assign(&mut store, "h.w1", &[0.3, -1.2]);
        assign(&mut store, "h.b1", &[0.05]);
        assign(&mut store, "h.w2", &[2.5]);
        assign(&mut store, "h.b2", &[-0.4]);
        let s = [0.6, 0.1];
        let y = mlp_predict(&mlp, &store, &Tensor::vector(s.to_vec())).unwrap();
        let expected = 2.5 * sigmoid(0.3 * s[0] - 1.2 * s[1] + 0.05) - 0.4;
        assert!((y - expected).abs() < 1e-12);
    }

    #[test]
    fn sigmoid_output_is_in_unit_interval() {
        let mut store = ParamStore::new();
        let mlp = Mlp::register(&mut store, "h", 3, 5, 1, Activation::Sigmoid, Activation::Sigmoid, &mut seeded_rng(4))
            .unwrap();
        let mut rng = seeded_rng(9);
        for _ in 0..200 {
            let s: Vec<f64> = (0..3).map(|_| rng.random_range(-50.0..50.0)).collect();
            let y = mlp_predict(&mlp, &store, &Tensor::vector(s)).unwrap();
            assert!(y > 0.0 && y < 1.0);
        }
    }

    #[test]
    fn dropout_identity_cases() {
        let x = Tensor::vector(vec![1.5, -2.0, 3.25]);
        let mut rng = seeded_rng(0);
        let off = DropoutSpec::new(0.0, Mode::Train).unwrap();
        assert_eq!(dropout(&off, &x, &mut rng), x);
        let eval = DropoutSpec::new(0.5, Mode::Eval).unwrap();
        let y = dropout(&eval, &x, &mut rng);
        assert!(x.data().iter().zip(y.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn dropout_rate_validation() {
        assert!(DropoutSpec::new(1.0, Mode::Train).is_err());
        assert!(DropoutSpec::new(-0.1, Mode::Train).is_err());
        assert!(DropoutSpec::new(0.99, Mode::Train).is_ok());
    }

    #[test]
    fn inverted_dropout_preserves_mean() {
        let spec = DropoutSpec::new(0.5, Mode::Train).unwrap();
        let n = 100_000;
        let x = Tensor::vector((0..n).map(|i| 1.0 + (i % 10) as f64 * 0.1).collect());
        let input_mean = x.data().iter().sum::<f64>() / n as f64;
        let y = dropout(&spec, &x, &mut seeded_rng(42));
        let out: Vec<f64> = y.data().to_vec();
        let mean = out.iter().sum::<f64>() / n as f64;
        assert!((mean - input_mean).abs() / input_mean < 0.05);
        // three standard errors of the Monte-Carlo mean
        let var = out.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        let se = (var / n as f64).sqrt();
        assert!((mean - input_mean).abs() < 3.0 * se, "mean {mean} vs {input_mean}, se {se}");
    }
}
