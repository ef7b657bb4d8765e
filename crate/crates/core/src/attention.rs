//! Additive attention over encoder states and over feature components, and
//! the joint fusion that forms the decoder input.

use crate::error::{Error, Result};
use crate::layers::{init_uniform, SeededRng};
use crate::params::{Binding, ParamId, ParamStore};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Scores `v · tanh(W·s + U·hᵢ + b)` for every encoder state `hᵢ`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TemporalAttention {
    v: ParamId,
    w: ParamId,
    u: ParamId,
    b: ParamId,
    score_dim: usize,
    dec_hidden: usize,
    enc_hidden: usize,
}

impl TemporalAttention {
    pub fn register(
        store: &mut ParamStore,
        prefix: &str,
        score_dim: usize,
        dec_hidden: usize,
        enc_hidden: usize,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        Ok(Self {
            v: store.register(format!("{prefix}.v"), init_uniform(rng, &[score_dim], score_dim))?,
            w: store.register(format!("{prefix}.w"), init_uniform(rng, &[score_dim, dec_hidden], dec_hidden))?,
            u: store.register(format!("{prefix}.u"), init_uniform(rng, &[score_dim, enc_hidden], enc_hidden))?,
            b: store.register(format!("{prefix}.b"), init_uniform(rng, &[score_dim], enc_hidden))?,
            score_dim,
            dec_hidden,
            enc_hidden,
        })
    }

    pub fn params(&self) -> [ParamId; 4] {
        [self.v, self.w, self.u, self.b]
    }

    /// Unnormalised scores for `states: [h × enc_hidden]`.
    pub fn scores(&self, tape: &mut Tape, bind: &Binding, s_prev: Var, states: Var) -> Result<Var> {
        let shape = tape.shape(states);
        if shape.len() != 2 || shape[1] != self.enc_hidden || shape[0] == 0 {
            return Err(Error::shape("temporal_attention", shape, &[self.enc_hidden]));
        }
        if tape.shape(s_prev) != [self.dec_hidden] {
            return Err(Error::shape("temporal_attention", tape.shape(s_prev), &[self.dec_hidden]));
        }
        let query = tape.matmul(bind[self.w], s_prev)?;
        let query = tape.add(query, bind[self.b])?;
        let ut = tape.transpose(bind[self.u])?;
        let keys = tape.matmul(states, ut)?; // [h × score]
        let pre = tape.add(keys, query)?;
        let act = tape.tanh(pre)?;
        tape.matmul(act, bind[self.v])
    }

    /// Returns `(α, c_H)` with `c_H = Σᵢ αᵢ hᵢ`.
    pub fn attend(&self, tape: &mut Tape, bind: &Binding, s_prev: Var, states: Var) -> Result<(Var, Var)> {
        let scores = self.scores(tape, bind, s_prev, states)?;
        let alpha = tape.softmax(scores)?;
        let st = tape.transpose(states)?;
        let context = tape.matmul(st, alpha)?;
        Ok((alpha, context))
    }

    pub fn score_dim(&self) -> usize {
        self.score_dim
    }
}

/// Scores `v · tanh(W·s + U·dⱼ + b)` for every scalar component `dⱼ` of the
/// flattened feature representation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeatureAttention {
    v: ParamId,
    w: ParamId,
    u: ParamId,
    b: ParamId,
    dec_hidden: usize,
}

impl FeatureAttention {
    pub fn register(
        store: &mut ParamStore,
        prefix: &str,
        score_dim: usize,
        dec_hidden: usize,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        Ok(Self {
            v: store.register(format!("{prefix}.v"), init_uniform(rng, &[score_dim], score_dim))?,
            w: store.register(format!("{prefix}.w"), init_uniform(rng, &[score_dim, dec_hidden], dec_hidden))?,
            u: store.register(format!("{prefix}.u"), init_uniform(rng, &[score_dim], 1))?,
            b: store.register(format!("{prefix}.b"), init_uniform(rng, &[score_dim], 1))?,
            dec_hidden,
        })
    }

    pub fn params(&self) -> [ParamId; 4] {
        [self.v, self.w, self.u, self.b]
    }

    pub fn scores(&self, tape: &mut Tape, bind: &Binding, s_prev: Var, d: Var) -> Result<Var> {
        if tape.shape(d).len() != 1 || tape.shape(d)[0] == 0 {
            return Err(Error::shape("feature_attention", tape.shape(d), &[]));
        }
        if tape.shape(s_prev) != [self.dec_hidden] {
            return Err(Error::shape("feature_attention", tape.shape(s_prev), &[self.dec_hidden]));
        }
        let m = tape.shape(d)[0];
        let score_dim = tape.shape(bind[self.u])[0];
        let query = tape.matmul(bind[self.w], s_prev)?;
        let query = tape.add(query, bind[self.b])?;
        // outer(d, U): row j is U·dⱼ
        let col = tape.reshape(d, &[m, 1])?;
        let row = tape.reshape(bind[self.u], &[1, score_dim])?;
        let keys = tape.matmul(col, row)?;
        let pre = tape.add(keys, query)?;
        let act = tape.tanh(pre)?;
        tape.matmul(act, bind[self.v])
    }

    /// Returns `(β, c_D)` with `c_D = β ⊙ d`.
    pub fn attend(&self, tape: &mut Tape, bind: &Binding, s_prev: Var, d: Var) -> Result<(Var, Var)> {
        let scores = self.scores(tape, bind, s_prev, d)?;
        let beta = tape.softmax(scores)?;
        let context = tape.mul(beta, d)?;
        Ok((beta, context))
    }
}

/// `c_D` with every weight fixed at `1/m`.
pub fn uniform_feature_context(tape: &mut Tape, d: Var) -> Result<Var> {
    let m = tape.shape(d).iter().product::<usize>();
    if m == 0 {
        return Err(Error::EmptyInput { op: "feature_attention" });
    }
    tape.scale(d, 1.0 / m as f64)
}

/// `z = c_H ⊙ (W_z · c_D)`.
pub fn joint_fuse(tape: &mut Tape, c_h: Var, c_d: Var, w_z: Var) -> Result<Var> {
    let projected = tape.matmul(w_z, c_d)?;
    if tape.shape(projected) != tape.shape(c_h) {
        return Err(Error::shape("joint_fuse", tape.shape(c_h), tape.shape(projected)));
    }
    tape.mul(c_h, projected)
}

/// Tensor-level temporal attention; `states` is `[h × enc_hidden]`.
pub fn temporal_attention(
    attn: &TemporalAttention,
    store: &ParamStore,
    s_prev: &Tensor,
    states: &Tensor,
) -> Result<(Tensor, Tensor)> {
    let mut tape = Tape::new();
    let bind = store.bind_frozen(&mut tape)?;
    let s = tape.constant(s_prev.clone())?;
    let h = tape.constant(states.clone())?;
    let (a, c) = attn.attend(&mut tape, &bind, s, h)?;
    Ok((tape.value(a).clone(), tape.value(c).clone()))
}

pub fn feature_attention(
    attn: &FeatureAttention,
    store: &ParamStore,
    s_prev: &Tensor,
    d: &Tensor,
) -> Result<(Tensor, Tensor)> {
    let mut tape = Tape::new();
    let bind = store.bind_frozen(&mut tape)?;
    let s = tape.constant(s_prev.clone())?;
    let d = tape.constant(d.clone())?;
    let (b, c) = attn.attend(&mut tape, &bind, s, d)?;
    Ok((tape.value(b).clone(), tape.value(c).clone()))
}

pub fn joint_fuse_tensors(c_h: &Tensor, c_d: &Tensor, w_z: &Tensor) -> Result<Tensor> {
    let mut tape = Tape::new();
    let (h, d, w) = (
        tape.constant(c_h.clone())?,
        tape.constant(c_d.clone())?,
        tape.constant(w_z.clone())?,
    );
    let z = joint_fuse(&mut tape, h, d, w)?;
    Ok(tape.value(z).clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::finite_diff_check;
    use crate::layers::seeded_rng;
    use crate::tape::softmax;
    use rand::Rng;

    fn random_tensor(rng: &mut SeededRng, shape: &[usize]) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap()
    }

    fn temporal(score: usize, dec: usize, enc: usize, seed: u64) -> (ParamStore, TemporalAttention) {
        let mut store = ParamStore::new();
        let a = TemporalAttention::register(&mut store, "ta", score, dec, enc, &mut seeded_rng(seed)).unwrap();
        (store, a)
    }

    #[test]
    fn identical_states_give_uniform_weights() {
        let (store, attn) = temporal(4, 3, 3, 1);
        let row = [0.2, -0.7, 1.1];
        let states = Tensor::matrix(5, 3, row.iter().copied().cycle().take(15).collect()).unwrap();
        let (alpha, ctx) = temporal_attention(&attn, &store, &Tensor::vector(vec![0.3, 0.1, -0.2]), &states).unwrap();
        for a in alpha.data() {
            assert!((a - 0.2).abs() < 1e-12);
        }
        for (c, r) in ctx.data().iter().zip(row) {
            assert!((c - r).abs() < 1e-12);
        }
    }

    #[test]
    fn single_state() {
        let (store, attn) = temporal(2, 2, 3, 2);
        let states = Tensor::matrix(1, 3, vec![0.5, 0.25, -1.0]).unwrap();
        let (alpha, ctx) = temporal_attention(&attn, &store, &Tensor::vector(vec![1.0, -1.0]), &states).unwrap();
        assert_eq!(alpha.data(), &[1.0]);
        assert_eq!(ctx.data(), &[0.5, 0.25, -1.0]);
    }

    #[test]
    fn temporal_context_matches_direct_resummation() {
        let mut rng = seeded_rng(3);
        let (store, attn) = temporal(5, 4, 3, 4);
        let states = random_tensor(&mut rng, &[6, 3]);
        let s = random_tensor(&mut rng, &[4]);
        let (alpha, ctx) = temporal_attention(&attn, &store, &s, &states).unwrap();

        // scores recomputed with plain loops
        let [v, w, u, b] = attn.params().map(|p| store.value(p).clone());
        let scores: Vec<f64> = (0..6)
            .map(|i| {
                (0..5)
                    .map(|r| {
                        let ws: f64 = (0..4).map(|k| w.at(r, k) * s.data()[k]).sum();
                        let uh: f64 = (0..3).map(|k| u.at(r, k) * states.at(i, k)).sum();
                        v.data()[r] * (ws + uh + b.data()[r]).tanh()
                    })
                    .sum()
            })
            .collect();
        let expected_alpha = softmax(&scores);
        for (a, e) in alpha.data().iter().zip(&expected_alpha) {
            assert!((a - e).abs() < 1e-12);
        }
        for k in 0..3 {
            let direct: f64 = (0..6).map(|i| expected_alpha[i] * states.at(i, k)).sum();
            assert!((ctx.data()[k] - direct).abs() < 1e-12);
        }
    }

    fn feature(score: usize, dec: usize, seed: u64) -> (ParamStore, FeatureAttention) {
        let mut store = ParamStore::new();
        let a = FeatureAttention::register(&mut store, "fa", score, dec, &mut seeded_rng(seed)).unwrap();
        (store, a)
    }

    #[test]
    fn equal_components_give_uniform_feature_weights() {
        let (store, attn) = feature(3, 2, 5);
        let d = Tensor::vector(vec![0.4; 8]);
        let (beta, ctx) = feature_attention(&attn, &store, &Tensor::vector(vec![0.1, 0.9]), &d).unwrap();
        for (b, c) in beta.data().iter().zip(ctx.data()) {
            assert!((b - 0.125).abs() < 1e-12);
            assert!((c - 0.4 / 8.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_component_feature_attention() {
        let (store, attn) = feature(3, 2, 6);
        let (beta, ctx) =
            feature_attention(&attn, &store, &Tensor::vector(vec![0.0, 1.0]), &Tensor::vector(vec![-0.3])).unwrap();
        assert_eq!(beta.data(), &[1.0]);
        assert_eq!(ctx.data(), &[-0.3]);
    }

    #[test]
    fn feature_context_matches_direct_recomputation() {
        let mut rng = seeded_rng(7);
        let (store, attn) = feature(4, 3, 8);
        let d = random_tensor(&mut rng, &[10]);
        let s = random_tensor(&mut rng, &[3]);
        let (beta, ctx) = feature_attention(&attn, &store, &s, &d).unwrap();
        let [v, w, u, b] = attn.params().map(|p| store.value(p).clone());
        let scores: Vec<f64> = (0..10)
            .map(|j| {
                (0..4)
                    .map(|r| {
                        let ws: f64 = (0..3).map(|k| w.at(r, k) * s.data()[k]).sum();
                        v.data()[r] * (ws + u.data()[r] * d.data()[j] + b.data()[r]).tanh()
                    })
                    .sum()
            })
            .collect();
        let expected = softmax(&scores);
        for j in 0..10 {
            assert!((beta.data()[j] - expected[j]).abs() < 1e-12);
            assert!((ctx.data()[j] - expected[j] * d.data()[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn joint_fuse_examples() {
        let z = joint_fuse_tensors(
            &Tensor::vector(vec![1., 2.]),
            &Tensor::vector(vec![3., 4.]),
            &Tensor::identity(2),
        )
        .unwrap();
        assert_eq!(z.data(), &[3., 8.]);

        let w = Tensor::matrix(2, 3, vec![0.5, -1.0, 2.0, 1.5, 0.3, -0.7]).unwrap();
        let z = joint_fuse_tensors(&Tensor::vector(vec![1., 2.]), &Tensor::zeros(&[3]), &w).unwrap();
        assert_eq!(z.data(), &[0., 0.]);

        let bad = Tensor::zeros(&[3, 3]);
        assert!(joint_fuse_tensors(&Tensor::vector(vec![1., 2.]), &Tensor::zeros(&[3]), &bad).is_err());
    }

    #[test]
    fn joint_fuse_gradient_through_both_branches() {
        // pack c_H (2), c_D (3), W_z (2×3) into one point
        let mut rng = seeded_rng(9);
        let point = random_tensor(&mut rng, &[11]);
        let report = finite_diff_check(
            |t, x| {
                // slice through a constant selection matrix so gradients reach x
                let pick = |t: &mut Tape, from: usize, len: usize| -> Result<Var> {
                    let mut sel = vec![0.0; len * 11];
                    for i in 0..len {
                        sel[i * 11 + from + i] = 1.0;
                    }
                    let sel = t.constant(Tensor::matrix(len, 11, sel)?)?;
                    t.matmul(sel, x)
                };
                let c_h = pick(t, 0, 2)?;
                let c_d = pick(t, 2, 3)?;
                let w = pick(t, 5, 6)?;
                let w = t.reshape(w, &[2, 3])?;
                let z = joint_fuse(t, c_h, c_d, w)?;
                let th = t.tanh(z)?;
                t.sum(th)
            },
            &point,
            1e-5,
        )
        .unwrap();
        assert!(report.max_relative_error < 1e-6, "{report:?}");
    }

    #[test]
    fn attention_gradients_match_finite_differences() {
        let mut rng = seeded_rng(10);
        let (store, attn) = temporal(3, 2, 4, 11);
        let states = random_tensor(&mut rng, &[5, 4]);
        let s = random_tensor(&mut rng, &[2]);
        let report = crate::gradcheck::param_gradient_check(
            &store,
            |t, b| {
                let h = t.constant(states.clone())?;
                let s = t.constant(s.clone())?;
                let (_, c) = attn.attend(t, b, s, h)?;
                let sq = t.mul(c, c)?;
                t.sum(sq)
            },
            1e-5,
        )
        .unwrap();
        assert!(report.max_relative_error < 1e-6, "{report:?}");

        let (fstore, fattn) = feature(3, 2, 12);
        let d = random_tensor(&mut rng, &[7]);
        let report = crate::gradcheck::param_gradient_check(
            &fstore,
            |t, b| {
                let d = t.constant(d.clone())?;
                let s = t.constant(s.clone())?;
                let (_, c) = fattn.attend(t, b, s, d)?;
                let sq = t.mul(c, c)?;
                t.sum(sq)
            },
            1e-5,
        )
        .unwrap();
        assert!(report.max_relative_error < 1e-6, "{report:?}");
    }
}
