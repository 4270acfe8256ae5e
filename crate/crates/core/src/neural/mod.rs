//! The Q-value network: a message-passing embedding over the association
//! graph followed by a dueling value/advantage head, with a hand-derived
//! reverse-mode backward pass.
//!
//! Embedding recurrence (T rounds, E starts at zero, ReLU throughout):
//!
//! ```text
//! E'   = relu( x . theta1'              (selection lift)
//!            + (A.E / nF) . theta2      (neighbor embeddings)
//!            + (A.f / nF) . theta3'     (neighbor vertex weights)
//!            + (S   / nF) . theta4 )    (edge-weight lift, see below)
//! ```
//!
//! where A is the implicit association adjacency, nF a size normalizer, and
//! S[p] aggregates edge weights at p through theta5: by default
//! S[p][k] = sum over neighbors q of relu(w[p][q] * theta5[k]); the
//! alternative variant lifts the plain neighbor weight sum instead,
//! S[p][k] = relu((sum_q w[p][q]) * theta5[k]).
//!
//! Head: h5 = relu(E.theta6 + b1); a scalar value stream
//! hv = (sum_p h5[p]) . theta7 / (n1*n2) + b2 and a per-vertex advantage
//! ha = h5.theta8 + b3 combine as Q = hv + (ha - mean(ha)).
//!
//! Everything is plain `Vec<f64>`; sizes here are small enough that clarity
//! and bit-for-bit determinism beat BLAS. Action legality is not the
//! network's business: masking happens at selection time.

pub mod checkpoint;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::affinity::AssociationView;

/// Which edge-weight aggregation the embedding uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum H4Variant {
    /// relu per edge, then sum over neighbors (the default).
    PerEdge,
    /// Sum weights over neighbors, then one relu of the lifted sum.
    RowSumLift,
}

impl H4Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            H4Variant::PerEdge => "per-edge",
            H4Variant::RowSumLift => "row-sum",
        }
    }

    pub fn parse(s: &str) -> Option<H4Variant> {
        match s {
            "per-edge" => Some(H4Variant::PerEdge),
            "row-sum" => Some(H4Variant::RowSumLift),
            _ => None,
        }
    }
}

/// All learnable tensors. Field order is the serialization order.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct QNetParams {
    /// Embedding width.
    pub d: usize,
    /// Message-passing rounds.
    pub t: usize,
    pub h4_variant: H4Variant,
    pub theta1: Vec<f64>, // d
    pub theta2: Vec<f64>, // d x d
    pub theta3: Vec<f64>, // d
    pub theta4: Vec<f64>, // d x d
    pub theta5: Vec<f64>, // d
    pub theta6: Vec<f64>, // d x d
    pub theta7: Vec<f64>, // d
    pub theta8: Vec<f64>, // d
    pub b1: Vec<f64>,     // d
    pub b2: f64,
    pub b3: f64,
}

/// Uniform(-1/sqrt(d), 1/sqrt(d)) weights, zero biases, fixed draw order.
/// `t = 0` is legal and leaves the embedding identically zero.
pub fn init_params(d: usize, t: usize, h4_variant: H4Variant, seed: u64) -> QNetParams {
    assert!(d > 0, "width must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bound = 1.0 / (d as f64).sqrt();
    let mut tensor = |len: usize| -> Vec<f64> {
        (0..len)
            .map(|_| rng.gen::<f64>() * 2.0 * bound - bound)
            .collect()
    };
    QNetParams {
        d,
        t,
        h4_variant,
        theta1: tensor(d),
        theta2: tensor(d * d),
        theta3: tensor(d),
        theta4: tensor(d * d),
        theta5: tensor(d),
        theta6: tensor(d * d),
        theta7: tensor(d),
        theta8: tensor(d),
        b1: vec![0.0; d],
        b2: 0.0,
        b3: 0.0,
    }
}

/// One forward-pass input: a 0/1 selection indicator over the view's
/// vertices plus the normalization constant. The default is the uniform
/// association-graph degree (n1-1)*(n2-1), making every A-product a
/// neighbor average; degenerate 1-row/1-column graphs fall back to 1.
pub struct NetInput<'a> {
    pub x: &'a [f64],
    pub view: &'a AssociationView,
    pub n_factor: f64,
}

impl<'a> NetInput<'a> {
    pub fn new(x: &'a [f64], view: &'a AssociationView) -> Self {
        NetInput {
            x,
            view,
            n_factor: view.degree().max(1) as f64,
        }
    }
}

/// Intermediates the backward pass needs.
pub struct ForwardCache {
    /// E^1 .. E^T, each dim x d (E^0 is identically zero).
    e_levels: Vec<Vec<f64>>,
    /// M^t = A.E^t / nF for t = 0 .. T-1 (index 0 is all zeros).
    m_levels: Vec<Vec<f64>>,
    /// Edge lift S / nF, dim x d.
    s_scaled: Vec<f64>,
    /// A.f / nF.
    u: Vec<f64>,
    /// relu(E.theta6 + b1), dim x d.
    h5: Vec<f64>,
    /// Column sums of h5, length d.
    colsum: Vec<f64>,
}

/// Q-values only.
pub fn forward_q(params: &QNetParams, input: &NetInput) -> Vec<f64> {
    forward(params, input).0
}

/// Q-values plus the cache that [`backward`] consumes.
pub fn forward(params: &QNetParams, input: &NetInput) -> (Vec<f64>, ForwardCache) {
    let view = input.view;
    let dim = view.dim();
    let d = params.d;
    assert_eq!(input.x.len(), dim, "indicator length must be n1*n2");
    debug_assert!(params.theta1.len() == d && params.theta2.len() == d * d);
    let nf = input.n_factor;
    assert!(nf > 0.0, "n_factor must be positive");

    let mut s_scaled = edge_lift(params, view);
    for v in &mut s_scaled {
        *v /= nf;
    }
    let u: Vec<f64> = view.nbr_f_sum().iter().map(|v| v / nf).collect();

    // Round-invariant part of the pre-activation.
    let mut base = vec![0.0; dim * d];
    for p in 0..dim {
        let row = &mut base[p * d..(p + 1) * d];
        for k in 0..d {
            row[k] = input.x[p] * params.theta1[k] + u[p] * params.theta3[k];
        }
    }
    matmul_acc(&mut base, &s_scaled, dim, d, &params.theta4, d);

    let mut e = vec![0.0; dim * d];
    let mut e_levels = Vec::with_capacity(params.t);
    let mut m_levels = Vec::with_capacity(params.t);
    for round in 0..params.t {
        let m = if round == 0 {
            vec![0.0; dim * d]
        } else {
            let mut m = view.neighbor_sum_mat(&e, d);
            for v in &mut m {
                *v /= nf;
            }
            m
        };
        let mut z = base.clone();
        matmul_acc(&mut z, &m, dim, d, &params.theta2, d);
        for v in &mut z {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        e = z;
        m_levels.push(m);
        e_levels.push(e.clone());
    }

    // Dueling head.
    let mut h5 = vec![0.0; dim * d];
    for p in 0..dim {
        h5[p * d..(p + 1) * d].copy_from_slice(&params.b1);
    }
    matmul_acc(&mut h5, &e, dim, d, &params.theta6, d);
    for v in &mut h5 {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let mut colsum = vec![0.0; d];
    for p in 0..dim {
        let row = &h5[p * d..(p + 1) * d];
        for k in 0..d {
            colsum[k] += row[k];
        }
    }
    let denom = dim as f64;
    let hv = dot(&colsum, &params.theta7) / denom + params.b2;
    let mut ha = vec![0.0; dim];
    for p in 0..dim {
        ha[p] = dot(&h5[p * d..(p + 1) * d], &params.theta8) + params.b3;
    }
    let mean_a: f64 = ha.iter().sum::<f64>() / denom;
    let q: Vec<f64> = ha.iter().map(|a| hv + a - mean_a).collect();

    (
        q,
        ForwardCache {
            e_levels,
            m_levels,
            s_scaled,
            u,
            h5,
            colsum,
        },
    )
}

/// Reverse-mode gradients of `sum_p g_q[p] * Q[p]` with respect to every
/// parameter tensor. ReLU takes subgradient 0 at exactly 0.
pub fn backward(
    params: &QNetParams,
    input: &NetInput,
    cache: &ForwardCache,
    g_q: &[f64],
) -> Gradients {
    let view = input.view;
    let dim = view.dim();
    let d = params.d;
    assert_eq!(g_q.len(), dim, "upstream gradient length must be n1*n2");
    let nf = input.n_factor;
    let denom = dim as f64;
    let mut gr = Gradients::zeros_like(params);

    // Q[p] = hv + ha[p] - mean(ha).
    let sum_g: f64 = g_q.iter().sum();
    let dha: Vec<f64> = g_q.iter().map(|g| g - sum_g / denom).collect();
    let dhv = sum_g;

    // ha = h5.theta8 + b3 and hv = colsum.theta7 / denom + b2.
    let mut dh5 = vec![0.0; dim * d];
    for p in 0..dim {
        let h5_row = &cache.h5[p * d..(p + 1) * d];
        let dh5_row = &mut dh5[p * d..(p + 1) * d];
        for k in 0..d {
            gr.theta8[k] += h5_row[k] * dha[p];
            dh5_row[k] = dha[p] * params.theta8[k] + dhv * params.theta7[k] / denom;
        }
        gr.b3 += dha[p];
    }
    for k in 0..d {
        gr.theta7[k] += cache.colsum[k] * dhv / denom;
    }
    gr.b2 += dhv;

    // h5 = relu(E.theta6 + b1).
    let mut dy = dh5;
    for (v, &h) in dy.iter_mut().zip(&cache.h5) {
        if h <= 0.0 {
            *v = 0.0;
        }
    }
    let zero_embedding;
    let e_final = match cache.e_levels.last() {
        Some(e) => e.as_slice(),
        None => {
            // T = 0: the head saw the all-zero initial embedding.
            zero_embedding = vec![0.0; dim * d];
            &zero_embedding
        }
    };
    matmul_at_acc(&mut gr.theta6, e_final, dim, d, &dy, d);
    for p in 0..dim {
        let row = &dy[p * d..(p + 1) * d];
        for k in 0..d {
            gr.b1[k] += row[k];
        }
    }
    let mut g_e = vec![0.0; dim * d];
    matmul_bt_acc(&mut g_e, &dy, dim, d, &params.theta6, d);

    // Unroll the recurrence backwards; ds_scaled accumulates across rounds
    // because the edge lift feeds every round's pre-activation.
    let mut ds_scaled = vec![0.0; dim * d];
    for round in (0..params.t).rev() {
        let e_level = &cache.e_levels[round];
        let mut gz = g_e;
        for (v, &e) in gz.iter_mut().zip(e_level) {
            if e <= 0.0 {
                *v = 0.0;
            }
        }
        for p in 0..dim {
            let row = &gz[p * d..(p + 1) * d];
            let (xp, up) = (input.x[p], cache.u[p]);
            for k in 0..d {
                gr.theta1[k] += row[k] * xp;
                gr.theta3[k] += row[k] * up;
            }
        }
        matmul_at_acc(&mut gr.theta4, &cache.s_scaled, dim, d, &gz, d);
        matmul_bt_acc(&mut ds_scaled, &gz, dim, d, &params.theta4, d);
        if round == 0 {
            // E^0 is constant zero; nothing flows further back.
            break;
        }
        let m = &cache.m_levels[round];
        matmul_at_acc(&mut gr.theta2, m, dim, d, &gz, d);
        let mut dm = vec![0.0; dim * d];
        matmul_bt_acc(&mut dm, &gz, dim, d, &params.theta2, d);
        g_e = view.neighbor_sum_mat(&dm, d);
        for v in &mut g_e {
            *v /= nf;
        }
    }

    // theta5 through the edge lift, per variant; the lift was scaled by 1/nF.
    match params.h4_variant {
        H4Variant::PerEdge => {
            for k in 0..d {
                let t5 = params.theta5[k];
                if t5 == 0.0 {
                    continue;
                }
                let mut acc = 0.0;
                for p in 0..dim {
                    let slope = if t5 > 0.0 {
                        view.pos_nbr_sum()[p]
                    } else {
                        view.neg_nbr_sum()[p]
                    };
                    acc += ds_scaled[p * d + k] * slope;
                }
                gr.theta5[k] += acc / nf;
            }
        }
        H4Variant::RowSumLift => {
            for p in 0..dim {
                let total = view.pos_nbr_sum()[p] + view.neg_nbr_sum()[p];
                for k in 0..d {
                    if total * params.theta5[k] > 0.0 {
                        gr.theta5[k] += ds_scaled[p * d + k] * total / nf;
                    }
                }
            }
        }
    }

    gr
}

/// Gradient accumulator with the same tensor shapes as [`QNetParams`].
#[derive(Debug, Clone)]
pub struct Gradients {
    pub theta1: Vec<f64>,
    pub theta2: Vec<f64>,
    pub theta3: Vec<f64>,
    pub theta4: Vec<f64>,
    pub theta5: Vec<f64>,
    pub theta6: Vec<f64>,
    pub theta7: Vec<f64>,
    pub theta8: Vec<f64>,
    pub b1: Vec<f64>,
    pub b2: f64,
    pub b3: f64,
}

impl Gradients {
    pub fn zeros_like(p: &QNetParams) -> Self {
        let d = p.d;
        Gradients {
            theta1: vec![0.0; d],
            theta2: vec![0.0; d * d],
            theta3: vec![0.0; d],
            theta4: vec![0.0; d * d],
            theta5: vec![0.0; d],
            theta6: vec![0.0; d * d],
            theta7: vec![0.0; d],
            theta8: vec![0.0; d],
            b1: vec![0.0; d],
            b2: 0.0,
            b3: 0.0,
        }
    }

    pub fn add(&mut self, other: &Gradients) {
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (a, b) in dst.iter_mut().zip(src) {
                *a += b;
            }
        }
        self.b2 += other.b2;
        self.b3 += other.b3;
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            for v in t {
                *v *= factor;
            }
        }
        self.b2 *= factor;
        self.b3 *= factor;
    }

    pub fn global_norm(&self) -> f64 {
        let mut acc = self.b2 * self.b2 + self.b3 * self.b3;
        for t in self.tensors() {
            for v in t {
                acc += v * v;
            }
        }
        acc.sqrt()
    }

    /// Scale down so the global norm is at most `max_norm`; returns the norm
    /// measured before clipping.
    pub fn clip_global_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.global_norm();
        if norm > max_norm {
            self.scale(max_norm / norm);
        }
        norm
    }

    pub fn tensors(&self) -> [&[f64]; 9] {
        [
            &self.theta1,
            &self.theta2,
            &self.theta3,
            &self.theta4,
            &self.theta5,
            &self.theta6,
            &self.theta7,
            &self.theta8,
            &self.b1,
        ]
    }

    fn tensors_mut(&mut self) -> [&mut [f64]; 9] {
        [
            &mut self.theta1,
            &mut self.theta2,
            &mut self.theta3,
            &mut self.theta4,
            &mut self.theta5,
            &mut self.theta6,
            &mut self.theta7,
            &mut self.theta8,
            &mut self.b1,
        ]
    }
}

/// theta -= lr * grad on every tensor.
pub fn sgd_step(params: &mut QNetParams, grads: &Gradients, lr: f64) {
    let pairs: [(&mut Vec<f64>, &Vec<f64>); 9] = [
        (&mut params.theta1, &grads.theta1),
        (&mut params.theta2, &grads.theta2),
        (&mut params.theta3, &grads.theta3),
        (&mut params.theta4, &grads.theta4),
        (&mut params.theta5, &grads.theta5),
        (&mut params.theta6, &grads.theta6),
        (&mut params.theta7, &grads.theta7),
        (&mut params.theta8, &grads.theta8),
        (&mut params.b1, &grads.b1),
    ];
    for (tensor, grad) in pairs {
        for (v, g) in tensor.iter_mut().zip(grad) {
            *v -= lr * g;
        }
    }
    params.b2 -= lr * grads.b2;
    params.b3 -= lr * grads.b3;
}

fn edge_lift(params: &QNetParams, view: &AssociationView) -> Vec<f64> {
    let dim = view.dim();
    let d = params.d;
    let mut s = vec![0.0; dim * d];
    match params.h4_variant {
        H4Variant::PerEdge => {
            // relu(w*t5) summed over neighbors collapses to t5 * posSum or
            // t5 * negSum by the sign of t5, using the view's cached sums.
            for p in 0..dim {
                let pos = view.pos_nbr_sum()[p];
                let neg = view.neg_nbr_sum()[p];
                let row = &mut s[p * d..(p + 1) * d];
                for (k, slot) in row.iter_mut().enumerate() {
                    let t5 = params.theta5[k];
                    *slot = if t5 > 0.0 {
                        t5 * pos
                    } else if t5 < 0.0 {
                        t5 * neg
                    } else {
                        0.0
                    };
                }
            }
        }
        H4Variant::RowSumLift => {
            for p in 0..dim {
                let total = view.pos_nbr_sum()[p] + view.neg_nbr_sum()[p];
                let row = &mut s[p * d..(p + 1) * d];
                for (k, slot) in row.iter_mut().enumerate() {
                    *slot = (total * params.theta5[k]).max(0.0);
                }
            }
        }
    }
    s
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// C += A.B with row-major A (rows x inner) and B (inner x cols).
fn matmul_acc(c: &mut [f64], a: &[f64], rows: usize, inner: usize, b: &[f64], cols: usize) {
    debug_assert_eq!(a.len(), rows * inner);
    debug_assert_eq!(b.len(), inner * cols);
    debug_assert_eq!(c.len(), rows * cols);
    for r in 0..rows {
        let a_row = &a[r * inner..(r + 1) * inner];
        let c_row = &mut c[r * cols..(r + 1) * cols];
        for (j, &av) in a_row.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let b_row = &b[j * cols..(j + 1) * cols];
            for (ck, &bv) in c_row.iter_mut().zip(b_row) {
                *ck += av * bv;
            }
        }
    }
}

/// D += A'.G with A (rows x inner), G (rows x cols), D (inner x cols).
fn matmul_at_acc(d: &mut [f64], a: &[f64], rows: usize, inner: usize, g: &[f64], cols: usize) {
    debug_assert_eq!(a.len(), rows * inner);
    debug_assert_eq!(g.len(), rows * cols);
    debug_assert_eq!(d.len(), inner * cols);
    for r in 0..rows {
        let a_row = &a[r * inner..(r + 1) * inner];
        let g_row = &g[r * cols..(r + 1) * cols];
        for (j, &av) in a_row.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let d_row = &mut d[j * cols..(j + 1) * cols];
            for (dk, &gv) in d_row.iter_mut().zip(g_row) {
                *dk += av * gv;
            }
        }
    }
}

/// D += G.B' with G (rows x cols), B (inner x cols), D (rows x inner).
fn matmul_bt_acc(d: &mut [f64], g: &[f64], rows: usize, cols: usize, b: &[f64], inner: usize) {
    debug_assert_eq!(g.len(), rows * cols);
    debug_assert_eq!(b.len(), inner * cols);
    debug_assert_eq!(d.len(), rows * inner);
    for r in 0..rows {
        let g_row = &g[r * cols..(r + 1) * cols];
        let d_row = &mut d[r * inner..(r + 1) * inner];
        for j in 0..inner {
            d_row[j] += dot(g_row, &b[j * cols..(j + 1) * cols]);
        }
    }
}

#[cfg(test)]
mod tests;
