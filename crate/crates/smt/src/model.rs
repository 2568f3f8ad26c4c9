//! Forward pass, hand-derived backward pass, and the loaded model.
//!
//! Shapes (row-major, `n` timesteps, `d` model width, `H` heads):
//!
//! ```text
//! P   n x 9     3x3 neighbourhood of every (t, m), averaged over m
//! E   n x d     P W_convᵀ + b_conv
//! Q,K,V         E W_q, E W_k, E W_v
//! C   n x d     per-head sparse softmax(q k / sqrt(d_h) + b_h(i - j)) v
//! Z   n x d     tanh(E + C W_o)
//! s   d         attention pool of Z with query q1
//! f   d         attention over [s, W_s x_s + b_s, W_m x_m + b_m] with query q2
//! p   3         softmax((W_c f + b_c) / tau)
//! ```

use crate::dataset::{Normalizer, Sample};
use crate::loss::FocalLoss;
use crate::ops::{dot, matmul, matmul_nt, matmul_tn_acc, softmax, softmax_backward};
use crate::params::{Dims, Params, CLASSES, MODALITIES, T, TAPS};
use crate::pattern::Pattern;
use crate::{RiskScore, SmtError};

/// One normalized model input.
#[derive(Clone, Debug, PartialEq)]
pub struct Input {
    pub n: usize,
    /// `n x 4`: HR, SpO2, RR, temperature.
    pub window: Vec<f64>,
    pub static_f: Vec<f64>,
    pub semi: Vec<f64>,
}

impl Input {
    pub fn validate(&self, dims: &Dims) -> Result<(), SmtError> {
        if self.n < 3 {
            return Err(SmtError::Shape(format!("window of {} steps is shorter than the 3-step kernel", self.n)));
        }
        if self.window.len() != self.n * MODALITIES {
            return Err(SmtError::Shape(format!("window has {} values, expected {}", self.window.len(), self.n * MODALITIES)));
        }
        if self.static_f.len() != dims.static_dim || self.semi.len() != dims.semi_dim {
            return Err(SmtError::Shape(format!(
                "feature lengths {}/{} do not match model {}/{}",
                self.static_f.len(),
                self.semi.len(),
                dims.static_dim,
                dims.semi_dim
            )));
        }
        if self.window.iter().chain(&self.static_f).chain(&self.semi).any(|v| !v.is_finite()) {
            return Err(SmtError::Shape("non-finite input".into()));
        }
        Ok(())
    }
}

/// Same-padded 3x3 neighbourhoods, mean over the modality axis.
pub fn conv_patches(x: &[f64], n: usize) -> Vec<f64> {
    let m = MODALITIES as isize;
    let mut out = vec![0.0; n * TAPS];
    for t in 0..n {
        for a in 0..3 {
            let tt = t as isize + a as isize - 1;
            if tt < 0 || tt >= n as isize {
                continue;
            }
            let row = &x[tt as usize * MODALITIES..(tt as usize + 1) * MODALITIES];
            for b in 0..3 {
                let mut s = 0.0;
                for c in 0..m {
                    let cc = c + b as isize - 1;
                    if (0..m).contains(&cc) {
                        s += row[cc as usize];
                    }
                }
                out[t * TAPS + a * 3 + b] = s / MODALITIES as f64;
            }
        }
    }
    out
}

pub fn embed_patches(patches: &[f64], n: usize, p: &Params) -> Vec<f64> {
    let d = p.dims.d;
    let mut e = matmul_nt(patches, n, TAPS, p.get(T::ConvW), d);
    let b = p.get(T::ConvB);
    for row in e.chunks_mut(d) {
        for (v, bb) in row.iter_mut().zip(b) {
            *v += bb;
        }
    }
    e
}

/// Conv embedding of an `n x 4` window.
pub fn embed_window(x: &[f64], n: usize, p: &Params) -> Result<Vec<f64>, SmtError> {
    if n < 3 || x.len() != n * MODALITIES {
        return Err(SmtError::Shape(format!("embed needs n >= 3 and n x 4 values, got n = {n}, {} values", x.len())));
    }
    Ok(embed_patches(&conv_patches(x, n), n, p))
}

/// `b_h(delta) = sum_k u_hk sin(w_k delta) + v_hk cos(w_k delta)`
pub fn rel_bias(p: &Params, h: usize, delta: f64) -> f64 {
    let k = p.dims.freqs;
    let (om, u, v) = (p.get(T::Omega), &p.get(T::RelU)[h * k..(h + 1) * k], &p.get(T::RelV)[h * k..(h + 1) * k]);
    (0..k).map(|i| u[i] * (om[i] * delta).sin() + v[i] * (om[i] * delta).cos()).sum()
}

/// Bias per head and pattern offset, `H x offsets`.
pub fn bias_table(p: &Params, pattern: &Pattern) -> Vec<f64> {
    let mut out = Vec::with_capacity(p.dims.heads * pattern.offsets.len());
    for h in 0..p.dims.heads {
        for &o in &pattern.offsets {
            // offsets are j - i; the bias takes i - j
            out.push(rel_bias(p, h, -o as f64));
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct Attention {
    /// Softmax weight per head and edge, `H x edges`.
    pub weights: Vec<f64>,
    /// Concatenated head outputs, `n x d`.
    pub context: Vec<f64>,
}

/// Multi-head attention restricted to `pattern`.
pub fn attend(q: &[f64], k: &[f64], v: &[f64], d: usize, heads: usize, bias: &[f64], pattern: &Pattern) -> Attention {
    let n = pattern.n;
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let edges = pattern.edges();
    let no = pattern.offsets.len();
    let mut weights = vec![0.0; heads * edges];
    let mut context = vec![0.0; n * d];
    let mut scores = Vec::new();
    for h in 0..heads {
        let cols = h * dh..(h + 1) * dh;
        for i in 0..n {
            let range = pattern.start[i]..pattern.start[i + 1];
            let qi = &q[i * d..][cols.clone()];
            scores.clear();
            for e in range.clone() {
                let j = pattern.key[e];
                scores.push(dot(qi, &k[j * d..][cols.clone()]) * scale + bias[h * no + pattern.offset_idx[e]]);
            }
            softmax(&mut scores);
            let ci = &mut context[i * d..][cols.clone()];
            for (e, &w) in range.zip(&scores) {
                weights[h * edges + e] = w;
                let vj = &v[pattern.key[e] * d..][cols.clone()];
                for (c, vv) in ci.iter_mut().zip(vj) {
                    *c += w * vv;
                }
            }
        }
    }
    Attention { weights, context }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Fusion {
    /// Stage 1 weights over timesteps.
    pub pool_weights: Vec<f64>,
    pub summary: Vec<f64>,
    /// Stage 2 weights over `[summary, static, semi-static]`.
    pub source_weights: [f64; 3],
    pub fused: Vec<f64>,
}

pub fn project(w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
    let cols = x.len();
    b.iter().enumerate().map(|(j, bj)| bj + dot(&w[j * cols..(j + 1) * cols], x)).collect()
}

/// Two-stage attention fusion of the vital sequence `z` (`n x d`) with the
/// projected static and semi-static embeddings.
pub fn fuse(z: &[f64], n: usize, e_static: &[f64], e_semi: &[f64], p: &Params) -> Fusion {
    let d = p.dims.d;
    let sd = (d as f64).sqrt();
    let q1 = p.get(T::PoolQ);
    let mut pool_weights: Vec<f64> = (0..n).map(|t| dot(&z[t * d..(t + 1) * d], q1) / sd).collect();
    softmax(&mut pool_weights);
    let mut summary = vec![0.0; d];
    for (t, w) in pool_weights.iter().enumerate() {
        for (s, zz) in summary.iter_mut().zip(&z[t * d..(t + 1) * d]) {
            *s += w * zz;
        }
    }
    let q2 = p.get(T::FuseQ);
    let beta = p.get(T::FuseBias);
    let sources = [&summary[..], e_static, e_semi];
    let mut sw = [0.0; 3];
    for (k, c) in sources.iter().enumerate() {
        sw[k] = dot(q2, c) / sd + beta[k];
    }
    softmax(&mut sw);
    let mut fused = vec![0.0; d];
    for (k, c) in sources.iter().enumerate() {
        for (f, cc) in fused.iter_mut().zip(c.iter()) {
            *f += sw[k] * cc;
        }
    }
    Fusion { pool_weights, summary, source_weights: sw, fused }
}

pub fn class_logits(fused: &[f64], p: &Params) -> [f64; CLASSES] {
    let l = project(p.get(T::ClsW), p.get(T::ClsB), fused);
    [l[0], l[1], l[2]]
}

pub fn scaled_softmax(logits: &[f64; CLASSES], tau: f64) -> [f64; CLASSES] {
    let mut z = logits.map(|v| v / tau);
    softmax(&mut z);
    z
}

pub fn classify(fused: &[f64], p: &Params, tau: f64) -> RiskScore {
    RiskScore::from_probs(scaled_softmax(&class_logits(fused, p), tau))
}

/// Intermediate values kept for the backward pass.
#[derive(Clone, Debug)]
pub struct Trace {
    pub patches: Vec<f64>,
    pub e: Vec<f64>,
    pub q: Vec<f64>,
    pub k: Vec<f64>,
    pub v: Vec<f64>,
    pub attn: Attention,
    pub z: Vec<f64>,
    pub e_static: Vec<f64>,
    pub e_semi: Vec<f64>,
    pub fusion: Fusion,
    pub logits: [f64; CLASSES],
    pub probs: [f64; CLASSES],
}

/// `pattern.n` must equal `x.n`.
pub fn forward(p: &Params, pattern: &Pattern, x: &Input, tau: f64) -> Trace {
    let Dims { d, heads, .. } = p.dims;
    let n = x.n;
    debug_assert_eq!(pattern.n, n);
    let patches = conv_patches(&x.window, n);
    let e = embed_patches(&patches, n, p);
    let q = matmul(&e, n, d, p.get(T::Wq), d);
    let k = matmul(&e, n, d, p.get(T::Wk), d);
    let v = matmul(&e, n, d, p.get(T::Wv), d);
    let attn = attend(&q, &k, &v, d, heads, &bias_table(p, pattern), pattern);
    let mut z = matmul(&attn.context, n, d, p.get(T::Wo), d);
    for (zz, ee) in z.iter_mut().zip(&e) {
        *zz = (*zz + ee).tanh();
    }
    let e_static = project(p.get(T::StaticW), p.get(T::StaticB), &x.static_f);
    let e_semi = project(p.get(T::SemiW), p.get(T::SemiB), &x.semi);
    let fusion = fuse(&z, n, &e_static, &e_semi, p);
    let logits = class_logits(&fusion.fused, p);
    let probs = scaled_softmax(&logits, tau);
    Trace { patches, e, q, k, v, attn, z, e_static, e_semi, fusion, logits, probs }
}

/// Loss at label `y` and its gradient with respect to every parameter.
pub fn backward(p: &Params, pattern: &Pattern, x: &Input, tr: &Trace, y: usize, loss: &FocalLoss, tau: f64) -> (f64, Params) {
    let Dims { d, heads, freqs, .. } = p.dims;
    let n = x.n;
    let sd = (d as f64).sqrt();
    let mut g = Params::zeros(p.dims);

    // head
    let mut dp = [0.0; CLASSES];
    dp[y] = loss.grad_py(&tr.probs, y);
    let dl: Vec<f64> = softmax_backward(&tr.probs, &dp).into_iter().map(|v| v / tau).collect();
    let f = &tr.fusion.fused;
    outer_acc(g.get_mut(T::ClsW), &dl, f);
    g.get_mut(T::ClsB).copy_from_slice(&dl);
    let wc = p.get(T::ClsW);
    let mut df = vec![0.0; d];
    for (c, dlc) in dl.iter().enumerate() {
        axpy(&mut df, *dlc, &wc[c * d..(c + 1) * d]);
    }

    // fusion stage 2
    let fu = &tr.fusion;
    let sources = [&fu.summary[..], &tr.e_static[..], &tr.e_semi[..]];
    let dw: Vec<f64> = sources.iter().map(|c| dot(c, &df)).collect();
    let dlog = softmax_backward(&fu.source_weights, &dw);
    g.get_mut(T::FuseBias).copy_from_slice(&dlog);
    let q2 = p.get(T::FuseQ);
    let mut dsrc = vec![vec![0.0; d]; 3];
    for k in 0..3 {
        axpy(&mut dsrc[k], fu.source_weights[k], &df);
        axpy(&mut dsrc[k], dlog[k] / sd, q2);
        axpy(g.get_mut(T::FuseQ), dlog[k] / sd, sources[k]);
    }
    outer_acc(g.get_mut(T::StaticW), &dsrc[1], &x.static_f);
    g.get_mut(T::StaticB).copy_from_slice(&dsrc[1]);
    outer_acc(g.get_mut(T::SemiW), &dsrc[2], &x.semi);
    g.get_mut(T::SemiB).copy_from_slice(&dsrc[2]);

    // fusion stage 1
    let ds = &dsrc[0];
    let z = &tr.z;
    let alpha = &fu.pool_weights;
    let dalpha: Vec<f64> = (0..n).map(|t| dot(ds, &z[t * d..(t + 1) * d])).collect();
    let dgate = softmax_backward(alpha, &dalpha);
    let q1 = p.get(T::PoolQ);
    let mut dy = vec![0.0; n * d];
    for t in 0..n {
        let zt = &z[t * d..(t + 1) * d];
        axpy(g.get_mut(T::PoolQ), dgate[t] / sd, zt);
        let row = &mut dy[t * d..(t + 1) * d];
        axpy(row, alpha[t], ds);
        axpy(row, dgate[t] / sd, q1);
        // through tanh
        for (r, zz) in row.iter_mut().zip(zt) {
            *r *= 1.0 - zz * zz;
        }
    }

    // residual block
    matmul_tn_acc(&tr.attn.context, n, d, &dy, d, g.get_mut(T::Wo));
    let dc = matmul_nt(&dy, n, d, p.get(T::Wo), d);
    let mut de = dy;

    // attention
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let edges = pattern.edges();
    let no = pattern.offsets.len();
    let mut dq = vec![0.0; n * d];
    let mut dk = vec![0.0; n * d];
    let mut dv = vec![0.0; n * d];
    let mut dbias = vec![0.0; heads * no];
    let mut da = Vec::new();
    for h in 0..heads {
        let cols = h * dh..(h + 1) * dh;
        for i in 0..n {
            let range = pattern.start[i]..pattern.start[i + 1];
            let dci = &dc[i * d..][cols.clone()];
            da.clear();
            let mut inner = 0.0;
            for e in range.clone() {
                let j = pattern.key[e];
                let w = tr.attn.weights[h * edges + e];
                let a = dot(dci, &tr.v[j * d..][cols.clone()]);
                axpy(&mut dv[j * d..][cols.clone()], w, dci);
                inner += w * a;
                da.push(a);
            }
            for (e, a) in range.zip(&da) {
                let j = pattern.key[e];
                let w = tr.attn.weights[h * edges + e];
                let dscore = w * (a - inner);
                axpy(&mut dq[i * d..][cols.clone()], dscore * scale, &tr.k[j * d..][cols.clone()]);
                axpy(&mut dk[j * d..][cols.clone()], dscore * scale, &tr.q[i * d..][cols.clone()]);
                dbias[h * no + pattern.offset_idx[e]] += dscore;
            }
        }
    }

    // relative bias
    let om = p.get(T::Omega).to_vec();
    let (u, v) = (p.get(T::RelU).to_vec(), p.get(T::RelV).to_vec());
    let mut gom = vec![0.0; freqs];
    {
        let gu = g.get_mut(T::RelU);
        for h in 0..heads {
            for (oi, &o) in pattern.offsets.iter().enumerate() {
                let delta = -o as f64;
                let db = dbias[h * no + oi];
                for k in 0..freqs {
                    let (s, c) = (om[k] * delta).sin_cos();
                    gu[h * freqs + k] += db * s;
                    gom[k] += db * delta * (u[h * freqs + k] * c - v[h * freqs + k] * s);
                }
            }
        }
    }
    {
        let gv = g.get_mut(T::RelV);
        for h in 0..heads {
            for (oi, &o) in pattern.offsets.iter().enumerate() {
                let db = dbias[h * no + oi];
                for k in 0..freqs {
                    gv[h * freqs + k] += db * (om[k] * -o as f64).cos();
                }
            }
        }
    }
    g.get_mut(T::Omega).copy_from_slice(&gom);

    // projections
    for (t, dm) in [(T::Wq, &dq), (T::Wk, &dk), (T::Wv, &dv)] {
        matmul_tn_acc(&tr.e, n, d, dm, d, g.get_mut(t));
        for (a, b) in de.iter_mut().zip(matmul_nt(dm, n, d, p.get(t), d)) {
            *a += b;
        }
    }

    // convolution
    matmul_tn_acc(&de, n, d, &tr.patches, TAPS, g.get_mut(T::ConvW));
    let gb = g.get_mut(T::ConvB);
    for row in de.chunks(d) {
        for (b, r) in gb.iter_mut().zip(row) {
            *b += r;
        }
    }

    (loss.loss(&tr.probs, y), g)
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yy, xx) in y.iter_mut().zip(x) {
        *yy += a * xx;
    }
}

/// `out += a bᵀ`, `out` is `a.len() x b.len()`.
fn outer_acc(out: &mut [f64], a: &[f64], b: &[f64]) {
    for (i, ai) in a.iter().enumerate() {
        axpy(&mut out[i * b.len()..(i + 1) * b.len()], *ai, b);
    }
}

/// Trained parameters plus everything needed to run them on raw samples.
/// Immutable after construction; share it behind an `Arc`.
#[derive(Clone, Debug)]
pub struct Model {
    pub params: Params,
    pub tau: f64,
    pub norm: Normalizer,
    pattern: Pattern,
}

impl Model {
    pub fn new(params: Params, tau: f64, norm: Normalizer) -> Result<Self, SmtError> {
        params.dims.validate()?;
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(SmtError::Config(format!("temperature {tau} must be positive")));
        }
        if !params.all_finite() {
            return Err(SmtError::Config("non-finite parameters".into()));
        }
        norm.check(&params.dims)?;
        let pattern = Pattern::new(params.dims.window);
        Ok(Model { params, tau, norm, pattern })
    }

    pub fn dims(&self) -> Dims {
        self.params.dims
    }

    pub fn pattern(&self) -> &Pattern {
        &self.pattern
    }

    pub fn with_tau(mut self, tau: f64) -> Self {
        self.tau = tau;
        self
    }

    pub fn prepare(&self, s: &Sample) -> Result<Input, SmtError> {
        let x = self.norm.apply(s, &self.params.dims)?;
        x.validate(&self.params.dims)?;
        Ok(x)
    }

    /// Raw logits (before temperature) of a prepared input.
    pub fn logits(&self, x: &Input) -> Result<[f64; CLASSES], SmtError> {
        x.validate(&self.params.dims)?;
        if x.n != self.params.dims.window {
            return Err(SmtError::Shape(format!("window of {} steps, model expects {}", x.n, self.params.dims.window)));
        }
        Ok(forward(&self.params, &self.pattern, x, 1.0).logits)
    }

    pub fn predict_input(&self, x: &Input) -> Result<RiskScore, SmtError> {
        Ok(RiskScore::from_probs(scaled_softmax(&self.logits(x)?, self.tau)))
    }

    pub fn predict(&self, s: &Sample) -> Result<RiskScore, SmtError> {
        self.predict_input(&self.prepare(s)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_vec(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
        (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn random_input(rng: &mut ChaCha8Rng, dims: &Dims, n: usize) -> Input {
        Input {
            n,
            window: rand_vec(rng, n * MODALITIES),
            static_f: rand_vec(rng, dims.static_dim),
            semi: rand_vec(rng, dims.semi_dim),
        }
    }

    /// Dense reference: full `n x n` scores with every pair outside the
    /// pattern masked to -inf. The mask is rebuilt from the offset rule, not
    /// from the CSR arrays.
    fn dense_masked(q: &[f64], k: &[f64], v: &[f64], n: usize, d: usize, heads: usize, p: &Params) -> Vec<f64> {
        let dh = d / heads;
        let top = 1u64 << crate::pattern::levels(n);
        let mut out = vec![0.0; n * d];
        for h in 0..heads {
            for i in 0..n {
                let mut s = vec![f64::NEG_INFINITY; n];
                for (j, sj) in s.iter_mut().enumerate() {
                    let dist = (i as i64 - j as i64).unsigned_abs();
                    if dist == 0 || (dist.is_power_of_two() && dist < top) {
                        let qk: f64 = (0..dh).map(|c| q[i * d + h * dh + c] * k[j * d + h * dh + c]).sum();
                        *sj = qk / (dh as f64).sqrt() + rel_bias(p, h, i as f64 - j as f64);
                    }
                }
                let m = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let w: Vec<f64> = s.iter().map(|x| (x - m).exp()).collect();
                let z: f64 = w.iter().sum();
                for j in 0..n {
                    for c in 0..dh {
                        out[i * d + h * dh + c] += w[j] / z * v[j * d + h * dh + c];
                    }
                }
            }
        }
        out
    }

    fn random_params(dims: Dims, seed: u64) -> Params {
        let mut p = Params::init(dims, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 99);
        for t in [T::RelU, T::RelV, T::ConvB, T::StaticB, T::SemiB, T::FuseBias, T::ClsB] {
            for v in p.get_mut(t) {
                *v = rng.random_range(-0.5..0.5);
            }
        }
        p
    }

    #[test]
    fn sparse_matches_dense_masked() {
        for (n, seed) in [(2usize, 1u64), (3, 2), (8, 3), (17, 4), (64, 5), (300, 6)] {
            let dims = Dims { window: n.max(8), d: 16, heads: 4, ..Dims::default() };
            let p = random_params(dims, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (q, k, v) = (rand_vec(&mut rng, n * 16), rand_vec(&mut rng, n * 16), rand_vec(&mut rng, n * 16));
            let pat = Pattern::new(n);
            let got = attend(&q, &k, &v, 16, 4, &bias_table(&p, &pat), &pat).context;
            let want = dense_masked(&q, &k, &v, n, 16, 4, &p);
            let err = got.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-10, "n={n} err={err}");
        }
    }

    #[test]
    fn n2_is_full_attention() {
        let dims = Dims { d: 8, heads: 2, ..Dims::tiny() };
        let p = random_params(dims, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (q, k, v) = (rand_vec(&mut rng, 16), rand_vec(&mut rng, 16), rand_vec(&mut rng, 16));
        let pat = Pattern::new(2);
        let got = attend(&q, &k, &v, 8, 2, &bias_table(&p, &pat), &pat).context;
        // unmasked softmax over both keys
        for h in 0..2 {
            for i in 0..2 {
                let s: Vec<f64> = (0..2)
                    .map(|j| {
                        (0..4).map(|c| q[i * 8 + h * 4 + c] * k[j * 8 + h * 4 + c]).sum::<f64>() / 2.0
                            + rel_bias(&p, h, i as f64 - j as f64)
                    })
                    .collect();
                let w0 = 1.0 / (1.0 + (s[1] - s[0]).exp());
                for c in 0..4 {
                    let want = w0 * v[h * 4 + c] + (1.0 - w0) * v[8 + h * 4 + c];
                    assert!((got[i * 8 + h * 4 + c] - want).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn uniform_keys_average_by_bias_only() {
        let n = 40;
        let dims = Dims { d: 8, heads: 2, ..Dims::tiny() };
        let p = random_params(dims, 11);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let q = rand_vec(&mut rng, n * 8);
        let row = rand_vec(&mut rng, 8);
        let k: Vec<f64> = (0..n).flat_map(|_| row.clone()).collect();
        let v = rand_vec(&mut rng, n * 8);
        let pat = Pattern::new(n);
        let got = attend(&q, &k, &v, 8, 2, &bias_table(&p, &pat), &pat).context;
        for h in 0..2 {
            for i in 0..n {
                let nb = pat.neighbors(i);
                let b: Vec<f64> = nb.iter().map(|&j| rel_bias(&p, h, i as f64 - j as f64).exp()).collect();
                let z: f64 = b.iter().sum();
                for c in 0..4 {
                    let want: f64 = nb.iter().zip(&b).map(|(&j, w)| w / z * v[j * 8 + h * 4 + c]).sum();
                    assert!((got[i * 8 + h * 4 + c] - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn relative_bias_depends_on_offset_only() {
        let p = random_params(Dims::default(), 5);
        let v0: f64 = p.get(T::RelV)[8..16].iter().sum();
        assert!((rel_bias(&p, 1, 0.0) - v0).abs() < 1e-15);
        let pat = Pattern::new(50);
        let table = bias_table(&p, &pat);
        for i in 0..50 {
            for (e, &j) in pat.neighbors(i).iter().enumerate() {
                let e = pat.start[i] + e;
                let direct = rel_bias(&p, 2, i as f64 - j as f64);
                assert_eq!(table[2 * pat.offsets.len() + pat.offset_idx[e]], direct);
            }
        }
    }

    #[test]
    fn embed_examples() {
        let mut p = Params::init(Dims::default(), 1);
        assert_eq!(embed_window(&vec![0.0; 300 * 4], 300, &p).unwrap(), vec![0.0; 300 * 64]);
        assert_eq!(embed_window(&vec![0.5; 300 * 4], 300, &p).unwrap().len(), 300 * 64);
        assert!(embed_window(&[0.0; 8], 2, &p).is_err());
        // center tap only, replicated over channels
        let w = p.get_mut(T::ConvW);
        w.fill(0.0);
        for c in 0..64 {
            w[c * 9 + 4] = 1.0;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = rand_vec(&mut rng, 10 * 4);
        let e = embed_window(&x, 10, &p).unwrap();
        for t in 0..10 {
            let mean = x[t * 4..t * 4 + 4].iter().sum::<f64>() / 4.0;
            assert!(e[t * 64..(t + 1) * 64].iter().all(|v| (v - mean).abs() < 1e-15));
        }
    }

    #[test]
    fn fuse_examples() {
        let dims = Dims { d: 8, heads: 2, ..Dims::tiny() };
        let p = random_params(dims, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let z = rand_vec(&mut rng, 12 * 8);
        let (a, b) = (rand_vec(&mut rng, 8), rand_vec(&mut rng, 8));
        let f = fuse(&z, 12, &a, &b, &p);
        assert!((f.source_weights.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!((f.pool_weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);

        // swapping the non-vital sources along with their logit biases
        let mut swapped = p.clone();
        let beta = swapped.get_mut(T::FuseBias);
        beta.swap(1, 2);
        let g = fuse(&z, 12, &b, &a, &swapped);
        for (x, y) in f.fused.iter().zip(&g.fused) {
            assert!((x - y).abs() < 1e-14);
        }

        // zero projections and a dominant summary bias
        let mut lim = p.clone();
        lim.get_mut(T::FuseBias).copy_from_slice(&[800.0, 0.0, 0.0]);
        let zero = vec![0.0; 8];
        let h = fuse(&z, 12, &zero, &zero, &lim);
        assert_eq!(h.fused, h.summary);
    }

    #[test]
    fn classify_examples() {
        let mut p = Params::zeros(Dims::tiny());
        let f = vec![0.3; 4];
        let r = classify(&f, &p, 1.0);
        assert!(r.probs().iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
        p.get_mut(T::ClsB).copy_from_slice(&[10.0, 0.0, 0.0]);
        assert!(classify(&f, &p, 1.0).p_low > 0.9999);
        let r = classify(&f, &p, 1e6);
        assert!(r.probs().iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-5));
    }

    #[test]
    fn forward_is_deterministic_and_on_simplex() {
        let dims = Dims { d: 16, ..Dims::default() };
        let p = random_params(dims, 9);
        let pat = Pattern::new(300);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random_input(&mut rng, &dims, 300);
        let a = forward(&p, &pat, &x, 1.0);
        let b = forward(&p, &pat, &x, 1.0);
        assert_eq!(a.probs, b.probs);
        assert!(RiskScore::from_probs(a.probs).is_simplex(1e-12));
    }

    #[test]
    fn backward_zero_loss_direction() {
        // gradient step lowers the loss for a small step
        let dims = Dims::tiny();
        let p = random_params(dims, 21);
        let pat = Pattern::new(8);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let x = random_input(&mut rng, &dims, 8);
        let fl = FocalLoss { gamma: 2.0, alpha: [1.0, 2.0, 0.5] };
        let tr = forward(&p, &pat, &x, 1.0);
        let (l0, g) = backward(&p, &pat, &x, &tr, 1, &fl, 1.0);
        let mut q = p.clone();
        q.add_scaled(&g, -1e-3);
        let l1 = fl.loss(&forward(&q, &pat, &x, 1.0).probs, 1);
        assert!(l1 < l0);
    }
}
