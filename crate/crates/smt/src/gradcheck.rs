//! Central finite-difference check of every parameter gradient.

use crate::loss::FocalLoss;
use crate::model::{backward, forward, Input};
use crate::params::{Dims, Params, MODALITIES, T};
use crate::pattern::Pattern;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

pub const STEP: f64 = 1e-5;
/// Denominator floor: below this both gradients count as zero and the
/// comparison becomes absolute.
pub const FLOOR: f64 = 1e-6;

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TensorErr {
    pub name: &'static str,
    pub count: usize,
    pub max_rel_err: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub dims: Dims,
    pub checked: usize,
    pub max_rel_err: f64,
    pub worst: String,
    pub tensors: Vec<TensorErr>,
}

impl GradcheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err < tol
    }
}

/// Random parameters with every tensor non-zero, including the relative
/// bias amplitudes that start at zero in training.
pub fn random_params(dims: Dims, seed: u64) -> Params {
    let mut p = Params::init(dims, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    for t in [T::RelU, T::RelV, T::ConvB, T::StaticB, T::SemiB, T::FuseBias, T::ClsB] {
        for v in p.get_mut(t) {
            *v = rng.random_range(-0.5..0.5);
        }
    }
    for v in p.get_mut(T::ClsW) {
        *v *= 3.0;
    }
    p
}

pub fn random_input(dims: &Dims, seed: u64) -> Input {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x1a7e);
    let mut v = |n: usize| (0..n).map(|_| rng.random_range(-1.5..1.5)).collect::<Vec<f64>>();
    Input { n: dims.window, window: v(dims.window * MODALITIES), static_f: v(dims.static_dim), semi: v(dims.semi_dim) }
}

/// Check all parameters of `p` at input `x` and label `y`.
pub fn check(p: &Params, x: &Input, y: usize, loss: &FocalLoss, tau: f64) -> GradcheckReport {
    let pattern = Pattern::new(x.n);
    let tr = forward(p, &pattern, x, tau);
    let (_, g) = backward(p, &pattern, x, &tr, y, loss, tau);
    let f = |q: &Params| loss.loss(&forward(q, &pattern, x, tau).probs, y);
    let mut q = p.clone();
    let mut tensors: Vec<TensorErr> = T::ALL.iter().map(|t| TensorErr { name: t.name(), count: 0, max_rel_err: 0.0 }).collect();
    let mut worst = (0.0, String::new());
    for i in 0..p.len() {
        let orig = q.data[i];
        q.data[i] = orig + STEP;
        let hi = f(&q);
        q.data[i] = orig - STEP;
        let lo = f(&q);
        q.data[i] = orig;
        let numeric = (hi - lo) / (2.0 * STEP);
        let e = rel_err(g.data[i], numeric);
        let (t, at) = p.locate(i);
        let te = &mut tensors[t as usize];
        te.count += 1;
        te.max_rel_err = te.max_rel_err.max(e);
        if e > worst.0 || worst.1.is_empty() {
            worst = (e, format!("{}[{at}] analytic {:.6e} numeric {:.6e}", t.name(), g.data[i], numeric));
        }
    }
    GradcheckReport { dims: p.dims, checked: p.len(), max_rel_err: worst.0, worst: worst.1, tensors }
}

/// Tiny model (n = 8, d = 4, H = 2), every label, plain cross-entropy and
/// focal weighting, and a non-unit temperature. One report per case.
pub fn suite(seed: u64) -> Vec<GradcheckReport> {
    let dims = Dims::tiny();
    let mut out = Vec::new();
    let losses = [FocalLoss::cross_entropy(), FocalLoss { gamma: 2.0, alpha: [0.6, 1.4, 2.1] }];
    for (k, loss) in losses.iter().enumerate() {
        for y in 0..3 {
            let s = seed.wrapping_add((k * 3 + y) as u64);
            let tau = if y == 2 { 1.7 } else { 1.0 };
            out.push(check(&random_params(dims, s), &random_input(&dims, s), y, loss, tau));
        }
    }
    out
}
