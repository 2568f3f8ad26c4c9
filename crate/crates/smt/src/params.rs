//! Model dimensions and the flat parameter vector.

use crate::SmtError;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::ops::Range;

pub const MODALITIES: usize = 4;
pub const CLASSES: usize = 3;
/// 3 x 3 convolution taps.
pub const TAPS: usize = 9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    /// Samples per window (seconds at 1 Hz).
    pub window: usize,
    pub d: usize,
    pub heads: usize,
    /// Sinusoid count in the relative position bias.
    pub freqs: usize,
    pub static_dim: usize,
    pub semi_dim: usize,
}

impl Default for Dims {
    fn default() -> Self {
        Dims { window: 300, d: 64, heads: 4, freqs: 8, static_dim: 3, semi_dim: 6 }
    }
}

impl Dims {
    /// Gradient-check size.
    pub fn tiny() -> Self {
        Dims { window: 8, d: 4, heads: 2, freqs: 3, static_dim: 3, semi_dim: 6 }
    }

    pub fn validate(&self) -> Result<(), SmtError> {
        if self.window < 8 {
            return Err(SmtError::Config(format!("window {} < 8", self.window)));
        }
        if self.d == 0 || self.heads == 0 || self.d % self.heads != 0 {
            return Err(SmtError::Config(format!("d = {} must be a positive multiple of heads = {}", self.d, self.heads)));
        }
        if self.freqs == 0 {
            return Err(SmtError::Config("need at least one frequency".into()));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d / self.heads
    }
}

/// Named tensors in storage order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum T {
    ConvW,
    ConvB,
    Wq,
    Wk,
    Wv,
    Wo,
    Omega,
    RelU,
    RelV,
    PoolQ,
    StaticW,
    StaticB,
    SemiW,
    SemiB,
    FuseQ,
    FuseBias,
    ClsW,
    ClsB,
}

impl T {
    pub const ALL: [T; 18] = [
        T::ConvW,
        T::ConvB,
        T::Wq,
        T::Wk,
        T::Wv,
        T::Wo,
        T::Omega,
        T::RelU,
        T::RelV,
        T::PoolQ,
        T::StaticW,
        T::StaticB,
        T::SemiW,
        T::SemiB,
        T::FuseQ,
        T::FuseBias,
        T::ClsW,
        T::ClsB,
    ];

    /// (rows, cols), row-major.
    pub fn shape(self, m: &Dims) -> (usize, usize) {
        match self {
            T::ConvW => (m.d, TAPS),
            T::ConvB | T::PoolQ | T::StaticB | T::SemiB | T::FuseQ => (1, m.d),
            T::Wq | T::Wk | T::Wv | T::Wo => (m.d, m.d),
            T::Omega => (1, m.freqs),
            T::RelU | T::RelV => (m.heads, m.freqs),
            T::StaticW => (m.d, m.static_dim),
            T::SemiW => (m.d, m.semi_dim),
            T::FuseBias => (1, 3),
            T::ClsW => (CLASSES, m.d),
            T::ClsB => (1, CLASSES),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            T::ConvW => "conv_w",
            T::ConvB => "conv_b",
            T::Wq => "wq",
            T::Wk => "wk",
            T::Wv => "wv",
            T::Wo => "wo",
            T::Omega => "omega",
            T::RelU => "rel_u",
            T::RelV => "rel_v",
            T::PoolQ => "pool_q",
            T::StaticW => "static_w",
            T::StaticB => "static_b",
            T::SemiW => "semi_w",
            T::SemiB => "semi_b",
            T::FuseQ => "fuse_q",
            T::FuseBias => "fuse_bias",
            T::ClsW => "cls_w",
            T::ClsB => "cls_b",
        }
    }
}

/// Flat parameter (or gradient) vector with named views.
#[derive(Clone, Debug, PartialEq)]
pub struct Params {
    pub dims: Dims,
    pub data: Vec<f64>,
    offsets: Vec<usize>,
}

impl Params {
    pub fn zeros(dims: Dims) -> Self {
        let mut offsets = Vec::with_capacity(T::ALL.len() + 1);
        let mut at = 0;
        for t in T::ALL {
            offsets.push(at);
            let (r, c) = t.shape(&dims);
            at += r * c;
        }
        offsets.push(at);
        Params { dims, data: vec![0.0; at], offsets }
    }

    pub fn from_data(dims: Dims, data: Vec<f64>) -> Result<Self, SmtError> {
        let mut p = Params::zeros(dims);
        if data.len() != p.data.len() {
            return Err(SmtError::Format(format!("expected {} parameters, found {}", p.data.len(), data.len())));
        }
        p.data = data;
        Ok(p)
    }

    /// Seeded initialization: scaled normals for weights, geometric
    /// frequencies, zero biases and zero relative-bias amplitudes.
    pub fn init(dims: Dims, seed: u64) -> Self {
        let mut p = Params::zeros(dims);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fill = |p: &mut Params, t: T, std: f64| {
            let n = Normal::new(0.0, std).expect("positive std");
            for v in p.get_mut(t) {
                *v = n.sample(&mut rng);
            }
        };
        let d = dims.d as f64;
        fill(&mut p, T::ConvW, 1.0 / 3.0);
        for t in [T::Wq, T::Wk, T::Wv, T::Wo] {
            fill(&mut p, t, 1.0 / d.sqrt());
        }
        fill(&mut p, T::PoolQ, 1.0 / d.sqrt());
        fill(&mut p, T::StaticW, 1.0 / (dims.static_dim as f64).sqrt());
        fill(&mut p, T::SemiW, 1.0 / (dims.semi_dim as f64).sqrt());
        fill(&mut p, T::FuseQ, 1.0 / d.sqrt());
        fill(&mut p, T::ClsW, 1.0 / d.sqrt());
        for (k, w) in p.get_mut(T::Omega).iter_mut().enumerate() {
            *w = std::f64::consts::PI / 2f64.powi(k as i32);
        }
        p
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn range(&self, t: T) -> Range<usize> {
        let i = t as usize;
        self.offsets[i]..self.offsets[i + 1]
    }

    pub fn get(&self, t: T) -> &[f64] {
        &self.data[self.range(t)]
    }

    pub fn get_mut(&mut self, t: T) -> &mut [f64] {
        let r = self.range(t);
        &mut self.data[r]
    }

    /// Name and in-tensor index of flat position `i`.
    pub fn locate(&self, i: usize) -> (T, usize) {
        let t = T::ALL.into_iter().find(|t| self.range(*t).contains(&i)).expect("index in range");
        (t, i - self.range(t).start)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn add_scaled(&mut self, other: &Params, scale: f64) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_contiguous() {
        let p = Params::zeros(Dims::default());
        let total: usize = T::ALL.iter().map(|t| {
            let (r, c) = t.shape(&p.dims);
            r * c
        }).sum();
        assert_eq!(p.len(), total);
        assert_eq!(p.get(T::Wq).len(), 64 * 64);
        assert_eq!(p.locate(p.range(T::Omega).start + 2), (T::Omega, 2));
    }

    #[test]
    fn init_is_seeded() {
        assert_eq!(Params::init(Dims::tiny(), 3), Params::init(Dims::tiny(), 3));
        assert_ne!(Params::init(Dims::tiny(), 3), Params::init(Dims::tiny(), 4));
    }

    #[test]
    fn dims_validation() {
        assert!(Dims::default().validate().is_ok());
        assert!(Dims { d: 6, heads: 4, ..Dims::default() }.validate().is_err());
        assert!(Dims { window: 7, ..Dims::default() }.validate().is_err());
    }
}
