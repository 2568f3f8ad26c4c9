//! Wall-clock scaling of the attention block against sequence length.

use crate::model::{attend, bias_table};
use crate::ops::matmul;
use crate::params::{Dims, Params, T};
use crate::pattern::Pattern;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::time::Instant;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingPoint {
    pub n: usize,
    pub edges: usize,
    pub seconds: f64,
}

/// Best-of-`reps` time of projections plus sparse attention at each `n`.
pub fn measure(ns: &[usize], dims: Dims, reps: usize, seed: u64) -> Vec<ScalingPoint> {
    let p = Params::init(Dims { window: 8, ..dims }, seed);
    let d = dims.d;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ns.iter()
        .map(|&n| {
            let e: Vec<f64> = (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let pattern = Pattern::new(n);
            let mut best = f64::INFINITY;
            for _ in 0..reps.max(1) {
                let t = Instant::now();
                let q = matmul(&e, n, d, p.get(T::Wq), d);
                let k = matmul(&e, n, d, p.get(T::Wk), d);
                let v = matmul(&e, n, d, p.get(T::Wv), d);
                let a = attend(&q, &k, &v, d, dims.heads, &bias_table(&p, &pattern), &pattern);
                std::hint::black_box(&a);
                best = best.min(t.elapsed().as_secs_f64());
            }
            ScalingPoint { n, edges: pattern.edges(), seconds: best }
        })
        .collect()
}

/// Least-squares slope of `log(seconds)` against `log(n)`.
pub fn log_log_slope(points: &[ScalingPoint]) -> f64 {
    let xs: Vec<f64> = points.iter().map(|p| (p.n as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.seconds.max(1e-12).ln()).collect();
    let k = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / k, ys.iter().sum::<f64>() / k);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Powers of two from 64 to 4096.
pub fn default_lengths() -> Vec<usize> {
    (6..=12).map(|k| 1usize << k).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_exact_power_laws() {
        for e in [1.0, 1.5, 2.0] {
            let pts: Vec<ScalingPoint> = [64usize, 256, 1024].iter().map(|&n| ScalingPoint { n, edges: 0, seconds: 1e-6 * (n as f64).powf(e) }).collect();
            assert!((log_log_slope(&pts) - e).abs() < 1e-12);
        }
    }
}
