//! Temperature scaling and expected calibration error.

use crate::model::scaled_softmax;
use crate::params::CLASSES;
use crate::SmtError;
use serde::Serialize;

pub const ECE_BINS: usize = 10;
const LOG_TAU_RANGE: (f64, f64) = (-4.6, 6.9); // ~0.01 .. ~1000

/// Confidence-vs-accuracy gap over equal-width bins of the top probability.
/// Ties in the top probability go to the lowest class index.
pub fn ece(probs: &[[f64; CLASSES]], labels: &[usize], bins: usize) -> f64 {
    if probs.is_empty() {
        return 0.0;
    }
    let mut conf = vec![0.0; bins];
    let mut hit = vec![0.0; bins];
    let mut cnt = vec![0usize; bins];
    for (p, &y) in probs.iter().zip(labels) {
        let mut top = 0;
        for c in 1..CLASSES {
            if p[c] > p[top] {
                top = c;
            }
        }
        let b = ((p[top] * bins as f64) as usize).min(bins - 1);
        conf[b] += p[top];
        hit[b] += (top == y) as u8 as f64;
        cnt[b] += 1;
    }
    let n = probs.len() as f64;
    (0..bins).filter(|&b| cnt[b] > 0).map(|b| (hit[b] - conf[b]).abs() / n).sum()
}

pub fn nll(logits: &[[f64; CLASSES]], labels: &[usize], tau: f64) -> f64 {
    let total: f64 = logits
        .iter()
        .zip(labels)
        .map(|(l, &y)| {
            let z = l.map(|v| v / tau);
            let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            lse - z[y]
        })
        .sum();
    total / logits.len() as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Calibration {
    pub tau: f64,
    pub nll_before: f64,
    pub nll_after: f64,
    pub ece_before: f64,
    pub ece_after: f64,
    /// The NLL optimum raised ECE on the fitting set, so `tau` stayed at 1.
    pub fell_back: bool,
}

fn probs_at(logits: &[[f64; CLASSES]], tau: f64) -> Vec<[f64; CLASSES]> {
    logits.iter().map(|l| scaled_softmax(l, tau)).collect()
}

/// Fit `tau` by golden-section search on `log tau` minimizing NLL. NLL is
/// convex in `1 / tau`, hence unimodal in `log tau`.
pub fn fit_temperature(logits: &[[f64; CLASSES]], labels: &[usize]) -> Result<Calibration, SmtError> {
    if logits.is_empty() || logits.len() != labels.len() {
        return Err(SmtError::Data(format!("calibration needs matching non-empty sets, got {} logits and {} labels", logits.len(), labels.len())));
    }
    if labels.iter().any(|&y| y >= CLASSES) {
        return Err(SmtError::Data("label out of range".into()));
    }
    let f = |lt: f64| nll(logits, labels, lt.exp());
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = LOG_TAU_RANGE;
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > 1e-7 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(d);
        }
    }
    let mut tau = ((a + b) / 2.0).exp();
    let ece_before = ece(&probs_at(logits, 1.0), labels, ECE_BINS);
    let mut ece_after = ece(&probs_at(logits, tau), labels, ECE_BINS);
    let fell_back = ece_after > ece_before + 1e-9;
    if fell_back {
        tau = 1.0;
        ece_after = ece_before;
    }
    Ok(Calibration { tau, nll_before: nll(logits, labels, 1.0), nll_after: nll(logits, labels, tau), ece_before, ece_after, fell_back })
}
