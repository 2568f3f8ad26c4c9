//! Focal loss and inverse-frequency class weights.

use crate::params::CLASSES;
use crate::SmtError;

/// Lower clamp on `p_y` before the log.
pub const EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FocalLoss {
    pub gamma: f64,
    pub alpha: [f64; CLASSES],
}

impl FocalLoss {
    pub fn cross_entropy() -> Self {
        FocalLoss { gamma: 0.0, alpha: [1.0; CLASSES] }
    }

    /// `-alpha_y (1 - p_y)^gamma log p_y`
    pub fn loss(&self, probs: &[f64], y: usize) -> f64 {
        let p = probs[y].max(EPS);
        -self.alpha[y] * (1.0 - p).powf(self.gamma) * p.ln()
    }

    /// `dL/dp_y`; zero where the clamp is active.
    pub fn grad_py(&self, probs: &[f64], y: usize) -> f64 {
        let p = probs[y];
        if p < EPS {
            return 0.0;
        }
        let g = self.gamma;
        let one_m = 1.0 - p;
        let focal_term = if g == 0.0 { 0.0 } else { -g * one_m.powf(g - 1.0) * p.ln() };
        -self.alpha[y] * (focal_term + one_m.powf(g) / p)
    }

    pub fn batch_loss(&self, probs: &[[f64; CLASSES]], labels: &[usize]) -> f64 {
        if probs.is_empty() {
            return 0.0;
        }
        probs.iter().zip(labels).map(|(p, &y)| self.loss(p, y)).sum::<f64>() / probs.len() as f64
    }
}

/// `alpha_c = N / (3 N_c)`. Classes absent from the set get weight 0 since
/// they never appear as a target.
pub fn class_weights(labels: &[usize]) -> Result<[f64; CLASSES], SmtError> {
    let mut counts = [0usize; CLASSES];
    for &y in labels {
        if y >= CLASSES {
            return Err(SmtError::Data(format!("label {y} out of range")));
        }
        counts[y] += 1;
    }
    let present = counts.iter().filter(|c| **c > 0).count();
    if present < 2 {
        return Err(SmtError::Data(format!("need at least two classes for weighting, found {present}")));
    }
    let n = labels.len() as f64;
    Ok(counts.map(|c| if c == 0 { 0.0 } else { n / (CLASSES as f64 * c as f64) }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn closed_forms() {
        let f = FocalLoss { gamma: 2.0, alpha: [1.0; 3] };
        assert_eq!(f.loss(&[0.0, 1.0, 0.0], 1), 0.0);
        assert!((f.loss(&[0.5, 0.25, 0.25], 0) - 0.25 * 2f64.ln()).abs() < 1e-15);
        // clamp keeps the loss finite
        assert!((FocalLoss::cross_entropy().loss(&[0.0, 0.5, 0.5], 0) - (-EPS.ln())).abs() < 1e-9);
    }

    #[test]
    fn weights() {
        let w = class_weights(&[0, 0, 0, 0, 1, 1, 2, 2]).unwrap();
        assert_eq!(w, [8.0 / 12.0, 8.0 / 6.0, 8.0 / 6.0]);
        assert!(class_weights(&[1, 1, 1]).is_err());
        assert!(class_weights(&[]).is_err());
        assert_eq!(class_weights(&[0, 2]).unwrap(), [2.0 / 3.0, 0.0, 2.0 / 3.0]);
    }

    fn simplex() -> impl Strategy<Value = ([f64; 3], usize)> {
        (prop::array::uniform3(1e-6f64..1.0), 0usize..3).prop_map(|(r, y)| {
            let s: f64 = r.iter().sum();
            (r.map(|v| v / s), y)
        })
    }

    proptest! {
        #[test]
        fn gamma_zero_is_cross_entropy((p, y) in simplex()) {
            let ce = -p[y].ln();
            prop_assert!((FocalLoss::cross_entropy().loss(&p, y) - ce).abs() < 1e-12);
        }

        #[test]
        fn grad_matches_difference((p, y) in simplex(), gamma in 0.0f64..4.0) {
            let f = FocalLoss { gamma, alpha: [0.7, 1.3, 2.0] };
            prop_assume!(p[y] > 1e-3 && p[y] < 1.0 - 1e-3);
            let h = 1e-7;
            let mut hi = p;
            hi[y] += h;
            let mut lo = p;
            lo[y] -= h;
            let fd = (f.loss(&hi, y) - f.loss(&lo, y)) / (2.0 * h);
            let an = f.grad_py(&p, y);
            prop_assert!((fd - an).abs() <= 1e-5 * an.abs().max(1.0), "fd {} an {}", fd, an);
        }
    }
}
