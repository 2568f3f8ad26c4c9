//! Labeled windows from simulator scenarios, normalization and k-fold splits.
//!
//! Label rules, applied to a 10 s trailing mean of each channel so single
//! noisy samples do not count. A condition must hold for the listed number
//! of consecutive seconds inside the window:
//!
//! | class    | SpO2 (%) | HR (bpm)         | RR (/min)       | temp (°C)   |
//! |----------|----------|------------------|-----------------|-------------|
//! | high     | < 88, 20 s | < 100, 20 s    | < 15, 20 s      | < 35.8, 60 s |
//! | moderate | < 92, 20 s | < 110 or > 190, 20 s | < 25 or > 70, 20 s | < 36.3, 60 s |
//!
//! Anything else is low.

use crate::model::Input;
use crate::params::{Dims, MODALITIES};
use crate::{RiskClass, SmtError};
use neoward_core::vitalsim::{generate_sample, Curve, EventKind, Scenario, ScenarioEvent};
use neoward_core::VitalKind;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::Path;

pub const SCENARIO_EXT: &str = "scn";
const SMOOTH_S: usize = 10;

/// One window in natural units.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    /// `n x 4`: HR, SpO2, RR, temperature.
    pub window: Vec<f64>,
    pub static_f: Option<Vec<f64>>,
    pub semi: Option<Vec<f64>>,
    pub label: RiskClass,
    pub source: String,
}

impl Sample {
    pub fn steps(&self) -> usize {
        self.window.len() / MODALITIES
    }
}

/// Per-feature mean and std for vitals, static and semi-static features,
/// concatenated in that order.
#[derive(Clone, Debug, PartialEq)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    pub fn width(dims: &Dims) -> usize {
        MODALITIES + dims.static_dim + dims.semi_dim
    }

    pub fn identity(dims: &Dims) -> Self {
        let w = Self::width(dims);
        Normalizer { mean: vec![0.0; w], std: vec![1.0; w] }
    }

    pub fn check(&self, dims: &Dims) -> Result<(), SmtError> {
        let w = Self::width(dims);
        if self.mean.len() != w || self.std.len() != w {
            return Err(SmtError::Config(format!("normalizer width {} does not match model width {w}", self.mean.len())));
        }
        if self.std.iter().any(|s| !(*s > 0.0 && s.is_finite())) || self.mean.iter().any(|m| !m.is_finite()) {
            return Err(SmtError::Config("normalizer needs finite means and positive stds".into()));
        }
        Ok(())
    }

    /// Fit on a training set. Constant features get std 1.
    pub fn fit(samples: &[Sample], dims: &Dims) -> Result<Self, SmtError> {
        if samples.is_empty() {
            return Err(SmtError::Data("cannot fit normalizer on an empty set".into()));
        }
        let w = Self::width(dims);
        let mut sum = vec![0.0; w];
        let mut sq = vec![0.0; w];
        let mut cnt = vec![0usize; w];
        let mut add = |i: usize, v: f64| {
            sum[i] += v;
            sq[i] += v * v;
            cnt[i] += 1;
        };
        for s in samples {
            for row in s.window.chunks(MODALITIES) {
                for (m, v) in row.iter().enumerate() {
                    add(m, *v);
                }
            }
            if let Some(f) = &s.static_f {
                for (i, v) in f.iter().enumerate().take(dims.static_dim) {
                    add(MODALITIES + i, *v);
                }
            }
            if let Some(f) = &s.semi {
                for (i, v) in f.iter().enumerate().take(dims.semi_dim) {
                    add(MODALITIES + dims.static_dim + i, *v);
                }
            }
        }
        let mut out = Self::identity(dims);
        for i in 0..w {
            if cnt[i] == 0 {
                continue;
            }
            let m = sum[i] / cnt[i] as f64;
            let var = (sq[i] / cnt[i] as f64 - m * m).max(0.0);
            out.mean[i] = m;
            out.std[i] = if var.sqrt() > 1e-9 { var.sqrt() } else { 1.0 };
        }
        Ok(out)
    }

    /// Normalize a sample. Absent feature vectors map to the mean.
    pub fn apply(&self, s: &Sample, dims: &Dims) -> Result<Input, SmtError> {
        if s.window.len() % MODALITIES != 0 {
            return Err(SmtError::Shape(format!("window length {} is not a multiple of 4", s.window.len())));
        }
        let n = s.steps();
        let window = s
            .window
            .chunks(MODALITIES)
            .flat_map(|row| row.iter().enumerate().map(|(m, v)| (v - self.mean[m]) / self.std[m]))
            .collect();
        let feats = |v: &Option<Vec<f64>>, len: usize, off: usize, what: &str| -> Result<Vec<f64>, SmtError> {
            match v {
                None => Ok(vec![0.0; len]),
                Some(v) if v.len() == len => Ok(v.iter().enumerate().map(|(i, x)| (x - self.mean[off + i]) / self.std[off + i]).collect()),
                Some(v) => Err(SmtError::Shape(format!("{what} features have length {}, model expects {len}", v.len()))),
            }
        };
        Ok(Input {
            n,
            window,
            static_f: feats(&s.static_f, dims.static_dim, MODALITIES, "static")?,
            semi: feats(&s.semi, dims.semi_dim, MODALITIES + dims.static_dim, "semi-static")?,
        })
    }
}

fn trailing_mean(window: &[f64], m: usize) -> Vec<f64> {
    let xs: Vec<f64> = window.chunks(MODALITIES).map(|r| r[m]).collect();
    let mut out = Vec::with_capacity(xs.len());
    let mut acc = 0.0;
    for i in 0..xs.len() {
        acc += xs[i];
        if i >= SMOOTH_S {
            acc -= xs[i - SMOOTH_S];
        }
        out.push(acc / (i + 1).min(SMOOTH_S) as f64);
    }
    out
}

fn sustained(series: &[f64], min_len: usize, pred: impl Fn(f64) -> bool) -> bool {
    let mut run = 0;
    for &v in series {
        run = if pred(v) { run + 1 } else { 0 };
        if run >= min_len {
            return true;
        }
    }
    false
}

/// Risk label of an `n x 4` window in natural units.
pub fn label_window(window: &[f64]) -> RiskClass {
    let hr = trailing_mean(window, VitalKind::Hr.index());
    let spo2 = trailing_mean(window, VitalKind::Spo2.index());
    let rr = trailing_mean(window, VitalKind::Rr.index());
    let temp = trailing_mean(window, VitalKind::Temp.index());
    let high = sustained(&spo2, 20, |v| v < 88.0)
        || sustained(&hr, 20, |v| v < 100.0)
        || sustained(&rr, 20, |v| v < 15.0)
        || sustained(&temp, 60, |v| v < 35.8);
    if high {
        return RiskClass::High;
    }
    let moderate = sustained(&spo2, 20, |v| v < 92.0)
        || sustained(&hr, 20, |v| !(110.0..=190.0).contains(&v))
        || sustained(&rr, 20, |v| !(25.0..=70.0).contains(&v))
        || sustained(&temp, 60, |v| v < 36.3);
    if moderate {
        RiskClass::Moderate
    } else {
        RiskClass::Low
    }
}

/// 1 Hz readings of a scenario in natural units, `duration x 4`.
pub fn scenario_series(s: &Scenario) -> Result<Vec<f64>, SmtError> {
    let mut out = Vec::with_capacity(s.duration_s as usize * MODALITIES);
    for t in 0..s.duration_s {
        let v = generate_sample(s, 1, s.start_ms + t * 1000).map_err(|e| SmtError::Data(e.to_string()))?;
        for k in VitalKind::ALL {
            out.push(v.get(k) as f64 / 100.0);
        }
    }
    Ok(out)
}

/// Windows of `n` seconds every `stride` seconds, labeled by [`label_window`].
pub fn windows_from_scenario(s: &Scenario, n: usize, stride: usize) -> Result<Vec<Sample>, SmtError> {
    if stride == 0 {
        return Err(SmtError::Config("stride must be positive".into()));
    }
    let series = scenario_series(s)?;
    let steps = series.len() / MODALITIES;
    let mut out = Vec::new();
    let mut start = 0;
    while start + n <= steps {
        let window = series[start * MODALITIES..(start + n) * MODALITIES].to_vec();
        out.push(Sample {
            label: label_window(&window),
            window,
            static_f: s.static_features.map(|f| f.to_vec()),
            semi: s.semistatic_features.clone(),
            source: format!("{}@{start}", s.name),
        });
        start += stride;
    }
    Ok(out)
}

/// Every `*.scn` file in `dir`, sorted by file name.
pub fn load_scenarios(dir: &Path) -> Result<Vec<Scenario>, SmtError> {
    let mut files: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == SCENARIO_EXT))
        .collect();
    files.sort();
    files
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p)?;
            Scenario::parse(&text).map_err(|e| SmtError::Data(format!("{}: {e}", p.display())))
        })
        .collect()
}

pub fn load_dir(dir: &Path, n: usize, stride: usize) -> Result<Vec<Sample>, SmtError> {
    let mut out = Vec::new();
    for s in load_scenarios(dir)? {
        out.extend(windows_from_scenario(&s, n, stride)?);
    }
    if out.is_empty() {
        return Err(SmtError::Data(format!("no windows of {n} s found in {}", dir.display())));
    }
    Ok(out)
}

/// Random scenarios mixing stable runs with events of varying severity.
pub fn generate_scenarios(count: usize, duration_s: u64, seed: u64) -> Vec<Scenario> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = duration_s as f64;
    (0..count)
        .map(|i| {
            let mut s = Scenario::stable(duration_s, rng.random());
            let base = [
                rng.random_range(130.0..160.0),
                rng.random_range(95.0..99.0),
                rng.random_range(35.0..55.0),
                rng.random_range(36.6..37.2),
            ];
            s.baselines = base.map(Curve::constant);
            s.static_features = Some([
                rng.random_range(18.0..42.0f64).round(),
                rng.random_range(0..=3) as f64,
                rng.random_range(800.0..3500.0f64).round(),
            ]);
            s.semistatic_features = Some((0..6).map(|_| (rng.random_range(0.0..1.0f64) * 100.0).round() / 100.0).collect());
            let (kind, magnitude) = match rng.random_range(0..5) {
                0 => (None, 0.0),
                1 => (Some(EventKind::Desaturation), -rng.random_range(4.0..15.0)),
                2 => (Some(EventKind::Bradycardia), -rng.random_range(20.0..60.0)),
                3 => (Some(EventKind::Apnea), -rng.random_range(10.0..40.0)),
                _ => (Some(EventKind::Hypothermia), -rng.random_range(0.3..1.5)),
            };
            s.name = format!("gen{i:03}-{}", kind.map_or("stable", |k| k.as_str()));
            if let Some(kind) = kind {
                let duration = rng.random_range(60.0..240.0f64).min(d * 0.5).round();
                let onset = rng.random_range(0.0..(d - duration)).round();
                s.events.push(ScenarioEvent { kind, onset_s: onset, duration_s: duration, magnitude });
            }
            s
        })
        .collect()
}

pub fn write_scenarios(dir: &Path, scenarios: &[Scenario]) -> Result<(), SmtError> {
    std::fs::create_dir_all(dir)?;
    for s in scenarios {
        std::fs::write(dir.join(format!("{}.{SCENARIO_EXT}", s.name)), s.render())?;
    }
    Ok(())
}

/// Eight constant-level windows, separable by mean SpO2: three low, three
/// moderate, two high.
pub fn toy_set(n: usize, seed: u64) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let levels = [
        (97.0, RiskClass::Low),
        (96.0, RiskClass::Low),
        (98.0, RiskClass::Low),
        (90.0, RiskClass::Moderate),
        (91.0, RiskClass::Moderate),
        (89.5, RiskClass::Moderate),
        (82.0, RiskClass::High),
        (80.0, RiskClass::High),
    ];
    levels
        .iter()
        .enumerate()
        .map(|(i, &(spo2, label))| {
            let window = (0..n)
                .flat_map(|_| {
                    [
                        140.0 + rng.random_range(-2.0..2.0),
                        spo2 + rng.random_range(-0.5..0.5),
                        45.0 + rng.random_range(-2.0..2.0),
                        36.8 + rng.random_range(-0.1..0.1),
                    ]
                })
                .collect();
            Sample { window, static_f: None, semi: None, label, source: format!("toy{i}") }
        })
        .collect()
}

/// Stratified folds: each class is shuffled with `seed` and dealt round
/// robin, so class proportions match across folds up to one sample.
pub fn stratified_kfold(labels: &[RiskClass], k: usize, seed: u64) -> Result<Vec<Vec<usize>>, SmtError> {
    if k < 2 || k > labels.len() {
        return Err(SmtError::Config(format!("k = {k} must be in [2, {}]", labels.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for c in RiskClass::ALL {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        idx.shuffle(&mut rng);
        for i in idx {
            folds[next % k].push(i);
            next += 1;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}
