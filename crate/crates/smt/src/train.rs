//! Full-batch gradient descent with a fixed step.
//!
//! Per-sample gradients run in parallel and are summed in index order, so a
//! given seed reproduces the same parameter trajectory bit for bit.

use crate::calibrate::{fit_temperature, Calibration};
use crate::dataset::{stratified_kfold, Normalizer, Sample};
use crate::loss::{class_weights, FocalLoss};
use crate::model::{backward, forward, Input, Model};
use crate::params::{Dims, Params, CLASSES};
use crate::SmtError;
use rayon::prelude::*;
use serde::Serialize;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub steps: usize,
    pub lr: f64,
    pub gamma: f64,
    pub seed: u64,
    /// Record metrics every this many steps (and at the last step).
    pub log_every: usize,
    /// Stop once training accuracy reaches this value.
    pub stop_at_accuracy: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { steps: 300, lr: 0.05, gamma: 2.0, seed: 0, log_every: 10, stop_at_accuracy: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Metrics {
    pub loss: f64,
    pub accuracy: f64,
    /// `confusion[truth][predicted]`
    pub confusion: [[usize; CLASSES]; CLASSES],
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepLog {
    pub step: usize,
    pub train: Metrics,
    pub val: Option<Metrics>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainReport {
    pub class_weights: [f64; CLASSES],
    pub steps_run: usize,
    pub history: Vec<StepLog>,
    /// First logged step at which training accuracy was 1.
    pub first_perfect_step: Option<usize>,
}

struct Prepared {
    inputs: Vec<Input>,
    labels: Vec<usize>,
}

fn prepare(samples: &[Sample], norm: &Normalizer, dims: &Dims) -> Result<Prepared, SmtError> {
    let mut inputs = Vec::with_capacity(samples.len());
    for s in samples {
        if s.steps() != dims.window {
            return Err(SmtError::Shape(format!("{}: window of {} steps, model expects {}", s.source, s.steps(), dims.window)));
        }
        let x = norm.apply(s, dims)?;
        x.validate(dims)?;
        inputs.push(x);
    }
    Ok(Prepared { inputs, labels: samples.iter().map(|s| s.label.index()).collect() })
}

/// Mean loss and mean gradient over the batch.
pub fn batch_gradient(params: &Params, pattern: &crate::Pattern, inputs: &[Input], labels: &[usize], loss: &FocalLoss) -> (f64, Params) {
    let parts: Vec<(f64, Params)> = inputs
        .par_iter()
        .zip(labels.par_iter())
        .map(|(x, &y)| {
            let tr = forward(params, pattern, x, 1.0);
            backward(params, pattern, x, &tr, y, loss, 1.0)
        })
        .collect();
    let mut g = Params::zeros(params.dims);
    let mut total = 0.0;
    for (l, gi) in &parts {
        total += l;
        g.add_scaled(gi, 1.0);
    }
    let n = inputs.len().max(1) as f64;
    for v in &mut g.data {
        *v /= n;
    }
    (total / n, g)
}

fn metrics_of(probs: &[[f64; CLASSES]], labels: &[usize], loss: &FocalLoss) -> Metrics {
    let mut confusion = [[0usize; CLASSES]; CLASSES];
    for (p, &y) in probs.iter().zip(labels) {
        let pred = crate::RiskScore::from_probs(*p).class().index();
        confusion[y][pred] += 1;
    }
    let correct: usize = (0..CLASSES).map(|c| confusion[c][c]).sum();
    Metrics {
        loss: loss.batch_loss(probs, labels),
        accuracy: if labels.is_empty() { 0.0 } else { correct as f64 / labels.len() as f64 },
        confusion,
    }
}

fn probs_of(params: &Params, pattern: &crate::Pattern, inputs: &[Input], tau: f64) -> Vec<[f64; CLASSES]> {
    inputs.par_iter().map(|x| forward(params, pattern, x, tau).probs).collect()
}

/// Train from seeded initialization. The normalizer is fitted on `train_set`.
pub fn train(dims: Dims, train_set: &[Sample], val_set: &[Sample], cfg: &TrainConfig) -> Result<(Model, TrainReport), SmtError> {
    dims.validate()?;
    if !(cfg.lr > 0.0 && cfg.lr.is_finite()) || cfg.gamma < 0.0 {
        return Err(SmtError::Config(format!("need lr > 0 and gamma >= 0, got {} and {}", cfg.lr, cfg.gamma)));
    }
    let norm = Normalizer::fit(train_set, &dims)?;
    let tr = prepare(train_set, &norm, &dims)?;
    let va = prepare(val_set, &norm, &dims)?;
    let alpha = class_weights(&tr.labels)?;
    let loss = FocalLoss { gamma: cfg.gamma, alpha };
    let pattern = crate::Pattern::new(dims.window);
    let mut params = Params::init(dims, cfg.seed);
    let mut history = Vec::new();
    let mut first_perfect_step = None;
    let log_every = cfg.log_every.max(1);
    let mut step = 0;
    loop {
        let (_, grad) = batch_gradient(&params, &pattern, &tr.inputs, &tr.labels, &loss);
        let at_end = step == cfg.steps;
        let want_log = step % log_every == 0 || at_end || cfg.stop_at_accuracy.is_some();
        let mut stop = at_end;
        if want_log {
            let train = metrics_of(&probs_of(&params, &pattern, &tr.inputs, 1.0), &tr.labels, &loss);
            let val = (!va.inputs.is_empty()).then(|| metrics_of(&probs_of(&params, &pattern, &va.inputs, 1.0), &va.labels, &loss));
            if train.accuracy == 1.0 && first_perfect_step.is_none() {
                first_perfect_step = Some(step);
            }
            if cfg.stop_at_accuracy.is_some_and(|a| train.accuracy >= a) {
                stop = true;
            }
            if step % log_every == 0 || stop {
                tracing::debug!(step, loss = train.loss, acc = train.accuracy, "train");
                history.push(StepLog { step, train, val });
            }
        }
        if stop {
            break;
        }
        params.add_scaled(&grad, -cfg.lr);
        if !params.all_finite() {
            return Err(SmtError::Data(format!("parameters diverged at step {step}; lower the step size")));
        }
        step += 1;
    }
    let model = Model::new(params, 1.0, norm)?;
    Ok((model, TrainReport { class_weights: alpha, steps_run: step, history, first_perfect_step }))
}

/// Loss (with the training weighting `loss`) and accuracy of a model.
pub fn evaluate(model: &Model, samples: &[Sample], loss: &FocalLoss) -> Result<Metrics, SmtError> {
    let p = prepare(samples, &model.norm, &model.dims())?;
    Ok(metrics_of(&probs_of(&model.params, model.pattern(), &p.inputs, model.tau), &p.labels, loss))
}

/// Raw logits and label indices, for calibration.
pub fn logits_of(model: &Model, samples: &[Sample]) -> Result<(Vec<[f64; CLASSES]>, Vec<usize>), SmtError> {
    let p = prepare(samples, &model.norm, &model.dims())?;
    let l = p.inputs.par_iter().map(|x| forward(&model.params, model.pattern(), x, 1.0).logits).collect();
    Ok((l, p.labels))
}

pub fn calibrate(model: &Model, samples: &[Sample]) -> Result<Calibration, SmtError> {
    let (l, y) = logits_of(model, samples)?;
    fit_temperature(&l, &y)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FoldResult {
    pub fold: usize,
    pub train_size: usize,
    pub val_size: usize,
    pub val: Metrics,
}

/// Stratified k-fold: train on k-1 folds, score the held-out fold.
pub fn cross_validate(dims: Dims, samples: &[Sample], k: usize, cfg: &TrainConfig) -> Result<Vec<FoldResult>, SmtError> {
    let labels: Vec<_> = samples.iter().map(|s| s.label).collect();
    let folds = stratified_kfold(&labels, k, cfg.seed)?;
    let mut out = Vec::with_capacity(k);
    for (i, held) in folds.iter().enumerate() {
        let val: Vec<Sample> = held.iter().map(|&j| samples[j].clone()).collect();
        let tr: Vec<Sample> = (0..samples.len()).filter(|j| held.binary_search(j).is_err()).map(|j| samples[j].clone()).collect();
        let (model, report) = train(dims, &tr, &[], cfg)?;
        let loss = FocalLoss { gamma: cfg.gamma, alpha: report.class_weights };
        out.push(FoldResult { fold: i, train_size: tr.len(), val_size: val.len(), val: evaluate(&model, &val, &loss)? });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::toy_set;
    use crate::RiskClass;

    fn small() -> Dims {
        Dims { window: 32, d: 8, heads: 2, freqs: 4, ..Dims::default() }
    }

    #[test]
    fn toy_set_fits_and_is_deterministic() {
        let set = toy_set(32, 1);
        let cfg = TrainConfig { steps: 500, lr: 0.1, seed: 3, log_every: 25, ..TrainConfig::default() };
        let (a, ra) = train(small(), &set, &set[..2], &cfg).unwrap();
        let (b, _) = train(small(), &set, &set[..2], &cfg).unwrap();
        assert_eq!(a.params, b.params);
        let last = ra.history.last().unwrap();
        assert_eq!(last.train.accuracy, 1.0, "{last:?}");
        assert!(ra.first_perfect_step.is_some());
        assert!(last.val.is_some());
    }

    #[test]
    fn small_step_loss_is_non_increasing() {
        let set = toy_set(32, 2);
        let cfg = TrainConfig { steps: 60, lr: 0.01, seed: 1, log_every: 1, ..TrainConfig::default() };
        let (_, r) = train(small(), &set, &[], &cfg).unwrap();
        for w in r.history.windows(2) {
            assert!(w[1].train.loss <= w[0].train.loss + 1e-12, "{} -> {}", w[0].train.loss, w[1].train.loss);
        }
    }

    #[test]
    fn single_class_is_rejected() {
        let set: Vec<Sample> = toy_set(32, 1).into_iter().filter(|s| s.label == RiskClass::Low).collect();
        assert!(matches!(train(small(), &set, &[], &TrainConfig::default()), Err(SmtError::Data(_))));
    }

    #[test]
    fn wrong_window_is_rejected() {
        let set = toy_set(16, 1);
        assert!(matches!(train(small(), &set, &[], &TrainConfig::default()), Err(SmtError::Shape(_))));
    }

    #[test]
    fn kfold_runs_every_fold() {
        let mut set = toy_set(32, 1);
        set.extend(toy_set(32, 2));
        let cfg = TrainConfig { steps: 40, lr: 0.1, log_every: 40, ..TrainConfig::default() };
        let r = cross_validate(small(), &set, 2, &cfg).unwrap();
        assert_eq!(r.len(), 2);
        assert_eq!(r.iter().map(|f| f.val_size).sum::<usize>(), 16);
    }
}
