use neoward_core::vitalsim::{generate_sample, Scenario};
use neoward_smt::dataset::{generate_scenarios, toy_set, windows_from_scenario};
use neoward_smt::model::{forward, Input};
use neoward_smt::params::MODALITIES;
use neoward_smt::*;
use proptest::prelude::*;
use std::sync::Arc;

fn stream_p_high(model: &Arc<Model>, s: &Scenario) -> Vec<f64> {
    let mut inf = StreamInferer::new(model.clone());
    let mut out = Vec::new();
    for t in 0..s.duration_s {
        let v = generate_sample(s, 7, s.start_ms + t * 1000).unwrap();
        for o in inf.push(&v).unwrap() {
            let score = o.score().expect("no gaps in a simulated feed");
            assert!(score.is_simplex(1e-9));
            out.push(score.p_high);
        }
    }
    out
}

#[test]
fn desaturation_raises_p_high_over_stable() {
    let dims = Dims { d: 16, ..Dims::default() };
    let mut samples = Vec::new();
    for s in generate_scenarios(24, 900, 11) {
        samples.extend(windows_from_scenario(&s, 300, 120).unwrap());
    }
    let cfg = TrainConfig { steps: 120, lr: 0.2, seed: 5, log_every: 40, ..TrainConfig::default() };
    let (model, _) = train(dims, &samples, &[], &cfg).unwrap();
    let model = Arc::new(model);

    let stable = stream_p_high(&model, &Scenario::stable(900, 4));
    let desat = stream_p_high(&model, &Scenario::builtin("desaturation", 900, 4).unwrap());
    // cold start: 900 s feed, 300 s window
    assert_eq!(stable.len(), 601);
    let peak_desat = desat.iter().copied().fold(0.0, f64::max);
    let peak_stable = stable.iter().copied().fold(0.0, f64::max);
    assert!(peak_desat > peak_stable, "desat {peak_desat} stable {peak_stable}");
}

#[test]
fn full_size_toy_set_fits_within_budget() {
    let set = toy_set(300, 1);
    let cfg = TrainConfig { steps: 500, lr: 0.05, seed: 1, log_every: 50, stop_at_accuracy: Some(1.0), ..TrainConfig::default() };
    let (model, report) = train(Dims::default(), &set, &[], &cfg).unwrap();
    assert!(report.first_perfect_step.is_some_and(|s| s <= 500));
    for s in &set {
        assert_eq!(model.predict(s).unwrap().class(), s.label);
    }
}

#[test]
fn model_file_survives_training_round_trip() {
    let set = toy_set(16, 3);
    let dims = Dims { window: 16, d: 8, heads: 2, ..Dims::default() };
    let cfg = TrainConfig { steps: 30, lr: 0.1, ..TrainConfig::default() };
    let (model, _) = train(dims, &set, &[], &cfg).unwrap();
    let back = modelfile::from_bytes(&modelfile::to_bytes(&model)).unwrap();
    for s in &set {
        assert_eq!(model.predict(s).unwrap(), back.predict(s).unwrap());
    }
}

#[test]
fn attention_scales_sub_quadratically() {
    let pts = scaling::measure(&scaling::default_lengths(), Dims::default(), 3, 1);
    for p in &pts {
        assert_eq!(p.edges, Pattern::edge_count(p.n));
    }
    let slope = scaling::log_log_slope(&pts);
    assert!(slope < 1.4, "slope {slope} {pts:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Simplex invariant under random parameters, inputs and temperatures.
    #[test]
    fn outputs_are_on_simplex(seed in any::<u64>(), n in 8usize..64, tau in 0.05f64..50.0, scale in 0.1f64..20.0) {
        let dims = Dims { window: n, d: 8, heads: 2, freqs: 4, ..Dims::default() };
        let p = gradcheck::random_params(dims, seed);
        let mut x: Input = gradcheck::random_input(&dims, seed);
        for v in &mut x.window {
            *v *= scale;
        }
        prop_assert_eq!(x.window.len(), n * MODALITIES);
        let tr = forward(&p, &Pattern::new(n), &x, tau);
        prop_assert!(RiskScore::from_probs(tr.probs).is_simplex(1e-9), "{:?}", tr.probs);
    }
}
