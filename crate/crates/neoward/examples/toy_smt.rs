//! Train the risk model on the separable toy set and print the learning
//! curve and the final predictions.
//!
//! ```text
//! cargo run --release -p neoward --example toy_smt
//! ```

use neoward_smt::dataset::toy_set;
use neoward_smt::params::Dims;
use neoward_smt::{train, TrainConfig};

fn main() {
    let set = toy_set(64, 1);
    let dims = Dims { window: 64, d: 16, heads: 4, ..Dims::default() };
    let cfg = TrainConfig { steps: 200, lr: 0.1, seed: 1, log_every: 20, stop_at_accuracy: Some(1.0), ..TrainConfig::default() };
    let (model, report) = train(dims, &set, &[], &cfg).unwrap();
    println!("class weights {:?}", report.class_weights);
    for log in &report.history {
        println!("step {:>4}  loss {:.4}  accuracy {:.3}", log.step, log.train.loss, log.train.accuracy);
    }
    match report.first_perfect_step {
        Some(s) => println!("all {} windows right at step {s}", set.len()),
        None => println!("not separable within {} steps", report.steps_run),
    }
    for s in &set {
        let r = model.predict(s).unwrap();
        println!("{:<24} label {:<8?} p = [{:.3} {:.3} {:.3}]", s.source, s.label, r.p_low, r.p_moderate, r.p_high);
    }
}
