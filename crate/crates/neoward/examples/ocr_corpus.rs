//! Generate monitor layouts, extract HR / SpO2 / RR, and score.
//!
//! ```text
//! cargo run -p neoward --example ocr_corpus -- 300
//! ```

use neoward_core::ocr::synth::{corpus, LayoutKind};
use neoward_core::ocr::{evaluate, extract, format_report, GroundTruth, Lexicon, OcrConfig, OcrVital};

fn main() {
    let n: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(200);
    let (lex, cfg) = (Lexicon::default(), OcrConfig::default());
    for (kind, seed) in [(LayoutKind::Clean, 1), (LayoutKind::Distractors, 2)] {
        let images = corpus(n, kind, seed);
        let truth: GroundTruth = images.iter().map(|(id, _, t)| (id.clone(), *t)).collect();
        let preds: Vec<_> = images.iter().map(|(id, d, _)| extract(id, &d.boxes, d.image_size, &lex, &cfg)).collect();
        println!("{kind:?}, {n} layouts");
        print!("{}", format_report(&evaluate(&preds, &truth).unwrap()));

        // show the first miss, if any
        if let Some((p, (_, d, t))) = preds.iter().zip(&images).find(|(p, (_, _, t))| OcrVital::ALL.iter().any(|v| p.value(*v) != t[v.index()])) {
            println!("  e.g. {}: truth {:?}, got {:?}, {} boxes on screen", p.image_id, t, OcrVital::ALL.map(|v| p.value(v)), d.boxes.len());
        }
        println!();
    }
}
