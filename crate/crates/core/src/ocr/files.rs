//! Detection and ground-truth text files.
//!
//! Detection file (`<image_id>.det`), one box per line:
//!
//! ```text
//! # size 1280 720
//! HR	0.97	100	100	30	20
//! 142	0.93	140	90	90	50
//! ```
//!
//! Fields are tab-separated: `text confidence x y w h`. Blank lines and
//! lines starting with `#` are ignored, except `# size W H` which sets the
//! image bounds used for clipping.
//!
//! Ground truth: `image_id<TAB>vital<TAB>value`, with `-` as value for a
//! vital that is not on screen.

use super::anchors::Lexicon;
use super::evaluate::GroundTruth;
use super::select::{extract, Extraction, OcrConfig};
use super::{OcrError, OcrVital, TextBox};
use rayon::prelude::*;
use std::fmt::Write;
use std::path::Path;

pub const DETECTION_EXT: &str = "det";

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Detections {
    pub image_size: Option<(f64, f64)>,
    pub boxes: Vec<TextBox>,
}

pub fn parse_detections(text: &str) -> Result<Detections, OcrError> {
    let mut out = Detections::default();
    for (i, line) in text.lines().enumerate() {
        let err = |msg: String| OcrError::Parse { line: i + 1, msg };
        if line.trim().is_empty() {
            continue;
        }
        if let Some(rest) = line.trim().strip_prefix('#') {
            let mut it = rest.split_whitespace();
            if it.next() == Some("size") {
                let mut dim = || it.next().and_then(|s| s.parse::<f64>().ok()).filter(|v| *v > 0.0);
                match (dim(), dim()) {
                    (Some(w), Some(h)) => out.image_size = Some((w, h)),
                    _ => return Err(err("size needs two positive numbers".into())),
                }
            }
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 6 {
            return Err(err(format!("expected 6 tab-separated fields, found {}", f.len())));
        }
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| err(format!("bad number '{s}'")));
        let b = TextBox { text: f[0].to_string(), confidence: num(f[1])?, x: num(f[2])?, y: num(f[3])?, w: num(f[4])?, h: num(f[5])? };
        b.validate().map_err(|e| err(e.to_string()))?;
        out.boxes.push(b);
    }
    Ok(out)
}

pub fn render_detections(d: &Detections) -> String {
    let mut s = String::new();
    if let Some((w, h)) = d.image_size {
        let _ = writeln!(s, "# size {w} {h}");
    }
    for b in &d.boxes {
        let _ = writeln!(s, "{}\t{}\t{}\t{}\t{}\t{}", b.text, b.confidence, b.x, b.y, b.w, b.h);
    }
    s
}

pub fn parse_truth(text: &str) -> Result<GroundTruth, OcrError> {
    let mut out = GroundTruth::new();
    for (i, line) in text.lines().enumerate() {
        let err = |msg: String| OcrError::Parse { line: i + 1, msg };
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 3 {
            return Err(err(format!("expected 3 tab-separated fields, found {}", f.len())));
        }
        let vital: OcrVital = f[1].parse().map_err(err)?;
        let value = match f[2].trim() {
            "-" => None,
            v => Some(v.parse::<u32>().map_err(|_| err(format!("bad value '{v}'")))?),
        };
        out.entry(f[0].trim().to_string()).or_insert([None; 3])[vital.index()] = value;
    }
    Ok(out)
}

pub fn render_truth(t: &GroundTruth) -> String {
    let mut s = String::new();
    for (id, vals) in t {
        for v in OcrVital::ALL {
            match vals[v.index()] {
                Some(x) => writeln!(s, "{id}\t{v}\t{x}"),
                None => writeln!(s, "{id}\t{v}\t-"),
            }
            .expect("string write");
        }
    }
    s
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchEntry {
    pub image_id: String,
    pub result: Result<Extraction, String>,
}

/// Extract every `*.det` file in `dir` on `workers` threads. Output is
/// sorted by image id and independent of the worker count.
pub fn batch_extract(dir: &Path, workers: usize, lexicon: &Lexicon, config: &OcrConfig) -> Result<Vec<BatchEntry>, OcrError> {
    config.validate()?;
    lexicon.validate()?;
    let io = |e: std::io::Error| OcrError::Io(format!("{}: {e}", dir.display()));
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(io)? {
        let path = entry.map_err(io)?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == DETECTION_EXT) {
            let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            files.push((id, path));
        }
    }
    files.sort();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| OcrError::Config(e.to_string()))?;
    Ok(pool.install(|| {
        files
            .par_iter()
            .map(|(id, path)| {
                let result = std::fs::read_to_string(path)
                    .map_err(|e| e.to_string())
                    .and_then(|t| parse_detections(&t).map_err(|e| e.to_string()))
                    .map(|d| extract(id, &d.boxes, d.image_size, lexicon, config));
                BatchEntry { image_id: id.clone(), result }
            })
            .collect()
    }))
}
