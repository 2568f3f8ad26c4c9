use super::{OcrError, OcrVital, TextBox};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;

/// Label strings per vital, compared case-insensitively after trimming.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lexicon {
    labels: [Vec<String>; 3],
}

fn norm(s: &str) -> String {
    s.trim().to_uppercase()
}

impl Default for Lexicon {
    fn default() -> Self {
        let v = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect();
        Lexicon { labels: [v(&["HR", "ECG", "PR"]), v(&["SpO2", "SPO2", "%SpO2"]), v(&["RR", "RESP", "Resp"])] }
    }
}

impl Lexicon {
    pub fn new(hr: Vec<String>, spo2: Vec<String>, rr: Vec<String>) -> Result<Self, OcrError> {
        let lex = Lexicon { labels: [hr, spo2, rr] };
        lex.validate()?;
        Ok(lex)
    }

    pub fn validate(&self) -> Result<(), OcrError> {
        for v in OcrVital::ALL {
            if self.labels[v.index()].iter().all(|l| norm(l).is_empty()) {
                return Err(OcrError::Lexicon(format!("no labels for {v}")));
            }
        }
        for a in OcrVital::ALL {
            for b in OcrVital::ALL.into_iter().filter(|b| *b > a) {
                if let Some(l) = self.labels[a.index()].iter().find(|l| self.matches(b, l)) {
                    return Err(OcrError::Lexicon(format!("label '{l}' used for both {a} and {b}")));
                }
            }
        }
        Ok(())
    }

    pub fn labels(&self, v: OcrVital) -> &[String] {
        &self.labels[v.index()]
    }

    pub fn matches(&self, v: OcrVital, text: &str) -> bool {
        let t = norm(text);
        !t.is_empty() && self.labels[v.index()].iter().any(|l| norm(l) == t)
    }
}

/// Best anchor per vital: highest confidence, then top-most, then left-most.
pub fn find_anchors<'a>(boxes: &'a [TextBox], lexicon: &Lexicon) -> [Option<&'a TextBox>; 3] {
    let mut out = [None; 3];
    for v in OcrVital::ALL {
        out[v.index()] = boxes.iter().filter(|b| lexicon.matches(v, &b.text)).min_by(|a, b| {
            b.confidence
                .partial_cmp(&a.confidence)
                .unwrap_or(Ordering::Equal)
                .then(a.y.partial_cmp(&b.y).unwrap_or(Ordering::Equal))
                .then(a.x.partial_cmp(&b.x).unwrap_or(Ordering::Equal))
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tb(t: &str, c: f64, y: f64) -> TextBox {
        TextBox::new(t, c, 10.0, y, 20.0, 10.0).unwrap()
    }

    #[test]
    fn single_label_is_anchor() {
        let boxes = vec![tb("142", 0.9, 0.0), tb(" hr ", 0.7, 5.0)];
        let a = find_anchors(&boxes, &Lexicon::default());
        assert_eq!(a[OcrVital::Hr.index()].unwrap().text, " hr ");
        assert!(a[OcrVital::Rr.index()].is_none());
    }

    #[test]
    fn confidence_then_topmost() {
        let boxes = vec![tb("HR", 0.8, 0.0), tb("ECG", 0.9, 50.0)];
        assert_eq!(find_anchors(&boxes, &Lexicon::default())[0].unwrap().text, "ECG");
        let boxes = vec![tb("PR", 0.9, 40.0), tb("ECG", 0.9, 30.0)];
        assert_eq!(find_anchors(&boxes, &Lexicon::default())[0].unwrap().text, "ECG");
    }

    #[test]
    fn lexicon_must_be_disjoint_and_non_empty() {
        let s = |xs: &[&str]| xs.iter().map(|x| x.to_string()).collect::<Vec<_>>();
        assert!(Lexicon::new(s(&["HR"]), s(&["hr"]), s(&["RR"])).is_err());
        assert!(Lexicon::new(s(&["HR"]), s(&[" "]), s(&["RR"])).is_err());
        assert!(Lexicon::default().validate().is_ok());
    }
}
