//! Scenario definitions and the line-oriented scenario file format.
//!
//! ```text
//! # comments start with '#'
//! name = desat-demo
//! duration_s = 600
//! start_ms = 1700000000000
//! seed = 42
//! baseline.hr = 0:140, 300:150      # piecewise-linear (seconds:value), natural units
//! baseline.spo2 = 97                # a single value is a constant curve
//! motion = 0:10, 400:220
//! noise.hr = 2.04
//! static = 27, 1, 1450              # maternal age, complications, birth weight (g)
//! semistatic = 0.2, 0.1, 0, 0, 1, 0.5
//! event desaturation onset=120 duration=60 magnitude=-10
//! glitch spo2 at=300 magnitude=-15
//! ```

use super::SimError;
use crate::vitals::VitalKind;
use std::fmt::Write as _;
use std::str::FromStr;

/// Default scenario epoch: 2023-11-14T22:13:20Z.
pub const DEFAULT_START_MS: u64 = 1_700_000_000_000;

/// Piecewise-linear curve over scenario seconds, constant beyond its ends.
#[derive(Clone, Debug, PartialEq)]
pub struct Curve {
    points: Vec<(f64, f64)>,
}

impl Curve {
    pub fn constant(value: f64) -> Self {
        Curve { points: vec![(0.0, value)] }
    }

    pub fn new(mut points: Vec<(f64, f64)>) -> Result<Self, SimError> {
        if points.is_empty() {
            return Err(SimError::Scenario("curve needs at least one point".into()));
        }
        if points.iter().any(|(t, v)| !t.is_finite() || !v.is_finite()) {
            return Err(SimError::Scenario("curve points must be finite".into()));
        }
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(Curve { points })
    }

    pub fn at(&self, t_s: f64) -> f64 {
        let pts = &self.points;
        if t_s <= pts[0].0 {
            return pts[0].1;
        }
        for w in pts.windows(2) {
            let (t0, v0) = w[0];
            let (t1, v1) = w[1];
            if t_s <= t1 {
                if t1 == t0 {
                    return v1;
                }
                return v0 + (v1 - v0) * (t_s - t0) / (t1 - t0);
            }
        }
        pts[pts.len() - 1].1
    }

    fn parse(s: &str) -> Result<Self, SimError> {
        let mut points = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part.split_once(':') {
                Some((t, v)) => points.push((parse_f64(t)?, parse_f64(v)?)),
                None => points.push((0.0, parse_f64(part)?)),
            }
        }
        Curve::new(points)
    }

    fn render(&self) -> String {
        self.points
            .iter()
            .map(|(t, v)| format!("{t}:{v}"))
            .collect::<Vec<_>>()
            .join(", ")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EventKind {
    Bradycardia,
    Desaturation,
    Hypothermia,
    Apnea,
}

impl EventKind {
    pub fn vital(self) -> VitalKind {
        match self {
            EventKind::Bradycardia => VitalKind::Hr,
            EventKind::Desaturation => VitalKind::Spo2,
            EventKind::Hypothermia => VitalKind::Temp,
            EventKind::Apnea => VitalKind::Rr,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Bradycardia => "bradycardia",
            EventKind::Desaturation => "desaturation",
            EventKind::Hypothermia => "hypothermia",
            EventKind::Apnea => "apnea",
        }
    }
}

impl FromStr for EventKind {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, SimError> {
        match s {
            "bradycardia" => Ok(EventKind::Bradycardia),
            "desaturation" => Ok(EventKind::Desaturation),
            "hypothermia" => Ok(EventKind::Hypothermia),
            "apnea" => Ok(EventKind::Apnea),
            other => Err(SimError::Scenario(format!("unknown event kind '{other}'"))),
        }
    }
}

/// A clinical event: an additive offset on one vital over `[onset, onset + duration)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioEvent {
    pub kind: EventKind,
    pub onset_s: f64,
    pub duration_s: f64,
    /// Natural units of the affected vital (bpm, %, /min, degC).
    pub magnitude: f64,
}

impl ScenarioEvent {
    pub fn active_at(&self, t_s: f64) -> bool {
        t_s >= self.onset_s && t_s < self.onset_s + self.duration_s
    }
}

/// A one-second sensor artifact. Not flagged as an event; it is what the
/// alert engine's false-alarm gate is meant to filter.
#[derive(Clone, Debug, PartialEq)]
pub struct Glitch {
    pub vital: VitalKind,
    pub at_s: f64,
    pub magnitude: f64,
}

impl Glitch {
    pub fn active_at(&self, t_s: f64) -> bool {
        t_s >= self.at_s && t_s < self.at_s + 1.0
    }
}

/// Per-vital Gaussian noise standard deviations in natural units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseStd {
    pub hr: f64,
    pub spo2: f64,
    pub rr: f64,
    pub temp: f64,
}

impl NoiseStd {
    /// Sensor accuracy figures: pulse rate 2.04 bpm, SpO2 1.39 %, temperature 0.2 degC.
    pub const DEFAULT: NoiseStd = NoiseStd { hr: 2.04, spo2: 1.39, rr: 2.0, temp: 0.2 };
    pub const ZERO: NoiseStd = NoiseStd { hr: 0.0, spo2: 0.0, rr: 0.0, temp: 0.0 };

    pub fn get(&self, kind: VitalKind) -> f64 {
        match kind {
            VitalKind::Hr => self.hr,
            VitalKind::Spo2 => self.spo2,
            VitalKind::Rr => self.rr,
            VitalKind::Temp => self.temp,
        }
    }

    fn set(&mut self, kind: VitalKind, v: f64) {
        match kind {
            VitalKind::Hr => self.hr = v,
            VitalKind::Spo2 => self.spo2 = v,
            VitalKind::Rr => self.rr = v,
            VitalKind::Temp => self.temp = v,
        }
    }
}

impl Default for NoiseStd {
    fn default() -> Self {
        NoiseStd::DEFAULT
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub duration_s: u64,
    pub start_ms: u64,
    /// Indexed by [`VitalKind::index`].
    pub baselines: [Curve; 4],
    pub motion: Curve,
    pub events: Vec<ScenarioEvent>,
    pub glitches: Vec<Glitch>,
    pub noise: NoiseStd,
    pub seed: u64,
    pub static_features: Option<[f64; 3]>,
    pub semistatic_features: Option<Vec<f64>>,
}

impl Scenario {
    /// Stable term-like baselines with default sensor noise.
    pub fn stable(duration_s: u64, seed: u64) -> Self {
        Scenario {
            name: "stable".into(),
            duration_s,
            start_ms: DEFAULT_START_MS,
            baselines: [
                Curve::constant(140.0),
                Curve::constant(97.0),
                Curve::constant(45.0),
                Curve::constant(36.8),
            ],
            motion: Curve::constant(10.0),
            events: Vec::new(),
            glitches: Vec::new(),
            noise: NoiseStd::DEFAULT,
            seed,
            static_features: None,
            semistatic_features: None,
        }
    }

    /// Built-in scenarios: `stable`, `desaturation`, `bradycardia`,
    /// `hypothermia`, `apnea`, `glitchy`, `active`.
    pub fn builtin(name: &str, duration_s: u64, seed: u64) -> Result<Self, SimError> {
        let mut s = Scenario::stable(duration_s, seed);
        s.name = name.to_string();
        let d = duration_s as f64;
        let mid = (d * 0.4).floor();
        let span = (d * 0.2).max(1.0).floor();
        match name {
            "stable" => {}
            "desaturation" => s.events.push(ScenarioEvent {
                kind: EventKind::Desaturation,
                onset_s: mid,
                duration_s: span,
                magnitude: -12.0,
            }),
            "bradycardia" => s.events.push(ScenarioEvent {
                kind: EventKind::Bradycardia,
                onset_s: mid,
                duration_s: span,
                magnitude: -50.0,
            }),
            "hypothermia" => {
                s.baselines[VitalKind::Temp.index()] = Curve::new(vec![(0.0, 36.8), (d, 36.2)])?;
                s.events.push(ScenarioEvent {
                    kind: EventKind::Hypothermia,
                    onset_s: mid,
                    duration_s: span,
                    magnitude: -1.0,
                });
            }
            "apnea" => s.events.push(ScenarioEvent {
                kind: EventKind::Apnea,
                onset_s: mid,
                duration_s: span.min(30.0),
                magnitude: -40.0,
            }),
            "glitchy" => {
                let mut t = 37.0;
                while t < d {
                    s.glitches.push(Glitch { vital: VitalKind::Spo2, at_s: t, magnitude: -15.0 });
                    t += 211.0;
                }
                s.events.push(ScenarioEvent {
                    kind: EventKind::Desaturation,
                    onset_s: mid,
                    duration_s: span,
                    magnitude: -12.0,
                });
            }
            "active" => s.motion = Curve::new(vec![(0.0, 10.0), (d / 3.0, 120.0), (2.0 * d / 3.0, 230.0)])?,
            other => return Err(SimError::Scenario(format!("unknown built-in scenario '{other}'"))),
        }
        s.validate()?;
        Ok(s)
    }

    pub fn end_ms(&self) -> u64 {
        self.start_ms + self.duration_s * 1000
    }

    pub fn baseline(&self, kind: VitalKind) -> &Curve {
        &self.baselines[kind.index()]
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let d = self.duration_s as f64;
        for e in &self.events {
            if e.onset_s < 0.0 || e.duration_s <= 0.0 || e.onset_s + e.duration_s > d {
                return Err(SimError::Scenario(format!(
                    "{} event [{}, {}) lies outside scenario duration {d}s",
                    e.kind.as_str(),
                    e.onset_s,
                    e.onset_s + e.duration_s
                )));
            }
        }
        for g in &self.glitches {
            if g.at_s < 0.0 || g.at_s >= d {
                return Err(SimError::Scenario(format!("glitch at {}s outside scenario", g.at_s)));
            }
        }
        for k in VitalKind::ALL {
            let n = self.noise.get(k);
            if !(n >= 0.0 && n.is_finite()) {
                return Err(SimError::Scenario(format!("noise std for {k} must be >= 0")));
            }
        }
        if let Some(f) = &self.static_features {
            if f.iter().any(|v| !v.is_finite()) {
                return Err(SimError::Scenario("static features must be finite".into()));
            }
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, SimError> {
        let mut s = Scenario::stable(3600, 0);
        s.name = "custom".into();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| SimError::Scenario(format!("line {}: {msg}", lineno + 1));
            if let Some(rest) = line.strip_prefix("event ") {
                let mut words = rest.split_whitespace();
                let kind: EventKind = words.next().ok_or_else(|| err("missing event kind".into()))?.parse()?;
                let attrs = parse_attrs(words)?;
                s.events.push(ScenarioEvent {
                    kind,
                    onset_s: attr(&attrs, "onset").map_err(err)?,
                    duration_s: attr(&attrs, "duration").map_err(err)?,
                    magnitude: attr(&attrs, "magnitude").map_err(err)?,
                });
                continue;
            }
            if let Some(rest) = line.strip_prefix("glitch ") {
                let mut words = rest.split_whitespace();
                let vital: VitalKind =
                    words.next().ok_or_else(|| err("missing vital".into()))?.parse().map_err(err)?;
                let attrs = parse_attrs(words)?;
                s.glitches.push(Glitch {
                    vital,
                    at_s: attr(&attrs, "at").map_err(err)?,
                    magnitude: attr(&attrs, "magnitude").map_err(err)?,
                });
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| err(format!("expected key = value, got '{line}'")))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "name" => s.name = value.to_string(),
                "duration_s" => s.duration_s = value.parse().map_err(|_| err("bad duration_s".into()))?,
                "start_ms" => s.start_ms = value.parse().map_err(|_| err("bad start_ms".into()))?,
                "seed" => s.seed = value.parse().map_err(|_| err("bad seed".into()))?,
                "motion" => s.motion = Curve::parse(value)?,
                "static" => {
                    let v = parse_list(value)?;
                    let arr: [f64; 3] = v.try_into().map_err(|_| err("static needs exactly 3 values".into()))?;
                    s.static_features = Some(arr);
                }
                "semistatic" => s.semistatic_features = Some(parse_list(value)?),
                _ => {
                    if let Some(v) = key.strip_prefix("baseline.") {
                        let kind: VitalKind = v.parse().map_err(err)?;
                        s.baselines[kind.index()] = Curve::parse(value)?;
                    } else if let Some(v) = key.strip_prefix("noise.") {
                        let kind: VitalKind = v.parse().map_err(err)?;
                        s.noise.set(kind, parse_f64(value)?);
                    } else {
                        return Err(err(format!("unknown key '{key}'")));
                    }
                }
            }
        }
        s.validate()?;
        Ok(s)
    }

    /// Render in the file format; `parse(render())` reproduces the scenario.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "name = {}", self.name);
        let _ = writeln!(out, "duration_s = {}", self.duration_s);
        let _ = writeln!(out, "start_ms = {}", self.start_ms);
        let _ = writeln!(out, "seed = {}", self.seed);
        for k in VitalKind::ALL {
            let _ = writeln!(out, "baseline.{k} = {}", self.baseline(k).render());
            let _ = writeln!(out, "noise.{k} = {}", self.noise.get(k));
        }
        let _ = writeln!(out, "motion = {}", self.motion.render());
        if let Some(f) = &self.static_features {
            let _ = writeln!(out, "static = {}, {}, {}", f[0], f[1], f[2]);
        }
        if let Some(f) = &self.semistatic_features {
            let parts: Vec<String> = f.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "semistatic = {}", parts.join(", "));
        }
        for e in &self.events {
            let _ = writeln!(
                out,
                "event {} onset={} duration={} magnitude={}",
                e.kind.as_str(),
                e.onset_s,
                e.duration_s,
                e.magnitude
            );
        }
        for g in &self.glitches {
            let _ = writeln!(out, "glitch {} at={} magnitude={}", g.vital, g.at_s, g.magnitude);
        }
        out
    }
}

fn parse_f64(s: &str) -> Result<f64, SimError> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| SimError::Scenario(format!("expected a number, got '{s}'")))
}

fn parse_list(s: &str) -> Result<Vec<f64>, SimError> {
    s.split(',').map(parse_f64).collect()
}

fn parse_attrs<'a>(words: impl Iterator<Item = &'a str>) -> Result<Vec<(&'a str, f64)>, SimError> {
    words
        .map(|w| {
            let (k, v) = w
                .split_once('=')
                .ok_or_else(|| SimError::Scenario(format!("expected key=value, got '{w}'")))?;
            Ok((k, parse_f64(v)?))
        })
        .collect()
}

fn attr(attrs: &[(&str, f64)], name: &str) -> Result<f64, String> {
    attrs
        .iter()
        .find(|(k, _)| *k == name)
        .map(|(_, v)| *v)
        .ok_or_else(|| format!("missing attribute '{name}'"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curve_interpolates_and_extrapolates_flat() {
        let c = Curve::new(vec![(0.0, 10.0), (10.0, 20.0)]).unwrap();
        assert_eq!(c.at(-5.0), 10.0);
        assert_eq!(c.at(5.0), 15.0);
        assert_eq!(c.at(50.0), 20.0);
    }

    #[test]
    fn parse_render_round_trip() {
        let text = "name = demo\nduration_s = 600\nseed = 9\nbaseline.hr = 0:140, 300:150\n\
                    noise.temp = 0.1\nmotion = 0:10, 400:220\nstatic = 27, 1, 1450\n\
                    event desaturation onset=120 duration=60 magnitude=-10\n\
                    glitch spo2 at=300 magnitude=-15 # artifact\n";
        let s = Scenario::parse(text).unwrap();
        assert_eq!(s.events.len(), 1);
        assert_eq!(s.glitches.len(), 1);
        assert_eq!(s.baseline(VitalKind::Hr).at(150.0), 145.0);
        assert_eq!(Scenario::parse(&s.render()).unwrap(), s);
    }

    #[test]
    fn event_outside_duration_rejected() {
        let text = "duration_s = 100\nevent apnea onset=90 duration=20 magnitude=-30\n";
        assert!(Scenario::parse(text).is_err());
    }

    #[test]
    fn negative_noise_rejected() {
        assert!(Scenario::parse("noise.hr = -1\n").is_err());
    }

    #[test]
    fn builtins_validate() {
        for name in ["stable", "desaturation", "bradycardia", "hypothermia", "apnea", "glitchy", "active"] {
            Scenario::builtin(name, 600, 1).unwrap();
        }
        assert!(Scenario::builtin("nope", 600, 1).is_err());
    }
}
