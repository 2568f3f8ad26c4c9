//! A scenario file with a real desaturation, a bradycardia and some sensor
//! artifacts, played through the alert engine. Artifacts stay below the gate,
//! sustained excursions fold into one alert each.
//!
//! ```text
//! cargo run -p neoward --example alert_clustering [scenario-file]
//! ```

use neoward_core::alerts::{AlertEngine, ChangeKind};
use neoward_core::vitalsim::{generate_sample, Scenario};

const SCENARIO: &str = "
name = desat-with-artifacts
duration_s = 1800
seed = 4
event desaturation onset=600 duration=240 magnitude=-14
event bradycardia onset=1200 duration=90 magnitude=-55
glitch spo2 at=120 magnitude=-20
glitch spo2 at=900 magnitude=-20
glitch spo2 at=1500 magnitude=-20
";

fn main() {
    let text = match std::env::args().nth(1) {
        Some(path) => std::fs::read_to_string(path).expect("readable scenario file"),
        None => SCENARIO.to_string(),
    };
    let s = Scenario::parse(&text).expect("valid scenario");
    let mut engine = AlertEngine::with_defaults();
    let mut acked = false;
    for i in 0..s.duration_s {
        let t = s.start_ms + i * 1000;
        let sample = generate_sample(&s, 1, t).unwrap();
        for c in engine.observe(&sample) {
            let a = &c.alert;
            if c.kind == ChangeKind::Raised {
                println!("t={i:>5}s raised #{} {:?} {:?} p={:.3}", a.alert_id, a.source, a.direction, a.posterior);
            }
            // acknowledge the first alert straight away; later readings fold
            if !acked && c.kind == ChangeKind::Raised {
                engine.acknowledge(a.alert_id, "nurse", Some(t)).unwrap();
                acked = true;
                println!("t={i:>5}s acknowledged #{}", a.alert_id);
            }
        }
        engine.tick(t);
    }
    engine.flush();
    let st = engine.stats();
    println!(
        "\n{} threshold crossings -> {} clusters, {} gated out as artifacts, {} raised, {} folded into acknowledged alerts",
        st.raw_events, st.clusters_closed, st.gated_out, st.raised, st.folded
    );
    for a in engine.alerts(None) {
        println!("  #{} {:?}/{:?} {} events over {} s, {:?}", a.alert_id, a.source, a.direction, a.event_count, (a.last_t_ms - a.first_t_ms) / 1000, a.state);
    }
}
