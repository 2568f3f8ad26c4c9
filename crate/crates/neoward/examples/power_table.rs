//! Current draw and battery life at every measured operating point.
//!
//! ```text
//! cargo run -p neoward --example power_table -- 2000
//! ```

use neoward_core::vitalsim::{battery_life_h, power_current, PowerMode, CONNECTED_INTERVALS_S};

fn main() {
    let mah: f64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(2000.0);
    let mut modes = vec![("advertising".to_string(), PowerMode::Advertising)];
    modes.extend(CONNECTED_INTERVALS_S.iter().map(|&s| (format!("connected, {s} s"), PowerMode::Connected { update_interval_s: s })));

    println!("{:<16} {:>8} {:>9} {:>7}", "mode", "mA", "hours", "days");
    for (name, mode) in modes {
        let ma = power_current(mode).unwrap();
        let h = battery_life_h(mah, ma).unwrap();
        println!("{name:<16} {ma:>8.2} {h:>9.1} {:>7.2}", h / 24.0);
    }
}
