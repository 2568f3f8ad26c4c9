//! Measured current draw and battery lifetime.

use super::SimError;

/// Update intervals with a measured current (seconds).
pub const CONNECTED_INTERVALS_S: [u8; 4] = [1, 2, 4, 5];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PowerMode {
    Advertising,
    Connected { update_interval_s: u8 },
}

/// Average current in mA. Only measured operating points are accepted;
/// there is no interpolation between intervals.
pub fn power_current(mode: PowerMode) -> Result<f64, SimError> {
    match mode {
        PowerMode::Advertising => Ok(12.79),
        PowerMode::Connected { update_interval_s } => match update_interval_s {
            1 => Ok(13.52),
            2 => Ok(12.74),
            4 => Ok(12.70),
            5 => Ok(12.69),
            other => Err(SimError::UnsupportedInterval(other)),
        },
    }
}

/// Hours of operation, `capacity / current`, rounded to 0.1 h.
pub fn battery_life_h(capacity_mah: f64, current_ma: f64) -> Result<f64, SimError> {
    if !(capacity_mah > 0.0) {
        return Err(SimError::NonPositive("battery capacity"));
    }
    if !(current_ma > 0.0) {
        return Err(SimError::NonPositive("current"));
    }
    Ok((capacity_mah / current_ma * 10.0).round() / 10.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn measured_currents() {
        assert_eq!(power_current(PowerMode::Advertising).unwrap(), 12.79);
        assert_eq!(power_current(PowerMode::Connected { update_interval_s: 1 }).unwrap(), 13.52);
        assert_eq!(power_current(PowerMode::Connected { update_interval_s: 5 }).unwrap(), 12.69);
        assert!(matches!(
            power_current(PowerMode::Connected { update_interval_s: 3 }),
            Err(SimError::UnsupportedInterval(3))
        ));
    }

    #[test]
    fn connected_spread_is_0_83_ma() {
        let currents: Vec<f64> = CONNECTED_INTERVALS_S
            .iter()
            .map(|&i| power_current(PowerMode::Connected { update_interval_s: i }).unwrap())
            .collect();
        let max = currents.iter().cloned().fold(f64::MIN, f64::max);
        let min = currents.iter().cloned().fold(f64::MAX, f64::min);
        assert!((max - min - 0.83).abs() < 1e-9);
    }

    #[test]
    fn battery_lifetimes() {
        assert_eq!(battery_life_h(2000.0, 13.52).unwrap(), 147.9);
        assert_eq!(battery_life_h(2000.0, 12.69).unwrap(), 157.6);
        assert_eq!(battery_life_h(1000.0, 12.69).unwrap(), 78.8);
        assert!(battery_life_h(0.0, 12.0).is_err());
        assert!(battery_life_h(100.0, -1.0).is_err());
        assert!(battery_life_h(f64::NAN, 1.0).is_err());
    }
}
