use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// Controller clock tick.
pub type Tick = u64;

/// One controller clock period, in picoseconds (0.75 ns).
pub const TICK_PS: u64 = 750;

/// Converts nanoseconds to ticks, rounding up so that no constraint is ever shortened.
pub fn ns_to_ticks(ns: f64) -> Tick {
    if ns <= 0.0 {
        return 0;
    }
    let ps = (ns * 1000.0).round() as u64;
    ps.div_ceil(TICK_PS)
}

pub fn ticks_to_ns(ticks: Tick) -> f64 {
    (ticks * TICK_PS) as f64 / 1000.0
}

/// DDR timing parameters in nanoseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceTimings {
    pub t_rcd: f64,
    pub t_ras: f64,
    pub t_rp: f64,
    pub t_rc: f64,
    pub t_cl: f64,
    pub t_bl: f64,
    pub t_rfc: f64,
    pub t_refi: f64,
    pub t_refw: f64,
}

impl DeviceTimings {
    /// DDR4 8Gb: 64 ms refresh window, 7.8 us REF interval, 350 ns tRFC.
    pub fn ddr4_default() -> Self {
        Self {
            t_rcd: 15.0,
            t_ras: 33.0,
            t_rp: 15.0,
            t_rc: 48.0,
            t_cl: 15.0,
            t_bl: 2.5,
            t_rfc: 350.0,
            t_refi: 7_800.0,
            t_refw: 64_000_000.0,
        }
    }

    /// DDR5 8Gb: 32 ms refresh window, 3.9 us REF interval, 195 ns tRFC.
    pub fn ddr5_default() -> Self {
        Self {
            t_rcd: 15.0,
            t_ras: 33.0,
            t_rp: 15.0,
            t_rc: 48.0,
            t_cl: 15.0,
            t_bl: 3.0,
            t_rfc: 195.0,
            t_refi: 3_900.0,
            t_refw: 32_000_000.0,
        }
    }

    pub fn preset(name: &str) -> Result<Self, ConfigError> {
        match name {
            "ddr4_default" => Ok(Self::ddr4_default()),
            "ddr5_default" => Ok(Self::ddr5_default()),
            other => Err(ConfigError::Invalid(format!(
                "unknown timing preset `{other}` (expected ddr4_default or ddr5_default)"
            ))),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fields = [
            ("t_rcd", self.t_rcd),
            ("t_ras", self.t_ras),
            ("t_rp", self.t_rp),
            ("t_rc", self.t_rc),
            ("t_cl", self.t_cl),
            ("t_bl", self.t_bl),
            ("t_rfc", self.t_rfc),
            ("t_refi", self.t_refi),
            ("t_refw", self.t_refw),
        ];
        for (name, v) in fields {
            if !v.is_finite() || v < 0.0 {
                return Err(ConfigError::Invalid(format!("{name} must be a non-negative number")));
            }
        }
        if (self.t_rc - (self.t_ras + self.t_rp)).abs() > 1e-9 {
            return Err(ConfigError::Invalid(format!(
                "t_rc ({}) must equal t_ras + t_rp ({})",
                self.t_rc,
                self.t_ras + self.t_rp
            )));
        }
        if self.t_ras <= 0.0 || self.t_refi <= 0.0 || self.t_refw < self.t_refi {
            return Err(ConfigError::Invalid(
                "t_ras and t_refi must be positive and t_refw >= t_refi".into(),
            ));
        }
        Ok(())
    }

    pub fn ticks(&self) -> TimingTicks {
        TimingTicks {
            rcd: ns_to_ticks(self.t_rcd),
            ras: ns_to_ticks(self.t_ras),
            rp: ns_to_ticks(self.t_rp),
            rc: ns_to_ticks(self.t_rc),
            cl: ns_to_ticks(self.t_cl),
            bl: ns_to_ticks(self.t_bl).max(1),
            rfc: ns_to_ticks(self.t_rfc),
            refi: ns_to_ticks(self.t_refi),
            refw: ns_to_ticks(self.t_refw),
        }
    }
}

/// [`DeviceTimings`] converted to controller ticks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimingTicks {
    pub rcd: Tick,
    pub ras: Tick,
    pub rp: Tick,
    pub rc: Tick,
    pub cl: Tick,
    pub bl: Tick,
    pub rfc: Tick,
    pub refi: Tick,
    pub refw: Tick,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_match_standard_values() {
        let d5 = DeviceTimings::ddr5_default();
        assert_eq!(d5.t_refw, 32e6);
        assert_eq!(d5.t_refi, 3900.0);
        assert_eq!(d5.t_rfc, 195.0);
        let d4 = DeviceTimings::ddr4_default();
        assert_eq!(d4.t_refw, 64e6);
        assert_eq!(d4.t_refi, 7800.0);
        assert_eq!(d4.t_rfc, 350.0);
        d4.validate().unwrap();
        d5.validate().unwrap();
    }

    #[test]
    fn tick_conversion_rounds_up() {
        assert_eq!(ns_to_ticks(33.0), 44);
        assert_eq!(ns_to_ticks(15.0), 20);
        assert_eq!(ns_to_ticks(48.0), 64);
        assert_eq!(ns_to_ticks(12.0), 16);
        assert_eq!(ns_to_ticks(0.8), 2);
        assert_eq!(ns_to_ticks(0.0), 0);
        assert_eq!(ticks_to_ns(64), 48.0);
    }

    #[test]
    fn inconsistent_rc_rejected() {
        let mut t = DeviceTimings::ddr5_default();
        t.t_rc = 50.0;
        assert!(t.validate().is_err());
    }
}
