use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Display and exposure timing of the pattern cycle, in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingConfig {
    /// Slot per pattern including display overhead.
    pub t_c: f64,
    pub display_duration: f64,
    pub n_patterns: usize,
    /// Sensor response window after each pattern switch.
    pub transient: f64,
}

impl Default for TimingConfig {
    fn default() -> Self {
        TimingConfig {
            t_c: 5.434,
            display_duration: 5.0,
            n_patterns: 4,
            transient: 0.5,
        }
    }
}

impl TimingConfig {
    /// Frame exposure covering one pattern cycle, `n_patterns · t_c`.
    pub fn exposure(&self) -> f64 {
        self.n_patterns as f64 * self.t_c
    }

    pub fn t_c_us(&self) -> u64 {
        (self.t_c * 1000.0).round() as u64
    }

    pub fn transient_us(&self) -> u64 {
        (self.transient * 1000.0).round() as u64
    }

    pub fn cycle_us(&self) -> u64 {
        self.n_patterns as u64 * self.t_c_us()
    }

    /// Start time (ms) of the burst for transition `k` (1-based, pattern `k`
    /// to `k+1`) in cycle `cycle`.
    pub fn burst_start_ms(&self, cycle: usize, k: usize) -> f64 {
        (cycle * self.n_patterns + k) as f64 * self.t_c
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_c.is_finite() && self.t_c > 0.0) {
            return Err(Error::Timing(format!(
                "t_c = {} must be positive",
                self.t_c
            )));
        }
        if self.n_patterns < 2 {
            return Err(Error::Timing(format!(
                "n_patterns = {} < 2",
                self.n_patterns
            )));
        }
        if !(self.transient > 0.0 && self.transient < self.display_duration) {
            return Err(Error::Timing(format!(
                "transient {} must lie in (0, display_duration = {})",
                self.transient, self.display_duration
            )));
        }
        if self.display_duration > self.t_c {
            return Err(Error::Timing(format!(
                "display duration {} exceeds slot {}",
                self.display_duration, self.t_c
            )));
        }
        if self.transient_us() == 0 || self.transient_us() >= self.t_c_us() {
            return Err(Error::Timing(
                "transient must be at least 1 us and shorter than t_c".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_exposure_is_four_slots() {
        let t = TimingConfig::default();
        assert!((t.exposure() - 21.736).abs() < 1e-12);
        assert_eq!(t.cycle_us(), 21_736);
        assert!(t.validate().is_ok());
    }

    #[test]
    fn burst_starts() {
        let t = TimingConfig::default();
        let starts: Vec<f64> = (1..4).map(|k| t.burst_start_ms(0, k)).collect();
        for (s, want) in starts.iter().zip([5.434, 10.868, 16.302]) {
            assert!((s - want).abs() < 1e-9);
        }
        assert!((t.burst_start_ms(1, 1) - 27.17).abs() < 1e-9);
    }

    #[test]
    fn invalid_timing() {
        let mut t = TimingConfig {
            transient: 6.0,
            ..Default::default()
        };
        assert!(matches!(t.validate(), Err(Error::Timing(_))));
        t = TimingConfig {
            transient: 0.0,
            ..Default::default()
        };
        assert!(t.validate().is_err());
        t = TimingConfig {
            t_c: -1.0,
            ..Default::default()
        };
        assert!(t.validate().is_err());
    }
}
