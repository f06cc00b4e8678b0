//! Signal cadences on an integer base tick.
//!
//! Control signals go out every 20 ms and comfort signals (turn lights) every
//! 50 ms. Both are scheduled on a common 10 ms base so no float accumulation
//! is involved.

use serde::{Deserialize, Serialize};

use crate::error::ParamError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SignalClass {
    Control,
    Comfort,
}

/// Signal classes due on one base tick.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DueSignals {
    pub control: bool,
    pub comfort: bool,
}

impl DueSignals {
    pub fn contains(&self, class: SignalClass) -> bool {
        match class {
            SignalClass::Control => self.control,
            SignalClass::Comfort => self.comfort,
        }
    }

    pub fn is_empty(&self) -> bool {
        !self.control && !self.comfort
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cadence {
    pub base_period_us: u64,
    pub control_every: u64,
    pub comfort_every: u64,
}

impl Default for Cadence {
    fn default() -> Self {
        Self {
            base_period_us: 10_000,
            control_every: 2,
            comfort_every: 5,
        }
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn to_micros(name: &'static str, seconds: f64) -> Result<u64, ParamError> {
    let us = (seconds * 1e6).round();
    if !(seconds.is_finite() && us >= 1.0) || ((us / 1e6) - seconds).abs() > 1e-9 {
        return Err(ParamError::invalid(
            name,
            format!("period must be a positive whole number of microseconds, got {seconds}"),
        ));
    }
    Ok(us as u64)
}

impl Cadence {
    /// Builds a schedule whose base period is the GCD of the two periods.
    pub fn from_periods(control_period: f64, comfort_period: f64) -> Result<Self, ParamError> {
        let control = to_micros("tick_period", control_period)?;
        let comfort = to_micros("comfort_period", comfort_period)?;
        let base = gcd(control, comfort);
        Ok(Self {
            base_period_us: base,
            control_every: control / base,
            comfort_every: comfort / base,
        })
    }

    pub fn base_period(&self) -> f64 {
        self.base_period_us as f64 * 1e-6
    }

    pub fn due(&self, base_tick: u64) -> DueSignals {
        DueSignals {
            control: base_tick.is_multiple_of(self.control_every),
            comfort: base_tick.is_multiple_of(self.comfort_every),
        }
    }

    /// Base ticks covering `control_ticks` control periods.
    pub fn base_ticks_for(&self, control_ticks: u64) -> u64 {
        control_ticks * self.control_every
    }
}

/// Due signals on the default 10 ms base.
pub fn tick_cadence(tick_index: u64) -> DueSignals {
    Cadence::default().due(tick_index)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(
            tick_cadence(0),
            DueSignals {
                control: true,
                comfort: true
            }
        );
        assert!(tick_cadence(3).is_empty());
        assert!(tick_cadence(4).contains(SignalClass::Control));
        assert!(!tick_cadence(4).contains(SignalClass::Comfort));
        assert!(tick_cadence(5).contains(SignalClass::Comfort));
    }

    #[test]
    fn one_second_counts() {
        let (mut control, mut comfort) = (0, 0);
        for t in 0..100 {
            let d = tick_cadence(t);
            control += d.control as u32;
            comfort += d.comfort as u32;
        }
        assert_eq!((control, comfort), (50, 20));
    }

    #[test]
    fn from_periods() {
        assert_eq!(Cadence::from_periods(0.020, 0.050).unwrap(), Cadence::default());
        let c = Cadence::from_periods(0.010, 0.050).unwrap();
        assert_eq!((c.base_period_us, c.control_every, c.comfort_every), (10_000, 1, 5));
        let c = Cadence::from_periods(0.015, 0.050).unwrap();
        assert_eq!((c.base_period_us, c.control_every, c.comfort_every), (5_000, 3, 10));
        assert!(Cadence::from_periods(0.0, 0.05).is_err());
        assert!(Cadence::from_periods(1e-7, 0.05).is_err());
    }
}
