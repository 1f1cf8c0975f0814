use thiserror::Error;

use super::metric::CounterSpec;

/// A raw energy-counter value together with what is needed to decode it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawCounterReading {
    /// Device units, always `< 2^width_bits`.
    pub raw: u64,
    pub width_bits: u32,
    pub unit_joules: f64,
    /// Monotonic nanoseconds at read time.
    pub timestamp_ns: u64,
}

#[derive(Debug, Error, PartialEq)]
pub enum CounterError {
    #[error("counter width {0} outside 1..=64")]
    Width(u32),
    #[error("raw value {raw:#x} does not fit in {width_bits} bits")]
    RawOverflow { raw: u64, width_bits: u32 },
    #[error("counter unit must be positive and finite, got {0}")]
    Unit(f64),
    #[error("counter parameters differ: {prev_width}b/{prev_unit} J vs {next_width}b/{next_unit} J")]
    ParameterMismatch {
        prev_width: u32,
        prev_unit: f64,
        next_width: u32,
        next_unit: f64,
    },
    #[error("timestamps go backwards ({prev} ns -> {next} ns)")]
    TimeReversed { prev: u64, next: u64 },
}

pub(crate) fn width_mask(width_bits: u32) -> u64 {
    if width_bits >= 64 {
        u64::MAX
    } else {
        (1u64 << width_bits) - 1
    }
}

impl RawCounterReading {
    pub fn new(
        raw: u64,
        width_bits: u32,
        unit_joules: f64,
        timestamp_ns: u64,
    ) -> Result<Self, CounterError> {
        if !(1..=64).contains(&width_bits) {
            return Err(CounterError::Width(width_bits));
        }
        if raw & !width_mask(width_bits) != 0 {
            return Err(CounterError::RawOverflow { raw, width_bits });
        }
        if !(unit_joules.is_finite() && unit_joules > 0.0) {
            return Err(CounterError::Unit(unit_joules));
        }
        Ok(Self {
            raw,
            width_bits,
            unit_joules,
            timestamp_ns,
        })
    }

    /// Rebuilds a reading from a decoded joule cell of a trace.
    pub fn from_joules(joules: f64, spec: CounterSpec, timestamp_ns: u64) -> Result<Self, CounterError> {
        let raw = (joules / spec.unit_joules).round();
        let raw = if raw.is_finite() && raw >= 0.0 { raw as u64 } else { 0 };
        Self::new(raw & width_mask(spec.width_bits), spec.width_bits, spec.unit_joules, timestamp_ns)
    }

    pub fn joules(&self) -> f64 {
        self.raw as f64 * self.unit_joules
    }

    pub fn spec(&self) -> CounterSpec {
        CounterSpec {
            width_bits: self.width_bits,
            unit_joules: self.unit_joules,
        }
    }
}

/// Energy consumed between two reads of the same counter:
/// `((next - prev) mod 2^width) * unit`. Correct across at most one wrap.
pub fn counter_delta_joules(
    prev: &RawCounterReading,
    next: &RawCounterReading,
) -> Result<f64, CounterError> {
    if prev.width_bits != next.width_bits || prev.unit_joules != next.unit_joules {
        return Err(CounterError::ParameterMismatch {
            prev_width: prev.width_bits,
            prev_unit: prev.unit_joules,
            next_width: next.width_bits,
            next_unit: next.unit_joules,
        });
    }
    if next.timestamp_ns < prev.timestamp_ns {
        return Err(CounterError::TimeReversed {
            prev: prev.timestamp_ns,
            next: next.timestamp_ns,
        });
    }
    let units = next.raw.wrapping_sub(prev.raw) & width_mask(next.width_bits);
    Ok(units as f64 * next.unit_joules)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn reading(raw: u64, width: u32, unit: f64, ts: u64) -> RawCounterReading {
        RawCounterReading::new(raw, width, unit, ts).unwrap()
    }

    #[test]
    fn wraps_once() {
        let prev = reading(0xFFFF_FFF0, 32, 1.0, 0);
        let next = reading(0x0000_0010, 32, 1.0, 1);
        assert_eq!(counter_delta_joules(&prev, &next).unwrap(), 32.0);
    }

    #[test]
    fn identity_is_zero() {
        let r = reading(12345, 32, 1e-6, 7);
        assert_eq!(counter_delta_joules(&r, &r).unwrap(), 0.0);
    }

    #[test]
    fn full_width_counter() {
        let prev = reading(u64::MAX - 1, 64, 1e-6, 0);
        let next = reading(3, 64, 1e-6, 0);
        assert_eq!(counter_delta_joules(&prev, &next).unwrap(), 5.0 * 1e-6);
    }

    #[test]
    fn rejects_mismatched_parameters() {
        let a = reading(1, 32, 1.0, 0);
        assert!(matches!(
            counter_delta_joules(&a, &reading(2, 64, 1.0, 1)),
            Err(CounterError::ParameterMismatch { .. })
        ));
        assert!(matches!(
            counter_delta_joules(&a, &reading(2, 32, 0.5, 1)),
            Err(CounterError::ParameterMismatch { .. })
        ));
        assert!(matches!(
            counter_delta_joules(&reading(1, 32, 1.0, 5), &reading(2, 32, 1.0, 4)),
            Err(CounterError::TimeReversed { .. })
        ));
    }

    #[test]
    fn construction_checks() {
        assert_eq!(
            RawCounterReading::new(1 << 32, 32, 1.0, 0),
            Err(CounterError::RawOverflow {
                raw: 1 << 32,
                width_bits: 32
            })
        );
        assert!(RawCounterReading::new(0, 0, 1.0, 0).is_err());
        assert!(RawCounterReading::new(0, 32, -1.0, 0).is_err());
    }

    #[test]
    fn joules_round_trip_through_cells() {
        let spec = CounterSpec::new(32, 2f64.powi(-16)).unwrap();
        let r = reading(0xDEAD_BEEF, 32, spec.unit_joules, 0);
        let back = RawCounterReading::from_joules(r.joules(), spec, 0).unwrap();
        assert_eq!(back.raw, r.raw);
    }

    // Ring-counter oracle: step a 2^width ring one unit at a time.
    fn ring_steps(prev: u64, next: u64, width: u32) -> u64 {
        let modulus = 1u64 << width;
        let mut at = prev;
        let mut steps = 0;
        while at != next {
            at = (at + 1) % modulus;
            steps += 1;
        }
        steps
    }

    proptest! {
        #[test]
        fn matches_ring_oracle_small_widths(width in 1u32..=12, a in any::<u64>(), b in any::<u64>()) {
            let mask = (1u64 << width) - 1;
            let (prev, next) = (a & mask, b & mask);
            let got = counter_delta_joules(&reading(prev, width, 1.0, 0), &reading(next, width, 1.0, 0)).unwrap();
            prop_assert_eq!(got, ring_steps(prev, next, width) as f64);
        }

        #[test]
        fn never_negative(width in 1u32..=64, a in any::<u64>(), b in any::<u64>(), unit in 1e-9f64..10.0) {
            let mask = width_mask(width);
            let got = counter_delta_joules(&reading(a & mask, width, unit, 0), &reading(b & mask, width, unit, 1)).unwrap();
            prop_assert!(got >= 0.0 && got.is_finite());
        }
    }
}
