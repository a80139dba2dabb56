use serde::{Deserialize, Serialize};

use super::MobilityError;
use crate::roadnet::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalPhase {
    Green,
    Yellow,
    Red,
}

impl SignalPhase {
    pub fn next(self) -> Self {
        match self {
            SignalPhase::Green => SignalPhase::Yellow,
            SignalPhase::Yellow => SignalPhase::Red,
            SignalPhase::Red => SignalPhase::Green,
        }
    }
}

/// Phase lengths in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhaseDurations {
    pub green: f64,
    pub yellow: f64,
    pub red: f64,
}

impl Default for PhaseDurations {
    /// Red equals green plus yellow, so the crossing approach group can run
    /// the complementary cycle without overlap.
    fn default() -> Self {
        Self {
            green: 25.0,
            yellow: 5.0,
            red: 30.0,
        }
    }
}

impl PhaseDurations {
    pub fn of(&self, phase: SignalPhase) -> f64 {
        match phase {
            SignalPhase::Green => self.green,
            SignalPhase::Yellow => self.yellow,
            SignalPhase::Red => self.red,
        }
    }

    pub fn cycle(&self) -> f64 {
        self.green + self.yellow + self.red
    }

    fn start_of(&self, phase: SignalPhase) -> f64 {
        match phase {
            SignalPhase::Green => 0.0,
            SignalPhase::Yellow => self.green,
            SignalPhase::Red => self.green + self.yellow,
        }
    }

    fn phase_at(&self, cycle_pos: f64) -> SignalPhase {
        if cycle_pos < self.green {
            SignalPhase::Green
        } else if cycle_pos < self.green + self.yellow {
            SignalPhase::Yellow
        } else {
            SignalPhase::Red
        }
    }
}

/// Fixed-time signal cycling green → yellow → red → green.
#[derive(Debug, Clone, PartialEq)]
pub struct TrafficSignal {
    pub node: NodeId,
    pub phase: SignalPhase,
    pub durations: PhaseDurations,
    /// Time spent in the current phase.
    pub clock: f64,
}

impl TrafficSignal {
    pub fn new(node: NodeId, durations: PhaseDurations, phase: SignalPhase, clock: f64) -> Result<Self, MobilityError> {
        for (name, value) in [("green", durations.green), ("yellow", durations.yellow), ("red", durations.red)] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(MobilityError::InvalidParameter { name, value });
            }
        }
        let mut signal = Self {
            node,
            phase,
            durations,
            clock: 0.0,
        };
        signal.step(clock);
        Ok(signal)
    }

    /// Advances the phase clock, consuming as many phase boundaries as `dt` spans.
    pub fn step(&mut self, dt: f64) {
        self.clock += dt;
        loop {
            let length = self.durations.of(self.phase);
            if self.clock < length {
                break;
            }
            self.clock -= length;
            self.phase = self.phase.next();
        }
    }

    /// Phase seen by an approach group. Group 0 follows the signal directly;
    /// group 1 runs the cycle shifted by green + yellow.
    pub fn phase_for_group(&self, group: u8) -> SignalPhase {
        if group == 0 {
            return self.phase;
        }
        let d = &self.durations;
        let pos = (d.start_of(self.phase) + self.clock + d.green + d.yellow) % d.cycle();
        d.phase_at(pos)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn durations() -> PhaseDurations {
        PhaseDurations { green: 30.0, yellow: 5.0, red: 25.0 }
    }

    #[test]
    fn boundary_advances_phase() {
        let mut s = TrafficSignal::new(1, durations(), SignalPhase::Green, 0.0).unwrap();
        s.step(30.0);
        assert_eq!((s.phase, s.clock), (SignalPhase::Yellow, 0.0));
    }

    #[test]
    fn long_step_consumes_phases_in_order() {
        let mut s = TrafficSignal::new(1, durations(), SignalPhase::Green, 0.0).unwrap();
        s.step(36.0);
        assert_eq!(s.phase, SignalPhase::Red);
        assert!((s.clock - 1.0).abs() < 1e-12);
        s.step(25.0 + 30.0 + 1.0);
        assert_eq!(s.phase, SignalPhase::Yellow);
    }

    #[test]
    fn cycle_arithmetic() {
        // 34 s into a (30, 5, 25) cycle starting green
        let s = TrafficSignal::new(1, durations(), SignalPhase::Green, 34.0).unwrap();
        assert_eq!(s.phase, SignalPhase::Yellow);
        for t in 0..120 {
            let s = TrafficSignal::new(1, durations(), SignalPhase::Green, t as f64).unwrap();
            let pos = t % 60;
            let expected = match pos {
                0..=29 => SignalPhase::Green,
                30..=34 => SignalPhase::Yellow,
                _ => SignalPhase::Red,
            };
            assert_eq!(s.phase, expected, "t={t}");
        }
    }

    #[test]
    fn complementary_group_never_green_together() {
        let d = PhaseDurations::default();
        for k in 0..600 {
            let s = TrafficSignal::new(1, d, SignalPhase::Green, k as f64 * 0.1).unwrap();
            let (a, b) = (s.phase_for_group(0), s.phase_for_group(1));
            assert!(a == SignalPhase::Red || b == SignalPhase::Red, "t={} {a:?} {b:?}", k as f64 * 0.1);
        }
    }

    #[test]
    fn zero_duration_rejected() {
        let d = PhaseDurations { yellow: 0.0, ..durations() };
        assert!(TrafficSignal::new(1, d, SignalPhase::Green, 0.0).is_err());
    }
}
