//! Intelligent Driver Model: longitudinal acceleration from speed, gap and
//! approach rate.

use serde::{Deserialize, Serialize};

use super::MobilityError;

/// Lower bound applied to every IDM acceleration (m/s²).
pub const EMERGENCY_DECELERATION: f64 = 9.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdmParams {
    /// m/s²
    pub max_acceleration: f64,
    /// Comfortable ("desired") deceleration, m/s².
    pub comfortable_deceleration: f64,
    /// Desired time headway, s.
    pub time_gap: f64,
    /// Jam distance, m.
    pub jam_distance: f64,
    /// Free acceleration exponent.
    pub exponent: f64,
}

impl Default for IdmParams {
    fn default() -> Self {
        Self {
            max_acceleration: 1.4,
            comfortable_deceleration: 2.0,
            time_gap: 1.0,
            jam_distance: 2.0,
            exponent: 4.0,
        }
    }
}

impl IdmParams {
    pub fn validate(&self) -> Result<(), MobilityError> {
        let fields = [
            ("max_acceleration", self.max_acceleration),
            ("comfortable_deceleration", self.comfortable_deceleration),
            ("time_gap", self.time_gap),
            ("jam_distance", self.jam_distance),
            ("exponent", self.exponent),
        ];
        for (name, value) in fields {
            if !(value.is_finite() && value > 0.0) {
                return Err(MobilityError::InvalidParameter { name, value });
            }
        }
        if self.exponent < 1.0 {
            return Err(MobilityError::InvalidParameter {
                name: "exponent",
                value: self.exponent,
            });
        }
        Ok(())
    }

    /// Dynamic desired gap s*; the speed-dependent part never goes negative.
    pub fn desired_gap(&self, v: f64, approach_rate: f64) -> f64 {
        let dynamic = v * self.time_gap
            + v * approach_rate / (2.0 * (self.max_acceleration * self.comfortable_deceleration).sqrt());
        self.jam_distance + dynamic.max(0.0)
    }
}

/// IDM acceleration for speed `v`, desired speed `v0`, bumper-to-bumper `gap`
/// (`f64::INFINITY` when nothing is ahead) and approach rate `v - v_leader`.
///
/// A non-positive gap is reported as a collision instead of evaluated.
pub fn idm_acceleration(v: f64, v0: f64, gap: f64, approach_rate: f64, p: &IdmParams) -> Result<f64, MobilityError> {
    if gap <= 0.0 || gap.is_nan() {
        return Err(MobilityError::Collision { gap });
    }
    let free = 1.0 - (v / v0).powf(p.exponent);
    let interaction = if gap.is_infinite() {
        0.0
    } else {
        (p.desired_gap(v, approach_rate) / gap).powi(2)
    };
    Ok((p.max_acceleration * (free - interaction)).max(-EMERGENCY_DECELERATION))
}
