//! MOBIL lane-change decision.
//!
//! Gaps are bumper to bumper and measured relative to the deciding vehicle:
//! a leader's gap runs from our front to its rear, a follower's gap from its
//! front to our rear.

use serde::{Deserialize, Serialize};

use super::idm::{idm_acceleration, IdmParams};
use super::MobilityError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MobilParams {
    pub politeness: f64,
    /// Changing threshold, m/s².
    pub threshold: f64,
    /// Largest deceleration we may impose on the new follower, m/s².
    pub safe_deceleration: f64,
}

impl Default for MobilParams {
    fn default() -> Self {
        Self {
            politeness: 0.2,
            threshold: 0.1,
            safe_deceleration: 4.0,
        }
    }
}

impl MobilParams {
    pub fn validate(&self) -> Result<(), MobilityError> {
        if !(0.0..=1.0).contains(&self.politeness) {
            return Err(MobilityError::InvalidParameter {
                name: "politeness",
                value: self.politeness,
            });
        }
        if !(self.threshold >= 0.0 && self.threshold.is_finite()) {
            return Err(MobilityError::InvalidParameter {
                name: "threshold",
                value: self.threshold,
            });
        }
        if !(self.safe_deceleration > 0.0 && self.safe_deceleration.is_finite()) {
            return Err(MobilityError::InvalidParameter {
                name: "safe_deceleration",
                value: self.safe_deceleration,
            });
        }
        Ok(())
    }
}

/// The vehicle considering a lane change.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Subject {
    pub speed: f64,
    pub desired_speed: f64,
    pub length: f64,
    pub idm: IdmParams,
}

/// Anything we may have to follow: a vehicle or a stop line (speed 0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Leader {
    pub gap: f64,
    pub speed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Follower {
    pub gap: f64,
    pub speed: f64,
    pub desired_speed: f64,
    pub idm: IdmParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LaneNeighbors {
    pub leader: Option<Leader>,
    pub follower: Option<Follower>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LaneDecision {
    Stay,
    Change,
}

fn follow(v: f64, v0: f64, idm: &IdmParams, leader: Option<Leader>) -> Result<f64, MobilityError> {
    match leader {
        Some(l) => idm_acceleration(v, v0, l.gap, v - l.speed, idm),
        None => idm_acceleration(v, v0, f64::INFINITY, 0.0, idm),
    }
}

/// Gap the follower would see to `leader` once `subject` has left the lane.
fn bridged(follower: &Follower, subject: &Subject, leader: Option<Leader>) -> Option<Leader> {
    leader.map(|l| Leader {
        gap: follower.gap + subject.length + l.gap,
        speed: l.speed,
    })
}

/// Politeness-weighted acceleration advantage of changing lanes, or `None`
/// when the change is unsafe.
pub fn mobil_incentive(
    subject: &Subject,
    current: &LaneNeighbors,
    target: &LaneNeighbors,
    params: &MobilParams,
) -> Option<f64> {
    if target.leader.is_some_and(|l| l.gap <= 0.0) || target.follower.is_some_and(|f| f.gap <= 0.0) {
        return None;
    }
    let own = |leader| follow(subject.speed, subject.desired_speed, &subject.idm, leader).ok();
    let a_self = own(current.leader)?;
    let a_self_after = own(target.leader)?;

    let mut others = 0.0;
    if let Some(n) = &target.follower {
        let after = idm_acceleration(n.speed, n.desired_speed, n.gap, n.speed - subject.speed, &n.idm).ok()?;
        if after < -params.safe_deceleration {
            return None;
        }
        let before = follow(n.speed, n.desired_speed, &n.idm, bridged(n, subject, target.leader)).ok()?;
        others += after - before;
    }
    if let Some(o) = &current.follower {
        let before = idm_acceleration(o.speed, o.desired_speed, o.gap, o.speed - subject.speed, &o.idm).ok()?;
        let after = follow(o.speed, o.desired_speed, &o.idm, bridged(o, subject, current.leader)).ok()?;
        others += after - before;
    }
    Some(a_self_after - a_self + params.politeness * others)
}

/// Change only when the new follower stays above `-safe_deceleration` and
/// the incentive exceeds the threshold.
pub fn mobil_decide(subject: &Subject, current: &LaneNeighbors, target: &LaneNeighbors, params: &MobilParams) -> LaneDecision {
    match mobil_incentive(subject, current, target, params) {
        Some(incentive) if incentive > params.threshold => LaneDecision::Change,
        _ => LaneDecision::Stay,
    }
}
