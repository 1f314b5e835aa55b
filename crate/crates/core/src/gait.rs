//! Open-loop alternating-tripod gait, used as a reference controller.

use std::f64::consts::PI;

use crate::error::Result;
use crate::observation::LastActions;
use crate::physics::{Action, Controller, WorldState};
use crate::robot::{LegId, RobotGeometry};

/// Tripod A = {FL, MR, HL}, tripod B = {FR, ML, HR}; each alternates half a
/// period of stance (foot sweeping back on the ground) with half a period of
/// swing (foot lifted and carried forward).
#[derive(Clone, Debug)]
pub struct TripodGait {
    /// Steps per full gait cycle.
    pub period: usize,
    /// Normalized coxa sweep amplitude.
    pub sweep: f64,
    /// Normalized femur lift during swing.
    pub lift: f64,
}

impl Default for TripodGait {
    fn default() -> Self {
        Self { period: 20, sweep: 0.3, lift: 0.5 }
    }
}

impl TripodGait {
    fn in_tripod_a(leg: LegId) -> bool {
        matches!(leg, LegId::FL | LegId::MR | LegId::HL)
    }

    pub fn action_at(&self, step: usize) -> Action {
        let half = (self.period / 2).max(1);
        let mut action = Action::zero();
        for leg in LegId::ALL {
            let offset = if Self::in_tripod_a(leg) { 0 } else { half };
            let t = (step + offset) % (2 * half);
            let u = (t % half) as f64 / half as f64;
            let stance = t < half;
            // forward displacement of the foot, +sweep = front
            let reach = if stance { self.sweep * (1.0 - 2.0 * u) } else { self.sweep * (2.0 * u - 1.0) };
            let lift = if stance { 0.0 } else { self.lift * (4.0 * (PI * u).sin()).min(1.0) };
            // +coxa rotates counter-clockwise: backwards for left legs, forwards for right legs
            let coxa = if leg.is_left() { -reach } else { reach };
            action.set_leg(leg, [coxa, lift, 0.0]);
        }
        action
    }
}

impl Controller for TripodGait {
    fn act(&mut self, _: &RobotGeometry, state: &WorldState, _: &LastActions) -> Result<Action> {
        Ok(self.action_at(state.step_index))
    }
}
