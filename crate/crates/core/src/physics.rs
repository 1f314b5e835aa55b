//! Deterministic stance-anchoring simulator.
//!
//! One [`Environment::step`] at `dt` seconds:
//!
//! 1. Servo model: each joint moves towards its commanded target by at most
//!    `max_joint_speed * dt`, then is clamped to its limits.
//! 2. Feet that were in contact before the step stay where they are. The body
//!    pose is updated by the rigid transform that best maps the new
//!    (post-servo) foot positions back onto those anchors ([`align_rigid`]).
//! 3. With fewer than three anchors the body also drops by `g dt^2 / 2`.
//! 4. Feet may not sink into the terrain: the body is lifted by the largest
//!    penetration depth, which is how pushing a leg down raises the body.
//! 5. Contacts are recomputed: a foot touches when its height is within
//!    `contact_eps` of the terrain below it.
//! 6. The reward is the forward (world x) body velocity over the step. The
//!    episode ends after `episode_len` steps, or early when the body sinks
//!    below `fall_height_min` above the terrain or tilts beyond
//!    `fall_tilt_max`; a falling step earns zero.

use nalgebra::{Matrix3, SymmetricEigen, Vector3, SVD};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::sync::Arc;

use crate::error::{check_len, Error, Result};
use crate::numfmt::fmt_g17;
use crate::observation::{build_central_obs, LastActions};
use crate::rng::SplitMix64;
use crate::robot::{fk_leg_unchecked, rot_z, JointState, LegId, Pose, RobotGeometry, NUM_JOINTS, NUM_LEGS};
use crate::terrain::Heightmap;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    /// Seconds per step (25 Hz).
    pub dt: f64,
    pub episode_len: usize,
    pub contact_eps: f64,
    pub fall_height_min: f64,
    /// Radians between body z and world z.
    pub fall_tilt_max: f64,
    pub gravity: f64,
    /// Uniform per-joint perturbation applied at reset, radians.
    pub init_joint_noise: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            dt: 0.04,
            episode_len: 1024,
            contact_eps: 0.005,
            fall_height_min: 0.03,
            fall_tilt_max: 60f64.to_radians(),
            gravity: 9.81,
            init_joint_noise: 0.02,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::domain(format!("{name} must be positive, got {v}")))
            }
        };
        positive("dt", self.dt)?;
        positive("contact_eps", self.contact_eps)?;
        positive("fall_tilt_max", self.fall_tilt_max)?;
        if self.episode_len < 1 {
            return Err(Error::domain("episode_len must be >= 1"));
        }
        if !(self.fall_height_min >= 0.0 && self.fall_height_min.is_finite()) {
            return Err(Error::domain("fall_height_min must be >= 0"));
        }
        if !(self.gravity >= 0.0 && self.gravity.is_finite()) {
            return Err(Error::domain("gravity must be >= 0"));
        }
        if !(0.0..=0.5).contains(&self.init_joint_noise) {
            return Err(Error::domain("init_joint_noise must lie in [0, 0.5]"));
        }
        Ok(())
    }
}

/// 18 normalized joint commands in `[-1, 1]`, mapped affinely onto each joint range.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Action(pub [f64; NUM_JOINTS]);

impl Action {
    pub fn zero() -> Self {
        Action([0.0; NUM_JOINTS])
    }

    pub fn clamped(&self) -> Self {
        Action(self.0.map(|a| if a.is_nan() { 0.0 } else { a.clamp(-1.0, 1.0) }))
    }

    pub fn leg(&self, leg: LegId) -> [f64; 3] {
        let i = leg.joint_index(0);
        [self.0[i], self.0[i + 1], self.0[i + 2]]
    }

    pub fn set_leg(&mut self, leg: LegId, a: [f64; 3]) {
        let i = leg.joint_index(0);
        self.0[i..i + 3].copy_from_slice(&a);
    }

    /// The command whose target equals `joints` exactly (up to rounding).
    pub fn holding(geometry: &RobotGeometry, joints: &JointState) -> Self {
        Action(std::array::from_fn(|i| {
            let lim = geometry.joint_limits[i % 3];
            2.0 * (joints.angles[i] - lim.lo) / (lim.hi - lim.lo) - 1.0
        }))
    }

    pub fn joint_targets(&self, geometry: &RobotGeometry) -> [f64; NUM_JOINTS] {
        let a = self.clamped();
        std::array::from_fn(|i| geometry.joint_limits[i % 3].from_normalized(a.0[i]))
    }

    pub fn per_leg(&self) -> LastActions {
        let a = self.clamped();
        std::array::from_fn(|l| [a.0[3 * l], a.0[3 * l + 1], a.0[3 * l + 2]])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WorldState {
    pub body_position: Vector3<f64>,
    pub body_rotation: Matrix3<f64>,
    pub joints: JointState,
    pub contacts: [bool; NUM_LEGS],
    pub prev_body_x: f64,
    pub step_index: usize,
    pub terminated: bool,
}

impl WorldState {
    pub fn pose(&self) -> Pose {
        Pose { position: self.body_position, rotation: self.body_rotation }
    }

    /// Angle between the body z axis and world z.
    pub fn tilt(&self) -> f64 {
        self.body_rotation[(2, 2)].clamp(-1.0, 1.0).acos()
    }

    /// Z-Y-X Euler angles (roll, pitch, yaw).
    pub fn roll_pitch_yaw(&self) -> (f64, f64, f64) {
        let r = &self.body_rotation;
        let yaw = r[(1, 0)].atan2(r[(0, 0)]);
        let pitch = (-r[(2, 0)]).clamp(-1.0, 1.0).asin();
        let roll = r[(2, 1)].atan2(r[(2, 2)]);
        (roll, pitch, yaw)
    }
}

#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub state: WorldState,
    /// m/s
    pub reward: f64,
    pub done: bool,
}

/// Simulator: configuration, morphology and terrain.
#[derive(Clone, Debug)]
pub struct Environment {
    pub config: EnvConfig,
    pub geometry: RobotGeometry,
    pub terrain: Arc<Heightmap>,
}

impl Environment {
    pub fn new(config: EnvConfig, geometry: RobotGeometry, terrain: Arc<Heightmap>) -> Result<Self> {
        config.validate()?;
        geometry.validate()?;
        Ok(Self { config, geometry, terrain })
    }

    pub fn flat(config: EnvConfig) -> Result<Self> {
        Self::new(config, RobotGeometry::default(), Arc::new(crate::terrain::flat_terrain()))
    }

    fn body_feet(&self, joints: &JointState) -> [Vector3<f64>; NUM_LEGS] {
        LegId::ALL.map(|leg| fk_leg_unchecked(&self.geometry, leg, joints.leg(leg))[2])
    }

    pub fn foot_positions(&self, state: &WorldState) -> [Vector3<f64>; NUM_LEGS] {
        let pose = state.pose();
        self.body_feet(&state.joints).map(|p| pose.apply(&p))
    }

    pub fn contacts_for(&self, feet: &[Vector3<f64>; NUM_LEGS]) -> [bool; NUM_LEGS] {
        feet.map(|f| f.z <= self.terrain.height_at(f.x, f.y) + self.config.contact_eps)
    }

    pub fn body_clearance(&self, state: &WorldState) -> f64 {
        let p = state.body_position;
        p.z - self.terrain.height_at(p.x, p.y)
    }

    /// Standing pose over the map centre, feet on the terrain, joints perturbed by
    /// at most `init_joint_noise` around the mid-range posture.
    pub fn reset(&self, seed: u64) -> WorldState {
        let mut rng = SplitMix64::new(seed);
        let mut joints = self.geometry.neutral_joints();
        for (i, q) in joints.angles.iter_mut().enumerate() {
            let noise = self.config.init_joint_noise * rng.next_signed();
            *q = self.geometry.joint_limits[i % 3].clamp(*q + noise);
        }
        let feet = self.body_feet(&joints);
        let z = feet
            .iter()
            .map(|f| self.terrain.height_at(f.x, f.y) - f.z)
            .fold(f64::NEG_INFINITY, f64::max);
        let body_position = Vector3::new(0.0, 0.0, z);
        let world: [Vector3<f64>; NUM_LEGS] = feet.map(|f| f + body_position);
        WorldState {
            body_position,
            body_rotation: Matrix3::identity(),
            joints,
            contacts: self.contacts_for(&world),
            prev_body_x: 0.0,
            step_index: 0,
            terminated: false,
        }
    }

    pub fn step(&self, state: &WorldState, action: &Action) -> Result<StepOutcome> {
        if state.terminated {
            return Err(Error::usage("step called on a terminated state"));
        }
        if state.step_index >= self.config.episode_len {
            return Err(Error::usage("step called after the episode length was reached"));
        }
        let cfg = &self.config;
        let g = &self.geometry;

        let max_delta = g.max_joint_speed * cfg.dt;
        let targets = action.joint_targets(g);
        let mut joints = state.joints;
        for (i, q) in joints.angles.iter_mut().enumerate() {
            let step = (targets[i] - *q).clamp(-max_delta, max_delta);
            *q = g.joint_limits[i % 3].clamp(*q + step);
        }

        let old = state.pose();
        let old_feet = self.body_feet(&state.joints);
        let new_feet = self.body_feet(&joints);
        let anchored: Vec<usize> = (0..NUM_LEGS).filter(|&i| state.contacts[i]).collect();

        let mut pose = old;
        if !anchored.is_empty() {
            let src: Vec<Vector3<f64>> = anchored.iter().map(|&i| old.apply(&new_feet[i])).collect();
            let dst: Vec<Vector3<f64>> = anchored.iter().map(|&i| old.apply(&old_feet[i])).collect();
            let (rotation, translation) = align_rigid(&src, &dst)?;
            pose = Pose { rotation, position: translation }.compose(&old);
        }
        if anchored.len() < 3 {
            pose.position.z -= 0.5 * cfg.gravity * cfg.dt * cfg.dt;
        }
        pose.rotation = orthonormalize(&pose.rotation);

        let penetration = new_feet
            .iter()
            .map(|f| {
                let w = pose.apply(f);
                self.terrain.height_at(w.x, w.y) - w.z
            })
            .fold(0.0, f64::max);
        pose.position.z += penetration;

        let world_feet = new_feet.map(|f| pose.apply(&f));
        let mut next = WorldState {
            body_position: pose.position,
            body_rotation: pose.rotation,
            joints,
            contacts: self.contacts_for(&world_feet),
            prev_body_x: state.body_position.x,
            step_index: state.step_index + 1,
            terminated: false,
        };

        let fell = self.body_clearance(&next) < cfg.fall_height_min || next.tilt() > cfg.fall_tilt_max;
        let reward = if fell {
            next.terminated = true;
            0.0
        } else {
            (next.body_position.x - next.prev_body_x) / cfg.dt
        };
        let done = fell || next.step_index >= cfg.episode_len;
        Ok(StepOutcome { state: next, reward, done })
    }
}

/// Gram-Schmidt on the first two columns; third = cross product.
pub fn orthonormalize(r: &Matrix3<f64>) -> Matrix3<f64> {
    let c0 = r.column(0).normalize();
    let c1 = r.column(1) - c0 * c0.dot(&r.column(1));
    let c1 = c1.normalize();
    let c2 = c0.cross(&c1);
    Matrix3::from_columns(&[c0, c1, c2])
}

/// Rigid transform `(R, t)` minimising `sum |R src_i + t - dst_i|^2`.
///
/// Kabsch: centroid subtraction, SVD of the cross-covariance, reflection
/// correction so `det R = +1`. Underdetermined inputs fall back: a single
/// point (or coincident points) gives a pure translation, collinear points a
/// rotation about world z only.
pub fn align_rigid(src: &[Vector3<f64>], dst: &[Vector3<f64>]) -> Result<(Matrix3<f64>, Vector3<f64>)> {
    if src.is_empty() {
        return Err(Error::domain("align_rigid needs at least one point pair"));
    }
    check_len("align_rigid point sets", src.len(), dst.len())?;
    if src.iter().chain(dst).any(|p| !p.iter().all(|v| v.is_finite())) {
        return Err(Error::NonFinite("align_rigid points"));
    }
    let k = src.len() as f64;
    let src_c = src.iter().sum::<Vector3<f64>>() / k;
    let dst_c = dst.iter().sum::<Vector3<f64>>() / k;

    let mut scatter = Matrix3::zeros();
    let mut cross = Matrix3::zeros();
    for (s, d) in src.iter().zip(dst) {
        let a = s - src_c;
        let b = d - dst_c;
        scatter += a * a.transpose();
        cross += a * b.transpose();
    }

    let mut spread = SymmetricEigen::new(scatter).eigenvalues;
    spread.as_mut_slice().sort_by(|x, y| y.total_cmp(x));
    let rotation = if spread[0] <= 1e-24 {
        Matrix3::identity()
    } else if spread[1] <= 1e-10 * spread[0] {
        yaw_only(src, dst, &src_c, &dst_c)
    } else {
        let svd = SVD::new(cross, true, true);
        let u = svd.u.expect("u requested");
        let v = svd.v_t.expect("v_t requested").transpose();
        let sign = (v * u.transpose()).determinant().signum();
        v * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, sign)) * u.transpose()
    };
    Ok((rotation, dst_c - rotation * src_c))
}

fn yaw_only(src: &[Vector3<f64>], dst: &[Vector3<f64>], src_c: &Vector3<f64>, dst_c: &Vector3<f64>) -> Matrix3<f64> {
    let (mut sin_sum, mut cos_sum) = (0.0, 0.0);
    for (s, d) in src.iter().zip(dst) {
        let a = s - src_c;
        let b = d - dst_c;
        sin_sum += a.x * b.y - a.y * b.x;
        cos_sum += a.x * b.x + a.y * b.y;
    }
    if sin_sum.abs() + cos_sum.abs() <= 1e-300 {
        Matrix3::identity()
    } else {
        rot_z(sin_sum.atan2(cos_sum))
    }
}

/// Anything that maps a world state to an action.
pub trait Controller {
    fn act(&mut self, geometry: &RobotGeometry, state: &WorldState, last_actions: &LastActions) -> Result<Action>;
}

impl<F> Controller for F
where
    F: FnMut(&RobotGeometry, &WorldState, &LastActions) -> Result<Action>,
{
    fn act(&mut self, geometry: &RobotGeometry, state: &WorldState, last_actions: &LastActions) -> Result<Action> {
        self(geometry, state, last_actions)
    }
}

#[derive(Clone, Debug)]
pub struct StepRecord {
    pub step: usize,
    /// 84-dim central observation seen before acting.
    pub observation: Vec<f64>,
    pub action: Action,
    pub reward: f64,
    pub contacts: [bool; NUM_LEGS],
    pub position: Vector3<f64>,
    pub rotation: Matrix3<f64>,
    pub joints: JointState,
}

#[derive(Clone, Debug)]
pub struct Episode {
    /// Sum of per-step rewards.
    pub total_return: f64,
    pub steps: usize,
    pub fell: bool,
    pub initial: WorldState,
    pub final_state: WorldState,
    pub trajectory: Vec<StepRecord>,
}

pub fn run_episode(env: &Environment, controller: &mut dyn Controller, seed: u64) -> Result<Episode> {
    let initial = env.reset(seed);
    let mut state = initial.clone();
    let mut last: LastActions = [[0.0; 3]; NUM_LEGS];
    let mut total = 0.0;
    let mut trajectory = Vec::with_capacity(env.config.episode_len);
    loop {
        let observation = build_central_obs(&env.geometry, &state, &last)?.to_vec();
        let action = controller.act(&env.geometry, &state, &last)?.clamped();
        let out = env.step(&state, &action)?;
        total += out.reward;
        trajectory.push(StepRecord {
            step: out.state.step_index,
            observation,
            action,
            reward: out.reward,
            contacts: out.state.contacts,
            position: out.state.body_position,
            rotation: out.state.body_rotation,
            joints: out.state.joints,
        });
        last = action.per_leg();
        state = out.state;
        if out.done {
            break;
        }
    }
    Ok(Episode {
        total_return: total,
        steps: state.step_index,
        fell: state.terminated,
        initial,
        final_state: state,
        trajectory,
    })
}

/// Trajectory CSV: `step, reward, x, y, z, roll, pitch, yaw, q0..q17, c0..c5`.
/// Row 0 is the initial state.
pub fn trajectory_csv(episode: &Episode) -> String {
    let mut out = String::from("step,reward,x,y,z,roll,pitch,yaw");
    for i in 0..NUM_JOINTS {
        let _ = write!(out, ",q{i}");
    }
    for i in 0..NUM_LEGS {
        let _ = write!(out, ",c{i}");
    }
    out.push('\n');
    let init = &episode.initial;
    let mut row = |step: usize, reward: f64, state_like: (&Vector3<f64>, &Matrix3<f64>, &JointState, &[bool; NUM_LEGS])| {
        let (p, r, joints, contacts) = state_like;
        let probe = WorldState {
            body_position: *p,
            body_rotation: *r,
            joints: *joints,
            contacts: *contacts,
            prev_body_x: 0.0,
            step_index: step,
            terminated: false,
        };
        let (roll, pitch, yaw) = probe.roll_pitch_yaw();
        let _ = write!(out, "{step},{}", fmt_g17(reward));
        for v in [p.x, p.y, p.z, roll, pitch, yaw].into_iter().chain(joints.angles) {
            let _ = write!(out, ",{}", fmt_g17(v));
        }
        for c in contacts {
            let _ = write!(out, ",{}", u8::from(*c));
        }
        out.push('\n');
    };
    row(0, 0.0, (&init.body_position, &init.body_rotation, &init.joints, &init.contacts));
    for rec in &episode.trajectory {
        row(rec.step, rec.reward, (&rec.position, &rec.rotation, &rec.joints, &rec.contacts));
    }
    out
}
