//! Observation vectors for the two controller architectures.
//!
//! Per-leg feature block (13 values):
//!
//! | offset | content                                              |
//! |--------|------------------------------------------------------|
//! | 0..9   | coxa end, femur end, foot (x, y, z each), body frame |
//! | 9      | ground contact, 0 or 1                               |
//! | 10..13 | previous normalized action (coxa, femur, tibia)      |
//!
//! A leg controller sees its own block without the last action (10), the
//! full blocks of its two ring neighbours (2 x 13) and the 6D body
//! orientation: 42 values. The central controller sees all six full blocks in
//! [`LegId`] order followed by the orientation: 84 values.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::physics::WorldState;
use crate::robot::{check_rotation, fk_leg, LegId, RobotGeometry, NUM_LEGS};

pub const OWN_BLOCK_DIM: usize = 10;
pub const FULL_BLOCK_DIM: usize = 13;
pub const ORIENTATION_DIM: usize = 6;
pub const LOCAL_OBS_DIM: usize = OWN_BLOCK_DIM + 2 * FULL_BLOCK_DIM + ORIENTATION_DIM;
pub const CENTRAL_OBS_DIM: usize = NUM_LEGS * FULL_BLOCK_DIM + ORIENTATION_DIM;

/// Previous normalized action of each leg, [`LegId`] order.
pub type LastActions = [[f64; 3]; NUM_LEGS];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LegFeature {
    pub segment_positions: [f64; 9],
    pub contact: f64,
    pub last_action: [f64; 3],
}

impl LegFeature {
    pub fn own_block(&self) -> [f64; OWN_BLOCK_DIM] {
        let mut out = [0.0; OWN_BLOCK_DIM];
        out[..9].copy_from_slice(&self.segment_positions);
        out[9] = self.contact;
        out
    }

    pub fn full_block(&self) -> [f64; FULL_BLOCK_DIM] {
        let mut out = [0.0; FULL_BLOCK_DIM];
        out[..OWN_BLOCK_DIM].copy_from_slice(&self.own_block());
        out[OWN_BLOCK_DIM..].copy_from_slice(&self.last_action);
        out
    }
}

pub fn leg_feature(geometry: &RobotGeometry, state: &WorldState, leg: LegId, last_actions: &LastActions) -> Result<LegFeature> {
    let pts = fk_leg(geometry, leg, state.joints.leg(leg))?;
    let mut segment_positions = [0.0; 9];
    for (k, p) in pts.iter().enumerate() {
        segment_positions[3 * k..3 * k + 3].copy_from_slice(p.as_slice());
    }
    Ok(LegFeature {
        segment_positions,
        contact: if state.contacts[leg.index()] { 1.0 } else { 0.0 },
        last_action: last_actions[leg.index()],
    })
}

/// Ring FL - ML - HL - HR - MR - FR - FL; each leg's pair is (predecessor, successor).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NeighborTopology {
    neighbors: [(LegId, LegId); NUM_LEGS],
}

const RING: [LegId; NUM_LEGS] = [LegId::FL, LegId::ML, LegId::HL, LegId::HR, LegId::MR, LegId::FR];

impl Default for NeighborTopology {
    fn default() -> Self {
        let mut neighbors = [(LegId::FL, LegId::FL); NUM_LEGS];
        for (pos, leg) in RING.iter().enumerate() {
            let prev = RING[(pos + NUM_LEGS - 1) % NUM_LEGS];
            let next = RING[(pos + 1) % NUM_LEGS];
            neighbors[leg.index()] = (prev, next);
        }
        Self { neighbors }
    }
}

impl NeighborTopology {
    pub fn neighbors(&self, leg: LegId) -> (LegId, LegId) {
        self.neighbors[leg.index()]
    }

    pub fn are_neighbors(&self, a: LegId, b: LegId) -> bool {
        let (x, y) = self.neighbors(a);
        x == b || y == b
    }

    /// Every leg has two distinct neighbours other than itself, and the relation is symmetric.
    pub fn validate(&self) -> Result<()> {
        for leg in LegId::ALL {
            let (a, b) = self.neighbors(leg);
            if a == b || a == leg || b == leg {
                return Err(Error::domain(format!("{leg} must have two distinct neighbours")));
            }
            if !self.are_neighbors(a, leg) || !self.are_neighbors(b, leg) {
                return Err(Error::domain(format!("neighbour relation of {leg} is not symmetric")));
            }
        }
        Ok(())
    }
}

/// First two columns of the body rotation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Orientation6D(pub [f64; ORIENTATION_DIM]);

pub fn encode_orientation(rotation: &Matrix3<f64>) -> Result<Orientation6D> {
    check_rotation(rotation)?;
    let mut v = [0.0; ORIENTATION_DIM];
    v[..3].copy_from_slice(rotation.column(0).as_slice());
    v[3..].copy_from_slice(rotation.column(1).as_slice());
    Ok(Orientation6D(v))
}

/// Gram-Schmidt: normalise the first triple, orthogonalise and normalise the
/// second against it, complete with the cross product.
pub fn decode_orientation(v: &[f64; ORIENTATION_DIM]) -> Result<Matrix3<f64>> {
    if !v.iter().all(|x| x.is_finite()) {
        return Err(Error::NonFinite("orientation"));
    }
    let a = Vector3::new(v[0], v[1], v[2]);
    let b = Vector3::new(v[3], v[4], v[5]);
    let a_norm = a.norm();
    if a_norm < 1e-12 {
        return Err(Error::domain("first orientation column is zero"));
    }
    let c0 = a / a_norm;
    let resid = b - c0 * c0.dot(&b);
    let r_norm = resid.norm();
    if r_norm < 1e-12 * b.norm().max(1.0) {
        return Err(Error::domain("orientation columns are parallel or zero"));
    }
    let c1 = resid / r_norm;
    Ok(Matrix3::from_columns(&[c0, c1, c0.cross(&c1)]))
}

pub fn build_local_obs(
    geometry: &RobotGeometry,
    state: &WorldState,
    leg: LegId,
    last_actions: &LastActions,
    topology: &NeighborTopology,
) -> Result<[f64; LOCAL_OBS_DIM]> {
    let (na, nb) = topology.neighbors(leg);
    let mut out = [0.0; LOCAL_OBS_DIM];
    out[..OWN_BLOCK_DIM].copy_from_slice(&leg_feature(geometry, state, leg, last_actions)?.own_block());
    let mut at = OWN_BLOCK_DIM;
    for n in [na, nb] {
        out[at..at + FULL_BLOCK_DIM].copy_from_slice(&leg_feature(geometry, state, n, last_actions)?.full_block());
        at += FULL_BLOCK_DIM;
    }
    out[at..].copy_from_slice(&encode_orientation(&state.body_rotation)?.0);
    Ok(out)
}

pub fn build_central_obs(geometry: &RobotGeometry, state: &WorldState, last_actions: &LastActions) -> Result<[f64; CENTRAL_OBS_DIM]> {
    let mut out = [0.0; CENTRAL_OBS_DIM];
    for leg in LegId::ALL {
        let at = leg.index() * FULL_BLOCK_DIM;
        out[at..at + FULL_BLOCK_DIM].copy_from_slice(&leg_feature(geometry, state, leg, last_actions)?.full_block());
    }
    out[NUM_LEGS * FULL_BLOCK_DIM..].copy_from_slice(&encode_orientation(&state.body_rotation)?.0);
    Ok(out)
}

const SEGMENTS: [&str; 3] = ["coxa_end", "femur_end", "foot"];
const AXES: [&str; 3] = ["x", "y", "z"];
const JOINTS: [&str; 3] = ["coxa", "femur", "tibia"];

fn block_names(leg: LegId, with_action: bool) -> Vec<String> {
    let mut names = Vec::with_capacity(FULL_BLOCK_DIM);
    for seg in SEGMENTS {
        for ax in AXES {
            names.push(format!("{leg}.{seg}.{ax}"));
        }
    }
    names.push(format!("{leg}.contact"));
    if with_action {
        for j in JOINTS {
            names.push(format!("{leg}.last_action.{j}"));
        }
    }
    names
}

fn orientation_names() -> Vec<String> {
    ["col0", "col1"]
        .iter()
        .flat_map(|c| AXES.iter().map(move |a| format!("orientation.{c}.{a}")))
        .collect()
}

/// Index-ordered semantic names of the 42-dim observation of `leg`.
pub fn describe_local(leg: LegId, topology: &NeighborTopology) -> Vec<String> {
    let (a, b) = topology.neighbors(leg);
    let mut names = block_names(leg, false);
    names.extend(block_names(a, true));
    names.extend(block_names(b, true));
    names.extend(orientation_names());
    names
}

/// Index-ordered semantic names of the 84-dim central observation.
pub fn describe_central() -> Vec<String> {
    let mut names: Vec<String> = LegId::ALL.iter().flat_map(|&l| block_names(l, true)).collect();
    names.extend(orientation_names());
    names
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::{EnvConfig, Environment};
    use crate::rng::SplitMix64;
    use crate::robot::{clamp_joints, rot_z, JointState};
    use approx::assert_relative_eq;
    use nalgebra::Rotation3;

    fn random_rotation(rng: &mut SplitMix64) -> Matrix3<f64> {
        Rotation3::from_euler_angles(3.0 * rng.next_signed(), 1.5 * rng.next_signed(), 3.0 * rng.next_signed()).into_inner()
    }

    fn zero_state(geometry: &RobotGeometry) -> WorldState {
        let joints = JointState { angles: clamp_joints(geometry, &[0.0; 18]) };
        WorldState {
            body_position: Vector3::zeros(),
            body_rotation: Matrix3::identity(),
            joints,
            contacts: [false, true, false, true, true, false],
            prev_body_x: 0.0,
            step_index: 0,
            terminated: false,
        }
    }

    #[test]
    fn dimensions_from_block_arithmetic() {
        assert_eq!(LOCAL_OBS_DIM, 42);
        assert_eq!(CENTRAL_OBS_DIM, 84);
    }

    #[test]
    fn ring_topology() {
        let t = NeighborTopology::default();
        t.validate().unwrap();
        assert_eq!(t.neighbors(LegId::ML), (LegId::FL, LegId::HL));
        assert_eq!(t.neighbors(LegId::FL), (LegId::FR, LegId::ML));
        assert_eq!(t.neighbors(LegId::HR), (LegId::HL, LegId::MR));
    }

    #[test]
    fn orientation_examples() {
        assert_eq!(encode_orientation(&Matrix3::identity()).unwrap().0, [1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let yaw = encode_orientation(&rot_z(std::f64::consts::FRAC_PI_2)).unwrap().0;
        let want = [0.0, 1.0, 0.0, -1.0, 0.0, 0.0];
        for (g, w) in yaw.iter().zip(want) {
            assert!((g - w).abs() < 1e-15);
        }
        assert_eq!(decode_orientation(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]).unwrap(), Matrix3::identity());
        assert_eq!(decode_orientation(&[2.0, 0.0, 0.0, 0.0, 3.0, 0.0]).unwrap(), Matrix3::identity());
        assert!(encode_orientation(&(Matrix3::identity() * 2.0)).is_err());
        assert!(decode_orientation(&[0.0; 6]).is_err());
        assert!(decode_orientation(&[1.0, 0.0, 0.0, 2.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn orientation_round_trips() {
        let mut rng = SplitMix64::new(1);
        for _ in 0..200 {
            let r = random_rotation(&mut rng);
            let back = decode_orientation(&encode_orientation(&r).unwrap().0).unwrap();
            assert!((back - r).amax() < 1e-12);
            let v = encode_orientation(&r).unwrap();
            let again = encode_orientation(&decode_orientation(&v.0).unwrap()).unwrap();
            for (a, b) in again.0.iter().zip(v.0) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn noisy_encoding_decodes_close() {
        let mut rng = SplitMix64::new(2);
        for _ in 0..200 {
            let r = random_rotation(&mut rng);
            let mut v = encode_orientation(&r).unwrap().0;
            for x in v.iter_mut() {
                *x += 1e-3 * rng.next_signed();
            }
            let d = decode_orientation(&v).unwrap();
            assert!((d.transpose() * d - Matrix3::identity()).amax() < 1e-12);
            assert!((d.determinant() - 1.0).abs() < 1e-12);
            assert!((d - r).amax() < 2e-3, "{}", (d - r).amax());
        }
    }

    #[test]
    fn zero_state_blocks() {
        let g = RobotGeometry::default();
        let state = zero_state(&g);
        let last = [[0.0; 3]; 6];
        let topo = NeighborTopology::default();
        let obs = build_local_obs(&g, &state, LegId::ML, &last, &topo).unwrap();
        let fk = fk_leg(&g, LegId::ML, state.joints.leg(LegId::ML)).unwrap();
        assert_relative_eq!(obs[6], fk[2].x);
        assert_eq!(obs[9], 1.0);
        assert_eq!(obs[10 + 9], 0.0); // FL contact
        assert_eq!(&obs[36..], &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let central = build_central_obs(&g, &state, &last).unwrap();
        assert_eq!(&central[78..], &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        assert_eq!(central[3 * 13 + 9], 1.0); // FR contact
    }

    fn random_state(env: &Environment, rng: &mut SplitMix64) -> (WorldState, LastActions) {
        let raw: [f64; 18] = std::array::from_fn(|_| 2.0 * rng.next_signed());
        let joints = JointState { angles: clamp_joints(&env.geometry, &raw) };
        let state = WorldState {
            body_position: Vector3::new(rng.next_signed(), rng.next_signed(), 0.1),
            body_rotation: random_rotation(rng),
            joints,
            contacts: std::array::from_fn(|_| rng.next_f64() < 0.5),
            prev_body_x: 0.0,
            step_index: 0,
            terminated: false,
        };
        let last = std::array::from_fn(|_| [rng.next_signed(), rng.next_signed(), rng.next_signed()]);
        (state, last)
    }

    #[test]
    fn layout_matches_index_oracle() {
        let env = Environment::flat(EnvConfig::default()).unwrap();
        let g = &env.geometry;
        let topo = NeighborTopology::default();
        let mut rng = SplitMix64::new(3);
        for _ in 0..50 {
            let (state, last) = random_state(&env, &mut rng);
            let central = build_central_obs(g, &state, &last).unwrap();
            let names = describe_central();
            for (i, name) in names.iter().enumerate() {
                assert_eq!(central[i], oracle_value(g, &state, &last, name), "{name}");
            }
            for leg in LegId::ALL {
                let local = build_local_obs(g, &state, leg, &last, &topo).unwrap();
                for (i, name) in describe_local(leg, &topo).iter().enumerate() {
                    assert_eq!(local[i], oracle_value(g, &state, &last, name), "{leg} {name}");
                }
            }
        }
    }

    /// Looks a value up by its semantic name, independent of the block layout code.
    fn oracle_value(g: &RobotGeometry, state: &WorldState, last: &LastActions, name: &str) -> f64 {
        let parts: Vec<&str> = name.split('.').collect();
        if parts[0] == "orientation" {
            let col = if parts[1] == "col0" { 0 } else { 1 };
            let row = AXES.iter().position(|a| *a == parts[2]).unwrap();
            return state.body_rotation[(row, col)];
        }
        let leg: LegId = parts[0].parse().unwrap();
        match parts[1] {
            "contact" => f64::from(u8::from(state.contacts[leg.index()])),
            "last_action" => last[leg.index()][JOINTS.iter().position(|j| *j == parts[2]).unwrap()],
            seg => {
                let k = SEGMENTS.iter().position(|s| *s == seg).unwrap();
                let a = AXES.iter().position(|s| *s == parts[2]).unwrap();
                fk_leg(g, leg, state.joints.leg(leg)).unwrap()[k][a]
            }
        }
    }

    #[test]
    fn locality_under_non_neighbour_perturbation() {
        let env = Environment::flat(EnvConfig::default()).unwrap();
        let g = &env.geometry;
        let topo = NeighborTopology::default();
        let mut rng = SplitMix64::new(4);
        for _ in 0..100 {
            let (state, last) = random_state(&env, &mut rng);
            for leg in LegId::ALL {
                let before = build_local_obs(g, &state, leg, &last, &topo).unwrap();
                let mut other = state.clone();
                let mut other_last = last;
                for far in LegId::ALL.into_iter().filter(|&l| l != leg && !topo.are_neighbors(leg, l)) {
                    let q = [rng.next_signed(), rng.next_signed(), -0.5 * rng.next_f64()];
                    other.joints.set_leg(far, q);
                    other.contacts[far.index()] = !other.contacts[far.index()];
                    other_last[far.index()] = [rng.next_signed(); 3];
                }
                let after = build_local_obs(g, &other, leg, &other_last, &topo).unwrap();
                assert_eq!(before, after);
            }
        }
    }

    #[test]
    fn describe_tables() {
        let topo = NeighborTopology::default();
        let local = describe_local(LegId::ML, &topo);
        assert_eq!(local.len(), 42);
        assert_eq!(local[0], "ML.coxa_end.x");
        assert_eq!(local[10], "FL.coxa_end.x");
        assert!(local[36..].iter().all(|n| n.starts_with("orientation.")));
        let central = describe_central();
        assert_eq!(central.len(), 84);
        assert!(central[78..].iter().all(|n| n.starts_with("orientation.")));
    }
}
