//! PhantomX-like hexapod: static geometry and forward kinematics.
//!
//! Frames: body x forward, y left, z up. Each leg has a coxa frame at its
//! mount point, yawed by the mount angle. The coxa joint is a yaw about the
//! mount z axis; femur and tibia are pitches in the resulting vertical plane,
//! positive angles lifting the distal segment.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_4;
use std::fmt;

use crate::error::{Error, Result};

pub const NUM_LEGS: usize = 6;
pub const JOINTS_PER_LEG: usize = 3;
pub const NUM_JOINTS: usize = NUM_LEGS * JOINTS_PER_LEG;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LegId {
    FL,
    ML,
    HL,
    FR,
    MR,
    HR,
}

impl LegId {
    pub const ALL: [LegId; NUM_LEGS] = [LegId::FL, LegId::ML, LegId::HL, LegId::FR, LegId::MR, LegId::HR];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<LegId> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            LegId::FL => "FL",
            LegId::ML => "ML",
            LegId::HL => "HL",
            LegId::FR => "FR",
            LegId::MR => "MR",
            LegId::HR => "HR",
        }
    }

    pub fn is_left(self) -> bool {
        matches!(self, LegId::FL | LegId::ML | LegId::HL)
    }

    /// The leg in the same position on the other side.
    pub fn mirror(self) -> LegId {
        match self {
            LegId::FL => LegId::FR,
            LegId::ML => LegId::MR,
            LegId::HL => LegId::HR,
            LegId::FR => LegId::FL,
            LegId::MR => LegId::ML,
            LegId::HR => LegId::HL,
        }
    }

    /// Index of this leg's `joint`-th angle in an 18-vector (leg-major, joint-minor).
    pub fn joint_index(self, joint: usize) -> usize {
        self.index() * JOINTS_PER_LEG + joint
    }
}

impl fmt::Display for LegId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for LegId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LegId::ALL
            .iter()
            .copied()
            .find(|l| l.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::domain(format!("unknown leg `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointLimit {
    pub lo: f64,
    pub hi: f64,
}

impl JointLimit {
    pub fn clamp(&self, q: f64) -> f64 {
        q.clamp(self.lo, self.hi)
    }

    pub fn contains(&self, q: f64) -> bool {
        q >= self.lo && q <= self.hi
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    /// Affine map from a normalized command in `[-1, 1]` onto `[lo, hi]`.
    pub fn from_normalized(&self, a: f64) -> f64 {
        self.lo + 0.5 * (a + 1.0) * (self.hi - self.lo)
    }
}

/// Coxa mount: offset in the body plane and yaw of the coxa frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LegMount {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotGeometry {
    pub body_length: f64,
    pub body_width: f64,
    /// Indexed by [`LegId::index`].
    pub mounts: [LegMount; NUM_LEGS],
    pub coxa_length: f64,
    pub femur_length: f64,
    pub tibia_length: f64,
    /// Coxa, femur, tibia.
    pub joint_limits: [JointLimit; JOINTS_PER_LEG],
    /// rad/s
    pub max_joint_speed: f64,
}

impl Default for RobotGeometry {
    fn default() -> Self {
        let (hx, hy) = (0.13, 0.10);
        let side = std::f64::consts::FRAC_PI_2;
        Self {
            body_length: 0.26,
            body_width: 0.20,
            mounts: [
                LegMount { x: hx, y: hy, yaw: FRAC_PI_4 },
                LegMount { x: 0.0, y: hy, yaw: side },
                LegMount { x: -hx, y: hy, yaw: 3.0 * FRAC_PI_4 },
                LegMount { x: hx, y: -hy, yaw: -FRAC_PI_4 },
                LegMount { x: 0.0, y: -hy, yaw: -side },
                LegMount { x: -hx, y: -hy, yaw: -3.0 * FRAC_PI_4 },
            ],
            coxa_length: 0.052,
            femur_length: 0.066,
            tibia_length: 0.133,
            joint_limits: [
                JointLimit { lo: -1.0, hi: 1.0 },
                JointLimit { lo: -1.0, hi: 1.2 },
                JointLimit { lo: -1.6, hi: 0.2 },
            ],
            max_joint_speed: 5.0,
        }
    }
}

impl RobotGeometry {
    pub fn validate(&self) -> Result<()> {
        let finite_pos = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::domain(format!("{name} must be positive and finite, got {v}")))
            }
        };
        finite_pos("body_length", self.body_length)?;
        finite_pos("body_width", self.body_width)?;
        finite_pos("coxa_length", self.coxa_length)?;
        finite_pos("femur_length", self.femur_length)?;
        finite_pos("tibia_length", self.tibia_length)?;
        finite_pos("max_joint_speed", self.max_joint_speed)?;
        for (j, lim) in self.joint_limits.iter().enumerate() {
            if !(lim.lo.is_finite() && lim.hi.is_finite() && lim.lo < lim.hi) {
                return Err(Error::domain(format!("joint_limits[{j}]: need lo < hi, got [{}, {}]", lim.lo, lim.hi)));
            }
        }
        for leg in [LegId::FL, LegId::ML, LegId::HL] {
            let l = self.mounts[leg.index()];
            let r = self.mounts[leg.mirror().index()];
            let tol = 1e-12;
            if (l.x - r.x).abs() > tol || (l.y + r.y).abs() > tol || (l.yaw + r.yaw).abs() > tol {
                return Err(Error::domain(format!("mounts of {leg} and {} are not mirror-symmetric", leg.mirror())));
            }
        }
        Ok(())
    }

    pub fn total_leg_length(&self) -> f64 {
        self.coxa_length + self.femur_length + self.tibia_length
    }

    /// Per-leg joint angles at the center of every joint range.
    pub fn neutral_leg(&self) -> [f64; JOINTS_PER_LEG] {
        [
            self.joint_limits[0].mid(),
            self.joint_limits[1].mid(),
            self.joint_limits[2].mid(),
        ]
    }

    pub fn neutral_joints(&self) -> JointState {
        let leg = self.neutral_leg();
        let mut angles = [0.0; NUM_JOINTS];
        for chunk in angles.chunks_exact_mut(JOINTS_PER_LEG) {
            chunk.copy_from_slice(&leg);
        }
        JointState { angles }
    }
}

/// 18 joint angles, leg-major in [`LegId`] order, joint-minor (coxa, femur, tibia).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointState {
    pub angles: [f64; NUM_JOINTS],
}

impl JointState {
    pub fn leg(&self, leg: LegId) -> [f64; JOINTS_PER_LEG] {
        let i = leg.joint_index(0);
        [self.angles[i], self.angles[i + 1], self.angles[i + 2]]
    }

    pub fn set_leg(&mut self, leg: LegId, q: [f64; JOINTS_PER_LEG]) {
        let i = leg.joint_index(0);
        self.angles[i..i + JOINTS_PER_LEG].copy_from_slice(&q);
    }

    pub fn within_limits(&self, geometry: &RobotGeometry) -> bool {
        self.angles
            .iter()
            .enumerate()
            .all(|(i, &q)| geometry.joint_limits[i % JOINTS_PER_LEG].contains(q))
    }
}

/// Rigid body pose: `world = rotation * body + position`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    pub position: Vector3<f64>,
    pub rotation: Matrix3<f64>,
}

impl Pose {
    pub fn identity() -> Self {
        Self { position: Vector3::zeros(), rotation: Matrix3::identity() }
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.position
    }

    pub fn compose(&self, inner: &Pose) -> Pose {
        Pose {
            position: self.rotation * inner.position + self.position,
            rotation: self.rotation * inner.rotation,
        }
    }
}

/// Infinity-norm of `R^T R - I`.
pub fn orthonormality_error(r: &Matrix3<f64>) -> f64 {
    (r.transpose() * r - Matrix3::identity()).abs().max()
}

pub(crate) fn check_rotation(r: &Matrix3<f64>) -> Result<()> {
    if !r.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("rotation"));
    }
    let err = orthonormality_error(r);
    if err > 1e-6 || r.determinant() <= 0.0 {
        return Err(Error::domain(format!(
            "rotation is not proper orthonormal (|R^T R - I| = {err:e}, det = {})",
            r.determinant()
        )));
    }
    Ok(())
}

/// Segment endpoints in the coxa (leg) frame: coxa end, femur end, foot.
pub fn fk_leg_local(geometry: &RobotGeometry, q: [f64; JOINTS_PER_LEG]) -> [Vector3<f64>; 3] {
    chain(geometry, 0.0, Vector3::zeros(), q)
}

/// Segment endpoints of `leg` in the body frame: coxa end, femur end, foot.
pub fn fk_leg(geometry: &RobotGeometry, leg: LegId, q: [f64; JOINTS_PER_LEG]) -> Result<[Vector3<f64>; 3]> {
    for (j, (&angle, lim)) in q.iter().zip(&geometry.joint_limits).enumerate() {
        if !lim.contains(angle) {
            return Err(Error::domain(format!(
                "{leg} joint {j} angle {angle} outside [{}, {}]",
                lim.lo, lim.hi
            )));
        }
    }
    Ok(fk_leg_unchecked(geometry, leg, q))
}

pub(crate) fn fk_leg_unchecked(geometry: &RobotGeometry, leg: LegId, q: [f64; JOINTS_PER_LEG]) -> [Vector3<f64>; 3] {
    let m = geometry.mounts[leg.index()];
    chain(geometry, m.yaw, Vector3::new(m.x, m.y, 0.0), q)
}

fn chain(geometry: &RobotGeometry, mount_yaw: f64, origin: Vector3<f64>, q: [f64; 3]) -> [Vector3<f64>; 3] {
    let yaw = mount_yaw + q[0];
    let radial = Vector3::new(yaw.cos(), yaw.sin(), 0.0);
    let up = Vector3::z();
    let coxa_end = origin + geometry.coxa_length * radial;
    let femur_end = coxa_end + geometry.femur_length * (q[1].cos() * radial + q[1].sin() * up);
    let knee = q[1] + q[2];
    let foot = femur_end + geometry.tibia_length * (knee.cos() * radial + knee.sin() * up);
    [coxa_end, femur_end, foot]
}

/// World-frame kinematics of the whole robot.
#[derive(Clone, Debug, PartialEq)]
pub struct RobotPoints {
    /// `segments[leg][k]`: coxa end, femur end, foot.
    pub segments: [[Vector3<f64>; 3]; NUM_LEGS],
    pub feet: [Vector3<f64>; NUM_LEGS],
}

pub fn fk_all(geometry: &RobotGeometry, pose: &Pose, joints: &JointState) -> Result<RobotPoints> {
    check_rotation(&pose.rotation)?;
    let mut segments = [[Vector3::zeros(); 3]; NUM_LEGS];
    for leg in LegId::ALL {
        let body = fk_leg(geometry, leg, joints.leg(leg))?;
        segments[leg.index()] = body.map(|p| pose.apply(&p));
    }
    let feet = segments.map(|s| s[2]);
    Ok(RobotPoints { segments, feet })
}

/// Clamps every angle into its joint range.
pub fn clamp_joints(geometry: &RobotGeometry, q: &[f64; NUM_JOINTS]) -> [f64; NUM_JOINTS] {
    let mut out = *q;
    for (i, v) in out.iter_mut().enumerate() {
        *v = geometry.joint_limits[i % JOINTS_PER_LEG].clamp(*v);
    }
    out
}

pub fn rot_z(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::Matrix4;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn origin_geometry() -> RobotGeometry {
        let mut g = RobotGeometry::default();
        g.mounts = [LegMount { x: 0.0, y: 0.0, yaw: 0.0 }; 6];
        g
    }

    /// Homogeneous transform chain: Rz(yaw) -> Tx(coxa) -> Ry(-pitch) -> Tx(femur) -> Ry(-pitch) -> Tx(tibia).
    /// A rotation about -y by `a` takes +x towards +z, matching "positive angle lifts".
    fn oracle_chain(g: &RobotGeometry, mount: LegMount, q: [f64; 3]) -> [Vector3<f64>; 3] {
        let rz = |a: f64| {
            let (s, c) = a.sin_cos();
            Matrix4::new(c, -s, 0.0, 0.0, s, c, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0)
        };
        let lift = |a: f64| {
            let (s, c) = a.sin_cos();
            Matrix4::new(c, 0.0, -s, 0.0, 0.0, 1.0, 0.0, 0.0, s, 0.0, c, 0.0, 0.0, 0.0, 0.0, 1.0)
        };
        let tx = |d: f64| {
            let mut m = Matrix4::identity();
            m[(0, 3)] = d;
            m
        };
        let mut t = Matrix4::identity();
        t[(0, 3)] = mount.x;
        t[(1, 3)] = mount.y;
        let t = t * rz(mount.yaw + q[0]) * tx(g.coxa_length);
        let p0 = t.column(3).xyz();
        let t = t * lift(q[1]) * tx(g.femur_length);
        let p1 = t.column(3).xyz();
        let t = t * lift(q[2]) * tx(g.tibia_length);
        let p2 = t.column(3).xyz();
        [p0, p1, p2]
    }

    #[test]
    fn default_geometry_is_valid() {
        RobotGeometry::default().validate().unwrap();
    }

    #[test]
    fn zero_pose_is_straight_line() {
        let g = origin_geometry();
        let [_, _, foot] = fk_leg(&g, LegId::FL, [0.0; 3]).unwrap();
        assert_relative_eq!(foot, Vector3::new(g.total_leg_length(), 0.0, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn pure_yaw_rotates_the_line() {
        let mut g = origin_geometry();
        g.joint_limits[0] = JointLimit { lo: -2.0, hi: 2.0 };
        let [_, _, foot] = fk_leg(&g, LegId::FL, [FRAC_PI_2, 0.0, 0.0]).unwrap();
        assert_relative_eq!(foot, Vector3::new(0.0, g.total_leg_length(), 0.0), epsilon = 1e-15);
    }

    #[test]
    fn matches_transform_chain_oracle() {
        let g = RobotGeometry::default();
        let q = [0.3, -0.4, -0.1];
        for leg in LegId::ALL {
            let got = fk_leg(&g, leg, q).unwrap();
            let want = oracle_chain(&g, g.mounts[leg.index()], q);
            for k in 0..3 {
                assert_relative_eq!(got[k], want[k], epsilon = 1e-14);
            }
        }
        // The literal example angles (tibia 0.7 is beyond the default tibia range).
        let mut wide = origin_geometry();
        wide.joint_limits[2] = JointLimit { lo: -2.0, hi: 2.0 };
        let got = fk_leg(&wide, LegId::ML, [0.3, -0.4, 0.7]).unwrap();
        let want = oracle_chain(&wide, wide.mounts[1], [0.3, -0.4, 0.7]);
        for k in 0..3 {
            assert_relative_eq!(got[k], want[k], epsilon = 1e-14);
        }
    }

    #[test]
    fn out_of_limit_is_domain_error() {
        let g = RobotGeometry::default();
        assert!(matches!(fk_leg(&g, LegId::HR, [0.0, 0.0, 1.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn fk_all_identity_and_translation() {
        let g = RobotGeometry::default();
        let joints = JointState { angles: [0.0; NUM_JOINTS] };
        let id = fk_all(&g, &Pose::identity(), &joints).unwrap();
        for leg in LegId::ALL {
            let body = fk_leg(&g, leg, [0.0; 3]).unwrap();
            assert_eq!(id.segments[leg.index()], body);
        }
        let shifted = Pose { position: Vector3::new(1.0, 2.0, 3.0), rotation: Matrix3::identity() };
        let moved = fk_all(&g, &shifted, &joints).unwrap();
        for (a, b) in moved.feet.iter().zip(&id.feet) {
            assert_relative_eq!(a - b, Vector3::new(1.0, 2.0, 3.0), epsilon = 1e-15);
        }
    }

    #[test]
    fn fk_all_yawed_pose_matches_oracle() {
        let g = RobotGeometry::default();
        let mut joints = g.neutral_joints();
        joints.set_leg(LegId::MR, [0.4, 0.9, -1.2]);
        joints.set_leg(LegId::FL, [-0.7, -0.3, 0.1]);
        let pose = Pose { position: Vector3::new(0.5, -0.2, 0.1), rotation: rot_z(FRAC_PI_2) };
        let pts = fk_all(&g, &pose, &joints).unwrap();
        for leg in LegId::ALL {
            let local = oracle_chain(&g, g.mounts[leg.index()], joints.leg(leg));
            for k in 0..3 {
                let want = Vector3::new(-local[k].y + 0.5, local[k].x - 0.2, local[k].z + 0.1);
                assert_relative_eq!(pts.segments[leg.index()][k], want, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn fk_all_rejects_bad_rotation() {
        let g = RobotGeometry::default();
        let pose = Pose { position: Vector3::zeros(), rotation: Matrix3::identity() * 1.1 };
        assert!(fk_all(&g, &pose, &g.neutral_joints()).is_err());
        let reflect = Pose { position: Vector3::zeros(), rotation: Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0)) };
        assert!(fk_all(&g, &reflect, &g.neutral_joints()).is_err());
    }

    #[test]
    fn clamp_examples() {
        let g = RobotGeometry::default();
        let inside = g.neutral_joints().angles;
        assert_eq!(clamp_joints(&g, &inside), inside);
        let below: [f64; NUM_JOINTS] = std::array::from_fn(|i| g.joint_limits[i % 3].lo - 1.0);
        let clamped = clamp_joints(&g, &below);
        for (i, v) in clamped.iter().enumerate() {
            assert_eq!(*v, g.joint_limits[i % 3].lo);
        }
        let mixed: [f64; NUM_JOINTS] = std::array::from_fn(|i| [-3.0, 0.05, 4.0][i % 3] * if i % 2 == 0 { 1.0 } else { -1.0 });
        let got = clamp_joints(&g, &mixed);
        for i in 0..NUM_JOINTS {
            let lim = g.joint_limits[i % 3];
            let mut want = mixed[i];
            if want < lim.lo {
                want = lim.lo;
            }
            if want > lim.hi {
                want = lim.hi;
            }
            assert_eq!(got[i], want);
        }
    }

    fn random_rotation(a: f64, b: f64, c: f64) -> Matrix3<f64> {
        nalgebra::Rotation3::from_euler_angles(a, b, c).into_inner()
    }

    proptest! {
        #[test]
        fn mirror_consistency(c in -1.0f64..=1.0, f in -1.0f64..=1.2, t in -1.6f64..=0.2) {
            let g = RobotGeometry::default();
            for leg in [LegId::FL, LegId::ML, LegId::HL] {
                let left = fk_leg(&g, leg, [c, f, t]).unwrap();
                let right = fk_leg(&g, leg.mirror(), [-c, f, t]).unwrap();
                for k in 0..3 {
                    prop_assert!((left[k].x - right[k].x).abs() < 1e-12);
                    prop_assert!((left[k].y + right[k].y).abs() < 1e-12);
                    prop_assert!((left[k].z - right[k].z).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn rigid_equivariance(
            a in -3.0f64..3.0, b in -1.5f64..1.5, c in -3.0f64..3.0,
            x in -5.0f64..5.0, y in -5.0f64..5.0, z in -5.0f64..5.0,
            seed in 0u64..1000,
        ) {
            let g = RobotGeometry::default();
            let mut rng = crate::rng::SplitMix64::new(seed);
            let raw: [f64; NUM_JOINTS] = std::array::from_fn(|_| 2.0 * rng.next_signed());
            let joints = JointState { angles: clamp_joints(&g, &raw) };
            let pose = Pose { position: Vector3::new(x, y, z), rotation: random_rotation(a, b, c) };
            let direct = fk_all(&g, &pose, &joints).unwrap();
            let base = fk_all(&g, &Pose::identity(), &joints).unwrap();
            for leg in 0..NUM_LEGS {
                for k in 0..3 {
                    let want = pose.apply(&base.segments[leg][k]);
                    prop_assert!((direct.segments[leg][k] - want).amax() < 1e-12);
                }
            }
        }

        #[test]
        fn clamp_idempotent(raw in proptest::array::uniform18(-5.0f64..5.0)) {
            let g = RobotGeometry::default();
            let once = clamp_joints(&g, &raw);
            prop_assert_eq!(clamp_joints(&g, &once), once);
            let state = JointState { angles: once };
            prop_assert!(state.within_limits(&g));
        }
    }
}
