//! Planar three-link arm with a parallel-jaw gripper.
//!
//! Together with [`crate::geometry`] this is the exact feasibility oracle:
//! a grasp is feasible at an object pose when the transformed tool pose has
//! at least one inverse-kinematics branch whose arm and gripper bodies are
//! clear of the object and of every static obstacle.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    compose, polygons_intersect, transform_polygon, wrap_to_pi, Point2, Polygon, Se2Pose,
};
use crate::scene::{GraspCandidate, WorldModel};

/// Tolerance on the wrist distance at which the two elbow branches merge.
const ELBOW_DEGENERACY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmGeometry {
    pub base: Point2,
    pub link_lengths: [f64; 3],
    pub link_width: f64,
    pub joint_limits: [(f64, f64); 3],
}

impl Default for ArmGeometry {
    fn default() -> Self {
        Self {
            base: Point2::new(0.0, 0.0),
            link_lengths: [0.35, 0.30, 0.12],
            link_width: 0.04,
            joint_limits: [(-PI, PI); 3],
        }
    }
}

impl ArmGeometry {
    pub fn validate(&self) -> Result<()> {
        if !self.link_lengths.iter().chain([&self.link_width]).all(|&l| l > 0.0) {
            return Err(Error::invalid("arm lengths must be strictly positive"));
        }
        if !self.joint_limits.iter().all(|&(lo, hi)| lo <= hi) {
            return Err(Error::invalid("joint limit interval is empty"));
        }
        Ok(())
    }

    pub fn reach(&self) -> f64 {
        self.link_lengths.iter().sum()
    }

    pub fn within_limits(&self, cfg: &ArmConfig) -> bool {
        cfg.q
            .iter()
            .zip(&self.joint_limits)
            .all(|(&q, &(lo, hi))| q >= lo && q <= hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GripperGeometry {
    pub finger_length: f64,
    pub finger_thickness: f64,
    pub palm_depth: f64,
    pub max_width: f64,
}

impl Default for GripperGeometry {
    fn default() -> Self {
        Self {
            finger_length: 0.06,
            finger_thickness: 0.012,
            palm_depth: 0.03,
            max_width: 0.10,
        }
    }
}

impl GripperGeometry {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.finger_length,
            self.finger_thickness,
            self.palm_depth,
            self.max_width,
        ];
        if !all.iter().all(|&v| v > 0.0) {
            return Err(Error::invalid("gripper dimensions must be strictly positive"));
        }
        Ok(())
    }

    /// Opening used for the collision check: grasp width plus closing travel,
    /// capped at the maximum opening.
    pub fn pre_contact_opening(&self, width: f64, clearance: f64) -> f64 {
        (width + clearance).min(self.max_width)
    }
}

/// Joint angles, radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmConfig {
    pub q: [f64; 3],
}

impl ArmConfig {
    pub fn new(q1: f64, q2: f64, q3: f64) -> Self {
        Self { q: [q1, q2, q3] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeasibilityReason {
    Ok,
    NoIk,
    Collision,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeasibilityLabel {
    pub feasible: bool,
    pub reason: FeasibilityReason,
}

impl FeasibilityLabel {
    pub const OK: Self = Self {
        feasible: true,
        reason: FeasibilityReason::Ok,
    };
    pub const NO_IK: Self = Self {
        feasible: false,
        reason: FeasibilityReason::NoIk,
    };
    pub const COLLISION: Self = Self {
        feasible: false,
        reason: FeasibilityReason::Collision,
    };
}

/// Tool (palm-centre) pose for a joint configuration.
pub fn forward_kinematics(arm: &ArmGeometry, cfg: &ArmConfig) -> Se2Pose {
    let [l1, l2, l3] = arm.link_lengths;
    let a1 = cfg.q[0];
    let a2 = a1 + cfg.q[1];
    let a3 = a2 + cfg.q[2];
    let x = arm.base.x + l1 * a1.cos() + l2 * a2.cos() + l3 * a3.cos();
    let y = arm.base.y + l1 * a1.sin() + l2 * a2.sin() + l3 * a3.sin();
    Se2Pose::new(x, y, a3)
}

/// Frames at the start of each link (joint frames), ending with the tool frame.
pub fn joint_frames(arm: &ArmGeometry, cfg: &ArmConfig) -> [Se2Pose; 4] {
    let [l1, l2, l3] = arm.link_lengths;
    let b = arm.base;
    let a1 = cfg.q[0];
    let a2 = a1 + cfg.q[1];
    let a3 = a2 + cfg.q[2];
    let p1 = Point2::new(b.x + l1 * a1.cos(), b.y + l1 * a1.sin());
    let p2 = Point2::new(p1.x + l2 * a2.cos(), p1.y + l2 * a2.sin());
    let p3 = Point2::new(p2.x + l3 * a3.cos(), p2.y + l3 * a3.sin());
    [
        Se2Pose::new(b.x, b.y, a1),
        Se2Pose::new(p1.x, p1.y, a2),
        Se2Pose::new(p2.x, p2.y, a3),
        Se2Pose::new(p3.x, p3.y, a3),
    ]
}

/// All joint-limit-respecting solutions placing the tool at `target`.
///
/// The third link is fixed by the target heading, so the wrist point is
/// known and the first two joints follow from the two-link law of cosines.
/// Elbow-down is returned before elbow-up.
pub fn inverse_kinematics(arm: &ArmGeometry, target: &Se2Pose) -> Vec<ArmConfig> {
    let [l1, l2, l3] = arm.link_lengths;
    let phi = target.theta();
    let wx = target.x() - l3 * phi.cos() - arm.base.x;
    let wy = target.y() - l3 * phi.sin() - arm.base.y;
    let r = wx.hypot(wy);
    let outer = l1 + l2;
    let inner = (l1 - l2).abs();
    if r > outer + ELBOW_DEGENERACY_TOL || r < inner - ELBOW_DEGENERACY_TOL {
        return Vec::new();
    }

    let degenerate = (r - outer).abs() <= ELBOW_DEGENERACY_TOL
        || (r - inner).abs() <= ELBOW_DEGENERACY_TOL;
    let c2 = ((r * r - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)).clamp(-1.0, 1.0);
    let q2_abs = c2.acos();
    let branches: &[f64] = if degenerate { &[1.0] } else { &[1.0, -1.0] };

    let mut out = Vec::with_capacity(branches.len());
    for &sign in branches {
        let q2 = sign * q2_abs;
        let q1 = wy.atan2(wx) - (l2 * q2.sin()).atan2(l1 + l2 * q2.cos());
        let q3 = phi - q1 - q2;
        let cfg = ArmConfig::new(wrap_to_pi(q1), wrap_to_pi(q2), wrap_to_pi(q3));
        if arm.within_limits(&cfg) {
            out.push(cfg);
        }
    }
    out
}

/// Finger and palm rectangles in the tool frame for a given opening.
///
/// The tool x-axis is the approach direction; fingers extend forward from
/// the palm face at `x = 0` and close along y.
pub fn canonical_gripper_occupancy(grip: &GripperGeometry, width: f64) -> Result<[Polygon; 3]> {
    if !(0.0..=grip.max_width).contains(&width) {
        return Err(Error::invalid(format!(
            "gripper opening {width} outside [0, {}]",
            grip.max_width
        )));
    }
    let half = 0.5 * width;
    let t = grip.finger_thickness;
    let fl = grip.finger_length;
    let palm_half = 0.5 * grip.max_width + t;
    Ok([
        Polygon::rect(0.0, half, fl, half + t)?,
        Polygon::rect(0.0, -half - t, fl, -half)?,
        Polygon::rect(-grip.palm_depth, -palm_half, 0.0, palm_half)?,
    ])
}

/// World-frame finger and palm rectangles.
pub fn gripper_occupancy(
    grip: &GripperGeometry,
    tool_pose: &Se2Pose,
    width: f64,
) -> Result<[Polygon; 3]> {
    let canon = canonical_gripper_occupancy(grip, width)?;
    Ok(canon.map(|p| transform_polygon(&p, tool_pose)))
}

/// Free region between the fingers in the tool frame. The fingers may
/// straddle the object here; the region is never part of the occupancy.
pub fn jaw_channel(grip: &GripperGeometry, width: f64) -> Result<Polygon> {
    let half = 0.5 * width;
    Polygon::rect(0.0, -half, grip.finger_length, half)
}

/// Link rectangles placed by the kinematic chain.
pub fn arm_occupancy(arm: &ArmGeometry, cfg: &ArmConfig) -> [Polygon; 3] {
    let frames = joint_frames(arm, cfg);
    let hw = 0.5 * arm.link_width;
    std::array::from_fn(|i| {
        let link = Polygon::rect(0.0, -hw, arm.link_lengths[i], hw)
            .expect("link dimensions validated positive");
        transform_polygon(&link, &frames[i])
    })
}

/// Oracle for one grasp at one object pose.
pub fn check_feasible(
    world: &WorldModel,
    object: &Polygon,
    object_pose: &Se2Pose,
    grasp: &GraspCandidate,
) -> FeasibilityLabel {
    let placed = transform_polygon(object, object_pose);
    check_feasible_placed(world, &placed, object_pose, grasp)
}

/// As [`check_feasible`] with the object outline already in the world frame.
pub(crate) fn check_feasible_placed(
    world: &WorldModel,
    placed_object: &Polygon,
    object_pose: &Se2Pose,
    grasp: &GraspCandidate,
) -> FeasibilityLabel {
    let tool = compose(object_pose, &grasp.pose);
    let branches = inverse_kinematics(&world.arm, &tool);
    if branches.is_empty() {
        return FeasibilityLabel::NO_IK;
    }

    let opening = world
        .gripper
        .pre_contact_opening(grasp.width, world.approach_clearance);
    let Ok(gripper) = gripper_occupancy(&world.gripper, &tool, opening) else {
        return FeasibilityLabel::COLLISION;
    };
    let blocked = |body: &Polygon| {
        polygons_intersect(body, placed_object)
            || world.obstacles.iter().any(|o| polygons_intersect(body, o))
    };
    // Gripper bodies are identical across IK branches.
    if gripper.iter().any(blocked) {
        return FeasibilityLabel::COLLISION;
    }
    if !world.check_arm_links {
        return FeasibilityLabel::OK;
    }
    for cfg in &branches {
        let links = arm_occupancy(&world.arm, cfg);
        if !links.iter().any(blocked) {
            return FeasibilityLabel::OK;
        }
    }
    FeasibilityLabel::COLLISION
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_arm() -> ArmGeometry {
        ArmGeometry {
            link_lengths: [0.3, 0.25, 0.1],
            ..ArmGeometry::default()
        }
    }

    fn close(a: &Se2Pose, b: &Se2Pose, tol: f64) -> bool {
        let (dp, da) = a.distance(b);
        dp < tol && da < tol
    }

    #[test]
    fn straight_arm_fk() {
        let arm = small_arm();
        let p = forward_kinematics(&arm, &ArmConfig::new(0.0, 0.0, 0.0));
        assert!(close(&p, &Se2Pose::new(0.65, 0.0, 0.0), 1e-12));
        let p = forward_kinematics(&arm, &ArmConfig::new(PI / 2.0, 0.0, 0.0));
        assert!(close(&p, &Se2Pose::new(0.0, 0.65, PI / 2.0), 1e-12));
    }

    #[test]
    fn ik_round_trip_straight_arm_is_single_branch() {
        let arm = small_arm();
        let target = forward_kinematics(&arm, &ArmConfig::new(0.0, 0.0, 0.0));
        let sols = inverse_kinematics(&arm, &target);
        assert_eq!(sols.len(), 1);
        assert!(sols[0].q.iter().all(|q| q.abs() < 1e-7));
    }

    #[test]
    fn ik_beyond_reach_is_empty() {
        let arm = small_arm();
        let d = arm.reach() + 0.1;
        assert!(inverse_kinematics(&arm, &Se2Pose::new(d, 0.0, 0.0)).is_empty());
    }

    #[test]
    fn ik_respects_joint_limits() {
        let mut arm = small_arm();
        let target = forward_kinematics(&arm, &ArmConfig::new(0.3, 0.8, -0.4));
        assert_eq!(inverse_kinematics(&arm, &target).len(), 2);
        arm.joint_limits[1] = (0.0, PI);
        let sols = inverse_kinematics(&arm, &target);
        assert_eq!(sols.len(), 1);
        assert!(sols[0].q[1] > 0.0);
    }

    #[test]
    fn gripper_inner_faces_at_half_width() {
        let g = GripperGeometry::default();
        let occ = gripper_occupancy(&g, &Se2Pose::identity(), g.max_width).unwrap();
        let inner_left = occ[0].vertices().iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
        let inner_right = occ[1].vertices().iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
        assert!((inner_left - g.max_width / 2.0).abs() < 1e-15);
        assert!((inner_right + g.max_width / 2.0).abs() < 1e-15);
    }

    #[test]
    fn gripper_width_out_of_range_rejected() {
        let g = GripperGeometry::default();
        assert!(gripper_occupancy(&g, &Se2Pose::identity(), g.max_width + 1e-6).is_err());
        assert!(gripper_occupancy(&g, &Se2Pose::identity(), -1e-6).is_err());
    }

    #[test]
    fn gripper_rotated_pi_is_point_reflection() {
        let g = GripperGeometry::default();
        let a = gripper_occupancy(&g, &Se2Pose::identity(), 0.05).unwrap();
        let b = gripper_occupancy(&g, &Se2Pose::new(0.0, 0.0, PI), 0.05).unwrap();
        for (pa, pb) in a.iter().zip(&b) {
            for (va, vb) in pa.vertices().iter().zip(pb.vertices()) {
                assert!((va.x + vb.x).abs() < 1e-12 && (va.y + vb.y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn straight_arm_occupancy_spans_reach() {
        let arm = small_arm();
        let occ = arm_occupancy(&arm, &ArmConfig::new(0.0, 0.0, 0.0));
        let xs: Vec<f64> = occ.iter().flat_map(|p| p.vertices().iter().map(|v| v.x)).collect();
        let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(lo.abs() < 1e-12 && (hi - 0.65).abs() < 1e-12);
        let rot = arm_occupancy(&arm, &ArmConfig::new(PI / 2.0, 0.0, 0.0));
        for (a, b) in occ.iter().zip(&rot) {
            for (va, vb) in a.vertices().iter().zip(b.vertices()) {
                assert!((va.rotate(PI / 2.0).x - vb.x).abs() < 1e-12);
                assert!((va.rotate(PI / 2.0).y - vb.y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn jaw_channel_is_between_fingers() {
        let g = GripperGeometry::default();
        let ch = jaw_channel(&g, 0.05).unwrap();
        let occ = canonical_gripper_occupancy(&g, 0.05).unwrap();
        assert!((ch.area() - 0.05 * g.finger_length).abs() < 1e-15);
        // channel interior points are never inside a gripper body
        for i in 1..20 {
            for j in 1..20 {
                let p = Point2::new(g.finger_length * i as f64 / 20.0, -0.025 + 0.05 * j as f64 / 20.0);
                assert!(crate::geometry::point_in_polygon(p, &ch));
                assert!(occ.iter().all(|b| !crate::geometry::point_in_polygon(p, b)));
            }
        }
    }
}
