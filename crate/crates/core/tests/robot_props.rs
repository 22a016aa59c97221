use std::f64::consts::{PI, TAU};

use grasp_ebm::geometry::{compose, point_in_polygon, Point2, Se2Pose};
use grasp_ebm::robot::{
    arm_occupancy, canonical_gripper_occupancy, forward_kinematics, gripper_occupancy, inverse_kinematics,
    jaw_channel, ArmConfig, ArmGeometry, GripperGeometry,
};
use proptest::prelude::*;

/// Forward kinematics as a product of homogeneous link transforms.
fn fk_by_chain(arm: &ArmGeometry, q: [f64; 3]) -> Se2Pose {
    let mut pose = Se2Pose::new(arm.base.x, arm.base.y, 0.0);
    for (qi, len) in q.iter().zip(arm.link_lengths) {
        pose = compose(&pose, &Se2Pose::new(0.0, 0.0, *qi));
        pose = compose(&pose, &Se2Pose::new(len, 0.0, 0.0));
    }
    pose
}

fn angle_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

fn joint_strategy() -> impl Strategy<Value = [f64; 3]> {
    [-PI..PI, -PI..PI, -PI..PI]
}

proptest! {
    #[test]
    fn fk_matches_transform_chain(q in joint_strategy()) {
        let arm = ArmGeometry::default();
        let a = forward_kinematics(&arm, &ArmConfig { q });
        let b = fk_by_chain(&arm, q);
        prop_assert!((a.x() - b.x()).abs() < 1e-12 && (a.y() - b.y()).abs() < 1e-12);
        prop_assert!(angle_gap(a.theta(), b.theta()) < 1e-12);
    }

    #[test]
    fn every_ik_branch_reaches_the_target(q in joint_strategy(), bx in -0.2..0.2f64, by in -0.2..0.2f64) {
        let arm = ArmGeometry { base: Point2::new(bx, by), ..ArmGeometry::default() };
        let target = forward_kinematics(&arm, &ArmConfig { q });
        let sols = inverse_kinematics(&arm, &target);
        prop_assert!(!sols.is_empty());
        prop_assert!(sols.len() <= 2);
        for s in &sols {
            prop_assert!(arm.within_limits(s));
            let t = forward_kinematics(&arm, s);
            prop_assert!((t.x() - target.x()).abs() < 1e-9 && (t.y() - target.y()).abs() < 1e-9);
            prop_assert!(angle_gap(t.theta(), target.theta()) < 1e-9);
        }
        // the generating configuration is one of the branches
        prop_assert!(sols.iter().any(|s| (0..3).all(|i| angle_gap(s.q[i], q[i]) < 1e-6)));
    }

    #[test]
    fn gripper_occupancy_follows_the_tool(x in -1.0..1.0f64, y in -1.0..1.0f64, t in 0.0..TAU, w in 0.0..0.10f64) {
        let grip = GripperGeometry::default();
        let pose = Se2Pose::new(x, y, t);
        let canon = canonical_gripper_occupancy(&grip, w).unwrap();
        let placed = gripper_occupancy(&grip, &pose, w).unwrap();
        for (c, p) in canon.iter().zip(&placed) {
            for (u, v) in c.vertices().iter().zip(p.vertices()) {
                let m = pose.apply(*u);
                prop_assert!((m.x - v.x).abs() < 1e-12 && (m.y - v.y).abs() < 1e-12);
            }
        }
        // the jaw channel is open: its centre lies in no finger
        let chan = jaw_channel(&grip, w.max(1e-3)).unwrap();
        let mid = chan.centroid();
        prop_assert!(!canon[0..2].iter().any(|f| point_in_polygon(mid, f)));
    }

    #[test]
    fn unreachable_targets_have_no_solution(r in 0.78..3.0f64, a in 0.0..TAU, h in 0.0..TAU) {
        // wrist beyond l1 + l2 whatever the heading: place the tool far away
        let arm = ArmGeometry::default();
        let target = Se2Pose::new((r + 0.12) * a.cos(), (r + 0.12) * a.sin(), h);
        prop_assert!(inverse_kinematics(&arm, &target).is_empty());
    }
}

#[test]
fn ik_round_trip_thousand_targets() {
    use rand::{Rng, SeedableRng};
    let arm = ArmGeometry::default();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..1_000 {
        let q = [rng.random_range(-PI..PI), rng.random_range(-PI..PI), rng.random_range(-PI..PI)];
        let target = forward_kinematics(&arm, &ArmConfig { q });
        for s in inverse_kinematics(&arm, &target) {
            let t = forward_kinematics(&arm, &s);
            worst = worst.max((t.x() - target.x()).hypot(t.y() - target.y()));
        }
    }
    assert!(worst < 1e-9, "worst position error {worst}");
}

#[test]
fn arm_links_chain_end_to_end() {
    let arm = ArmGeometry::default();
    let cfg = ArmConfig::new(0.4, -0.9, 0.3);
    let links = arm_occupancy(&arm, &cfg);
    let tool = forward_kinematics(&arm, &cfg);
    // the last link's far edge midpoint is the tool point
    let v = links[2].vertices();
    let far: Vec<_> = v
        .iter()
        .filter(|p| (p.x - tool.x()).hypot(p.y - tool.y()) < arm.link_width)
        .collect();
    assert_eq!(far.len(), 2);
    let mx = 0.5 * (far[0].x + far[1].x);
    let my = 0.5 * (far[0].y + far[1].y);
    assert!((mx - tool.x()).abs() < 1e-12 && (my - tool.y()).abs() < 1e-12);
}
