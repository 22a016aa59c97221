//! Planar pick-and-place grasp feasibility: geometry, a 3-link arm with a
//! parallel-jaw gripper, an exact IK/collision oracle, and energy-based
//! models that predict grasps shared between two object poses.

pub mod dataset;
pub mod ebm;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod inference;
pub mod nn;
pub mod robot;
pub mod scene;

pub use error::{Error, Result};
