//! The search-and-rescue foraging world: arena, targets, zones, robot
//! kinematics and sensing, the range-limited medium and the scheduler.
//!
//! Each iteration runs these phases for every robot in id order: sense,
//! deliver last iteration's responses (with eavesdropping), modality
//! processing, one tick of the robot tree, motion, pickup and deposit,
//! delivery of this iteration's queries, timer bookkeeping, and metrics.

mod config;
mod world;

pub use config::{ConfigError, Obstacle, RobotParams, RosterEntry, TargetCounts, WorldConfig};
pub use world::{
    ray_direction, repulsion_vector, run_trial, Body, RobotView, Snapshot, Target, TargetStatus, World,
};
