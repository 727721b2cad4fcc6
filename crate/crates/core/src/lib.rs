//! Visual teach-and-repeat navigation driven by feature flow.

pub mod geometry;
pub mod lidar;
pub mod perception;
pub mod textio;
pub mod world;
pub mod teach;
pub mod tracker;
pub mod planner;
pub mod harness;
