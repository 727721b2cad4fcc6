//! Run metrics.

use serde::{Deserialize, Serialize};

use super::log::{EndReason, RunLog};
use crate::geometry::Pose2;
use crate::world::ObstacleWorld;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Distance between the final repeat position and the taught end point (m).
    pub end_point_distance: f64,
    pub path_completed: bool,
    /// Smallest distance between the robot's edge and an obstacle (m); absent in an empty world.
    pub min_clearance: Option<f64>,
    pub collision: bool,
    /// Wall-clock time per control tick. Only set by a live run.
    pub mean_tick_ms: Option<f64>,
}

pub(crate) fn evaluate_against(repeat: &RunLog, goal: &Pose2) -> Metrics {
    let min_clearance = repeat
        .ticks
        .iter()
        .filter_map(|r| r.clearance)
        .chain(repeat.end.clearance)
        .fold(None, |m: Option<f64>, c| Some(m.map_or(c, |m| m.min(c))));
    Metrics {
        end_point_distance: repeat.end.pose.distance_to(goal),
        path_completed: repeat.end.reason == EndReason::Finished,
        min_clearance,
        collision: repeat.end.reason == EndReason::Collision || min_clearance.is_some_and(|c| c <= 0.0),
        mean_tick_ms: None,
    }
}

/// Metrics of a repeat run against the teach run it repeats.
pub fn evaluate(repeat: &RunLog, teach: &RunLog) -> Metrics {
    evaluate_against(repeat, &teach.final_pose())
}

/// Smallest robot-edge clearance over every logged pose, recomputed from the
/// obstacle geometry.
pub fn sweep_clearance(log: &RunLog, obstacles: &ObstacleWorld, robot_radius: f64) -> Option<f64> {
    if obstacles.is_empty() {
        return None;
    }
    let poses = log.ticks.iter().map(|r| (r.pose, r.time)).chain(std::iter::once((log.end.pose, log.end.time)));
    poses.map(|(p, t)| obstacles.clearance(p.x, p.y, t) - robot_radius).reduce(f64::min)
}
