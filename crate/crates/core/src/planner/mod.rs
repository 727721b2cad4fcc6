//! Local planner: collision filtering and goal-alignment scoring over an
//! offline trajectory library.

mod grid;
mod library;

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use grid::{build_grid, GridConfig, OccupancyGrid};
pub use library::{
    generate_library, library_to_string, load_library, parse_library, save_library, CandidateLibrary, LibraryConfig,
    TrajectoryCandidate, LIBRARY_SCHEMA, LIBRARY_VERSION,
};

use crate::geometry::VelocityCommand;

#[derive(Debug, Error)]
pub enum PlannerError {
    #[error("invalid library configuration: {0}")]
    InvalidConfig(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("unsupported library version {found} (expected {LIBRARY_VERSION})")]
    VersionMismatch { found: String },
    #[error("library schema violation: {0}")]
    Schema(String),
}

/// Candidates whose every sample lies in a free cell.
pub fn filter_collisions<'a>(library: &'a CandidateLibrary, grid: &OccupancyGrid) -> Vec<&'a TrajectoryCandidate> {
    library.candidates.iter().filter(|c| c.samples.iter().all(|s| !grid.occupied_at(s.x, s.y))).collect()
}

/// Absolute angle between two bearings, in [0, pi].
pub fn angle_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).abs().rem_euclid(TAU);
    if d > PI {
        TAU - d
    } else {
        d
    }
}

/// Alignment score `1 - (0.005 * theta_a)^(1/4)` for a gap in radians.
pub fn score_from_gap(theta_a: f64) -> f64 {
    1.0 - (0.005 * theta_a).sqrt().sqrt()
}

/// Scores a candidate by how well the bearing of its end point matches the goal bearing.
pub fn score(candidate: &TrajectoryCandidate, goal: (f64, f64)) -> f64 {
    let end = candidate.end();
    let theta_g = goal.1.atan2(goal.0);
    let theta_p = end.y.atan2(end.x);
    score_from_gap(angle_gap(theta_g, theta_p))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub command: VelocityCommand,
    pub path_id: Option<usize>,
    pub score: Option<f64>,
}

impl Selection {
    pub fn stop() -> Self {
        Self { command: VelocityCommand::stop(), path_id: None, score: None }
    }
}

/// Highest-scoring candidate's first command. Ties go to the smaller first
/// angular rate, then the smaller path id. No candidates means stop.
pub fn select_command(feasible: &[&TrajectoryCandidate], goal: (f64, f64)) -> Selection {
    let mut best: Option<(f64, &TrajectoryCandidate)> = None;
    for &c in feasible {
        let s = score(c, goal);
        let better = match best {
            None => true,
            Some((bs, bc)) => {
                s > bs
                    || (s == bs
                        && (c.first_command.angular.abs(), c.path_id) < (bc.first_command.angular.abs(), bc.path_id))
            }
        };
        if better {
            best = Some((s, c));
        }
    }
    match best {
        Some((s, c)) => Selection { command: c.first_command, path_id: Some(c.path_id), score: Some(s) },
        None => Selection::stop(),
    }
}
