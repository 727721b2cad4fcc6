//! Planar range scans ray-cast against the obstacle world.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::geometry::{normalize_angle, Pose2};
use crate::perception::PerceptionError;
use crate::world::ObstacleWorld;

pub const DEFAULT_BEAM_COUNT: usize = 720;
pub const DEFAULT_MAX_RANGE: f64 = 10.0;

/// Smallest range reported when the scanner sits inside an obstacle.
const MIN_RANGE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeScan {
    /// Bearings in the robot frame; beam 0 points straight ahead.
    pub angles: Vec<f64>,
    pub ranges: Vec<f64>,
    pub max_range: f64,
}

impl RangeScan {
    pub fn beam_count(&self) -> usize {
        self.ranges.len()
    }

    /// Robot-frame endpoints of beams that returned before `max_range`.
    pub fn hits(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.angles
            .iter()
            .zip(&self.ranges)
            .filter(|(_, &r)| r < self.max_range)
            .map(|(&a, &r)| (r * a.cos(), r * a.sin()))
    }
}

pub fn raycast_scan(
    obstacles: &ObstacleWorld,
    pose: &Pose2,
    time: f64,
    beam_count: usize,
    max_range: f64,
) -> Result<RangeScan, PerceptionError> {
    if beam_count < 8 {
        return Err(PerceptionError::TooFewBeams(beam_count));
    }
    if !(max_range > 0.0) {
        return Err(PerceptionError::InvalidMaxRange);
    }
    let shapes = obstacles.shapes_at(time);
    let mut angles = Vec::with_capacity(beam_count);
    let mut ranges = Vec::with_capacity(beam_count);
    for i in 0..beam_count {
        let bearing = normalize_angle(i as f64 * TAU / beam_count as f64);
        let (dy, dx) = (pose.heading + bearing).sin_cos();
        let range = shapes
            .iter()
            .filter_map(|s| s.ray_hit(pose.x, pose.y, dx, dy))
            .fold(max_range, f64::min)
            .max(MIN_RANGE);
        angles.push(bearing);
        ranges.push(range);
    }
    Ok(RangeScan { angles, ranges, max_range })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{AaBox, Disc};
    use approx::assert_relative_eq;

    #[test]
    fn disc_ahead() {
        let w = ObstacleWorld { discs: vec![Disc { x: 2.0, y: 0.0, radius: 0.5 }], ..Default::default() };
        let s = raycast_scan(&w, &Pose2::default(), 0.0, 720, 10.0).unwrap();
        assert_eq!(s.beam_count(), 720);
        assert_eq!(s.angles[0], 0.0);
        assert_relative_eq!(s.ranges[0], 1.5, epsilon = 1e-12);
    }

    #[test]
    fn empty_world_returns_max_range() {
        let s = raycast_scan(&ObstacleWorld::default(), &Pose2::new(3.0, -1.0, 0.4), 0.0, 64, 10.0).unwrap();
        assert!(s.ranges.iter().all(|&r| r == 10.0));
        assert_eq!(s.hits().count(), 0);
    }

    #[test]
    fn disc_behind_leaves_front_clear() {
        let w = ObstacleWorld { discs: vec![Disc { x: -2.0, y: 0.0, radius: 0.5 }], ..Default::default() };
        let s = raycast_scan(&w, &Pose2::default(), 0.0, 720, 10.0).unwrap();
        for (a, r) in s.angles.iter().zip(&s.ranges) {
            if a.abs() < std::f64::consts::FRAC_PI_2 {
                assert_eq!(*r, 10.0);
            }
        }
        assert_relative_eq!(s.ranges[360], 1.5, epsilon = 1e-12);
    }

    #[test]
    fn heading_rotates_bearings() {
        let w = ObstacleWorld { boxes: vec![AaBox::new(-1.0, 2.0, 1.0, 3.0)], ..Default::default() };
        let s = raycast_scan(&w, &Pose2::new(0.0, 0.0, std::f64::consts::FRAC_PI_2), 0.0, 8, 10.0).unwrap();
        assert_relative_eq!(s.ranges[0], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn rejects_too_few_beams() {
        assert!(raycast_scan(&ObstacleWorld::default(), &Pose2::default(), 0.0, 4, 10.0).is_err());
    }
}
