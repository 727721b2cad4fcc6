//! Robot-centered occupancy grid built from a range scan.

use serde::{Deserialize, Serialize};

use crate::lidar::RangeScan;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    /// Cell size (m).
    pub resolution: f64,
    /// Side length of the square grid (m).
    pub extent: f64,
    pub robot_radius: f64,
    pub safety_margin: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { resolution: 0.05, extent: 8.0, robot_radius: 0.3, safety_margin: 0.1 }
    }
}

impl GridConfig {
    pub fn inflation_radius(&self) -> f64 {
        self.robot_radius + self.safety_margin
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    pub resolution: f64,
    pub extent: f64,
    pub inflation_radius: f64,
    side: usize,
    raw: Vec<bool>,
    inflated: Vec<bool>,
}

impl OccupancyGrid {
    pub fn empty(cfg: &GridConfig) -> Self {
        let side = (cfg.extent / cfg.resolution).round() as usize;
        Self {
            resolution: cfg.resolution,
            extent: cfg.extent,
            inflation_radius: cfg.inflation_radius(),
            side,
            raw: vec![false; side * side],
            inflated: vec![false; side * side],
        }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    /// Cell containing a robot-frame point, if inside the grid.
    pub fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let half = self.extent / 2.0;
        let i = ((x + half) / self.resolution).floor();
        let j = ((y + half) / self.resolution).floor();
        let n = self.side as f64;
        (i >= 0.0 && j >= 0.0 && i < n && j < n).then_some((i as usize, j as usize))
    }

    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        let half = self.extent / 2.0;
        (-half + (i as f64 + 0.5) * self.resolution, -half + (j as f64 + 0.5) * self.resolution)
    }

    fn idx(&self, i: usize, j: usize) -> usize {
        j * self.side + i
    }

    pub fn is_raw(&self, i: usize, j: usize) -> bool {
        self.raw[self.idx(i, j)]
    }

    pub fn is_inflated(&self, i: usize, j: usize) -> bool {
        self.inflated[self.idx(i, j)]
    }

    /// Whether a robot-frame point falls in an inflated cell. Points outside the grid are free.
    pub fn occupied_at(&self, x: f64, y: f64) -> bool {
        self.cell_of(x, y).is_some_and(|(i, j)| self.is_inflated(i, j))
    }

    pub fn raw_count(&self) -> usize {
        self.raw.iter().filter(|&&c| c).count()
    }

    pub fn inflated_count(&self) -> usize {
        self.inflated.iter().filter(|&&c| c).count()
    }

    /// Marks the cell holding `(x, y)` and every cell whose center lies within
    /// the inflation radius of it.
    pub fn mark_hit(&mut self, x: f64, y: f64) {
        if let Some((i, j)) = self.cell_of(x, y) {
            let k = self.idx(i, j);
            self.raw[k] = true;
            self.inflated[k] = true;
        }
        let r = self.inflation_radius;
        let half = self.extent / 2.0;
        let n = self.side as i64;
        let lo_i = (((x - r + half) / self.resolution).floor() as i64 - 1).max(0);
        let hi_i = (((x + r + half) / self.resolution).floor() as i64 + 1).min(n - 1);
        let lo_j = (((y - r + half) / self.resolution).floor() as i64 - 1).max(0);
        let hi_j = (((y + r + half) / self.resolution).floor() as i64 + 1).min(n - 1);
        for j in lo_j..=hi_j {
            for i in lo_i..=hi_i {
                let (cx, cy) = self.cell_center(i as usize, j as usize);
                if (cx - x).hypot(cy - y) <= r {
                    let k = self.idx(i as usize, j as usize);
                    self.inflated[k] = true;
                }
            }
        }
    }
}

/// Marks beam endpoints that returned before max range, then inflates them.
pub fn build_grid(scan: &RangeScan, cfg: &GridConfig) -> OccupancyGrid {
    let mut grid = OccupancyGrid::empty(cfg);
    for (x, y) in scan.hits() {
        grid.mark_hit(x, y);
    }
    grid
}
