use flowvtr::lidar::RangeScan;
use flowvtr::planner::GridConfig;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn random_scan(rng: &mut ChaCha8Rng) -> RangeScan {
    let beams = 360;
    let angles: Vec<f64> = (0..beams).map(|i| std::f64::consts::TAU * i as f64 / beams as f64).collect();
    let mut ranges = vec![10.0; beams];
    for _ in 0..rng.random_range(0..40) {
        ranges[rng.random_range(0..beams)] = rng.random_range(0.2..4.5);
    }
    RangeScan { angles, ranges, max_range: 10.0 }
}

/// Point-in-inflated-set check straight from the definition: the cell holding
/// the point is occupied when it holds a hit or its center lies within the
/// inflation radius of one.
pub fn occupied(hits: &[(f64, f64)], cfg: &GridConfig, x: f64, y: f64) -> bool {
    let half = cfg.extent / 2.0;
    let n = (cfg.extent / cfg.resolution).round();
    let (i, j) = (((x + half) / cfg.resolution).floor(), ((y + half) / cfg.resolution).floor());
    if i < 0.0 || j < 0.0 || i >= n || j >= n {
        return false;
    }
    let (cx, cy) = (-half + (i + 0.5) * cfg.resolution, -half + (j + 0.5) * cfg.resolution);
    hits.iter().any(|&(hx, hy)| {
        let same_cell =
            ((hx + half) / cfg.resolution).floor() == i && ((hy + half) / cfg.resolution).floor() == j;
        same_cell || (cx - hx).hypot(cy - hy) <= cfg.inflation_radius()
    })
}
