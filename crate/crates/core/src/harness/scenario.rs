//! Scenario files and the builtin desk-scale scenarios.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, TAU};
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::HarnessError;
use crate::geometry::{CameraIntrinsics, CameraMount, Landmark, Point3, Pose2};
use crate::planner::{GridConfig, LibraryConfig};
use crate::teach::TeachConfig;
use crate::textio::to_precise_json;
use crate::tracker::TrackerConfig;
use crate::world::{AaBox, DynamicDisc, NoiseConfig, ObstacleWorld, TimedWaypoint, World, WorldSpec};

pub const SCENARIO_SCHEMA: &str = "flowvtr-scenario";
pub const SCENARIO_VERSION: u32 = 1;

/// Where a scenario's world comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorldRef {
    /// Path to a world file, relative to the scenario file.
    File(PathBuf),
    Inline(WorldSpec),
}

/// A teach waypoint. `speed` applies on the leg that ends here.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TeachWaypoint {
    pub pose: Pose2,
    pub speed: f64,
}

/// Inclusive range of control ticks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TickRange {
    pub start: u64,
    pub end: u64,
}

impl TickRange {
    pub fn contains(&self, tick: u64) -> bool {
        (self.start..=self.end).contains(&tick)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveConfig {
    /// Pure-pursuit lookahead during teach (m).
    pub lookahead: f64,
    /// Turn-rate limit during teach (rad/s).
    pub teach_omega_max: f64,
    /// Linear speed during repeat (m/s).
    pub cruise_speed: f64,
}

impl Default for DriveConfig {
    fn default() -> Self {
        Self { lookahead: 0.5, teach_omega_max: FRAC_PI_3, cruise_speed: 0.6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlannerSettings {
    pub library: LibraryConfig,
    pub grid: GridConfig,
    pub beam_count: usize,
    pub max_range: f64,
}

impl Default for PlannerSettings {
    fn default() -> Self {
        Self {
            library: LibraryConfig::default(),
            grid: GridConfig::default(),
            beam_count: crate::lidar::DEFAULT_BEAM_COUNT,
            max_range: crate::lidar::DEFAULT_MAX_RANGE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub world: WorldRef,
    pub waypoints: Vec<TeachWaypoint>,
    pub control_rate_hz: f64,
    /// Replaces the world's noise model when present.
    #[serde(default)]
    pub noise: Option<NoiseConfig>,
    #[serde(default)]
    pub teach: TeachConfig,
    #[serde(default)]
    pub tracker: TrackerConfig,
    #[serde(default)]
    pub planner: PlannerSettings,
    #[serde(default)]
    pub drive: DriveConfig,
    pub rng_seed: u64,
    /// Longest simulated time of either phase (s).
    pub duration_limit: f64,
    /// Moving obstacles that only exist during repeat.
    #[serde(default)]
    pub repeat_dynamic: Vec<DynamicDisc>,
    /// Repeat ticks whose frames lose every feature.
    #[serde(default)]
    pub dropout: Vec<TickRange>,
}

impl Scenario {
    pub fn dt(&self) -> f64 {
        1.0 / self.control_rate_hz
    }

    pub fn start_pose(&self) -> Pose2 {
        self.waypoints[0].pose
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::InvalidScenario(m));
        if self.waypoints.len() < 2 {
            return bad(format!("need at least 2 waypoints, got {}", self.waypoints.len()));
        }
        if !(self.control_rate_hz > 0.0 && self.control_rate_hz.is_finite()) {
            return bad("control rate must be positive".into());
        }
        if !(self.duration_limit > 0.0) {
            return bad("duration limit must be positive".into());
        }
        if self.waypoints.iter().skip(1).any(|w| !(w.speed > 0.0)) {
            return bad("waypoint speeds must be positive".into());
        }
        let d = &self.drive;
        if !(d.lookahead > 0.0 && d.teach_omega_max > 0.0 && d.cruise_speed > 0.0) {
            return bad("drive parameters must be positive".into());
        }
        if self.dropout.iter().any(|r| r.end < r.start) {
            return bad("dropout ranges must not be reversed".into());
        }
        if let Some(n) = &self.noise {
            n.validate().map_err(|e| HarnessError::InvalidScenario(e.to_string()))?;
        }
        Ok(())
    }

    /// Loads or builds the world, applying the noise override.
    pub fn resolve_world(&self, base_dir: &Path) -> Result<World, HarnessError> {
        let mut world = match &self.world {
            WorldRef::File(p) => World::load(&base_dir.join(p))?,
            WorldRef::Inline(spec) => World::from_spec(spec.clone())?,
        };
        if let Some(n) = self.noise {
            world.noise = n;
        }
        Ok(world)
    }
}

#[derive(Serialize)]
struct ScenarioFileOut<'a> {
    schema: &'static str,
    version: u32,
    #[serde(flatten)]
    scenario: &'a Scenario,
}

pub fn scenario_to_string(s: &Scenario) -> Result<String, HarnessError> {
    to_precise_json(&ScenarioFileOut { schema: SCENARIO_SCHEMA, version: SCENARIO_VERSION, scenario: s })
        .map_err(|e| HarnessError::Schema(e.to_string()))
}

pub fn save_scenario(s: &Scenario, path: &Path) -> Result<(), HarnessError> {
    fs::write(path, scenario_to_string(s)?).map_err(|e| HarnessError::io(path, e))
}

pub fn load_scenario(path: &Path) -> Result<Scenario, HarnessError> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    parse_scenario(&text)
}

pub fn parse_scenario(text: &str) -> Result<Scenario, HarnessError> {
    let mut value: Value = serde_json::from_str(text).map_err(|e| HarnessError::Schema(e.to_string()))?;
    super::check_tags(&mut value, SCENARIO_SCHEMA, SCENARIO_VERSION)?;
    let s: Scenario = serde_json::from_value(value).map_err(|e| HarnessError::Schema(e.to_string()))?;
    s.validate()?;
    Ok(s)
}

// ---------------------------------------------------------------------------
// builtin scenarios

pub const BUILTIN_NAMES: [&str; 4] = ["corridor", "s-curve", "straight", "dynamic-corridor"];

pub fn builtin(name: &str, seed: u64) -> Option<Scenario> {
    match name {
        "corridor" => Some(corridor_scenario(seed)),
        "s-curve" => Some(s_curve_scenario(seed)),
        "straight" => Some(straight_scenario(seed)),
        "dynamic-corridor" => Some(dynamic_corridor_scenario(seed)),
        _ => None,
    }
}

const CORRIDOR_WIDTH: f64 = 5.0;
const WALL_THICKNESS: f64 = 0.2;
const TEACH_SPEED: f64 = 1.0;
const CORNER_SPEED: f64 = 0.8;
/// Detection depth limit of the builtin worlds (m).
const FEATURE_RANGE: f64 = 4.0;
/// Ceiling and floor landmarks per meter of corridor.
const CEILING_HEIGHT: f64 = 2.4;
const CEILING_DENSITY: usize = 20;
const FLOOR_DENSITY: usize = 32;
/// Column spacing of wall texture (m).
const WALL_SPACING: f64 = 0.25;

struct WorldBuilder {
    rng: ChaCha8Rng,
    landmarks: Vec<Landmark>,
    obstacles: ObstacleWorld,
}

impl WorldBuilder {
    fn new(layout_seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(layout_seed), landmarks: Vec::new(), obstacles: ObstacleWorld::default() }
    }

    fn landmark(&mut self, x: f64, y: f64, z: f64) {
        let id = self.landmarks.len() as u64;
        self.landmarks.push(Landmark { id, position: Point3::new(x, y, z) });
    }

    /// Wall along a segment, textured on the side `inward` points to.
    fn wall(&mut self, a: (f64, f64), b: (f64, f64), inward: (f64, f64), spacing: f64) {
        let (dx, dy) = (b.0 - a.0, b.1 - a.1);
        let len = dx.hypot(dy);
        let (ox, oy) = (-inward.0 * WALL_THICKNESS, -inward.1 * WALL_THICKNESS);
        if dx.abs() < 1e-9 || dy.abs() < 1e-9 {
            self.obstacles.boxes.push(AaBox::new(a.0, a.1, b.0 + ox, b.1 + oy));
        } else {
            // slanted walls become a chain of small boxes
            let pieces = (len / WALL_THICKNESS).ceil() as usize;
            for k in 0..pieces {
                let (s0, s1) = (k as f64 / pieces as f64, (k + 1) as f64 / pieces as f64);
                self.obstacles.boxes.push(AaBox::new(a.0 + s0 * dx, a.1 + s0 * dy, a.0 + s1 * dx + ox, a.1 + s1 * dy + oy));
            }
        }
        let n = (len / spacing).floor() as usize;
        for k in 0..=n {
            for _ in 0..3 {
                let s = (k as f64 + self.rng.random_range(-0.4..0.4)).clamp(0.0, n as f64) * spacing / len.max(1e-12);
                let z = self.rng.random_range(0.1..2.9);
                self.landmark(a.0 + s * dx + 0.02 * inward.0, a.1 + s * dy + 0.02 * inward.1, z);
            }
        }
    }

    /// Ceiling and floor texture along a segment.
    fn ceiling(&mut self, a: (f64, f64), b: (f64, f64), half_width: f64) {
        let (dx, dy) = (b.0 - a.0, b.1 - a.1);
        let len = dx.hypot(dy);
        let (nx, ny) = (-dy / len, dx / len);
        for (count, z) in [(CEILING_DENSITY, CEILING_HEIGHT), (FLOOR_DENSITY, 0.0)] {
            for _ in 0..(len * count as f64).round() as usize {
                let s = self.rng.random_range(0.0..1.0);
                let l = self.rng.random_range(-0.9..0.9) * half_width;
                self.landmark(a.0 + s * dx + l * nx, a.1 + s * dy + l * ny, z);
            }
        }
    }

    fn finish(self) -> WorldSpec {
        let mut spec = World::new(
            CameraIntrinsics::default(),
            CameraMount::default(),
            self.landmarks,
            self.obstacles,
            NoiseConfig::default(),
            0xD5C1,
        )
        .expect("builtin world is valid")
        .to_spec();
        spec.feature_range = Some(FEATURE_RANGE);
        spec
    }
}

/// Offset of polyline vertex `i` by `h` to the left of travel.
fn offset_vertex(pts: &[(f64, f64)], i: usize, h: f64) -> (f64, f64) {
    let normal = |a: (f64, f64), b: (f64, f64)| {
        let (dx, dy) = (b.0 - a.0, b.1 - a.1);
        let l = dx.hypot(dy);
        (-dy / l, dx / l)
    };
    let n_in = (i > 0).then(|| normal(pts[i - 1], pts[i]));
    let n_out = (i + 1 < pts.len()).then(|| normal(pts[i], pts[i + 1]));
    let (nx, ny) = match (n_in, n_out) {
        (Some(a), Some(b)) => {
            let k = 1.0 + a.0 * b.0 + a.1 * b.1;
            ((a.0 + b.0) / k, (a.1 + b.1) / k)
        }
        (Some(a), None) | (None, Some(a)) => a,
        (None, None) => (0.0, 0.0),
    };
    (pts[i].0 + h * nx, pts[i].1 + h * ny)
}

/// Walled, textured corridor around a centerline, closed
/// behind the start and some distance past the end.
pub fn corridor_world(centerline: &[(f64, f64)], layout_seed: u64) -> WorldSpec {
    let h = CORRIDOR_WIDTH / 2.0;
    let mut pts = centerline.to_vec();
    let (n, m) = (pts.len() - 1, pts.len() - 2);
    let dir = |a: (f64, f64), b: (f64, f64)| {
        let l = (b.0 - a.0).hypot(b.1 - a.1);
        ((b.0 - a.0) / l, (b.1 - a.1) / l)
    };
    let d0 = dir(pts[0], pts[1]);
    let d1 = dir(pts[m], pts[n]);
    pts[0] = (pts[0].0 - 1.5 * d0.0, pts[0].1 - 1.5 * d0.1);
    pts[n] = (pts[n].0 + 10.0 * d1.0, pts[n].1 + 10.0 * d1.1);

    let mut b = WorldBuilder::new(layout_seed);
    let left: Vec<_> = (0..pts.len()).map(|i| offset_vertex(&pts, i, h)).collect();
    let right: Vec<_> = (0..pts.len()).map(|i| offset_vertex(&pts, i, -h)).collect();
    for i in 0..n {
        let d = dir(pts[i], pts[i + 1]);
        b.wall(left[i], left[i + 1], (d.1, -d.0), WALL_SPACING);
        b.wall(right[i], right[i + 1], (-d.1, d.0), WALL_SPACING);
        b.ceiling(pts[i], pts[i + 1], h);
    }
    b.wall(right[0], left[0], d0, WALL_SPACING);
    b.wall(left[n], right[n], (-d1.0, -d1.1), WALL_SPACING);
    b.finish()
}

fn waypoints(points: &[(f64, f64)], corner_speed: impl Fn(usize) -> f64) -> Vec<TeachWaypoint> {
    let h0 = (points[1].1 - points[0].1).atan2(points[1].0 - points[0].0);
    points
        .iter()
        .enumerate()
        .map(|(i, &(x, y))| TeachWaypoint { pose: Pose2::new(x, y, if i == 0 { h0 } else { 0.0 }), speed: corner_speed(i) })
        .collect()
}

fn base_scenario(name: &str, world: WorldSpec, waypoints: Vec<TeachWaypoint>, seed: u64) -> Scenario {
    Scenario {
        name: name.into(),
        world: WorldRef::Inline(world),
        waypoints,
        control_rate_hz: 10.0,
        noise: None,
        teach: TeachConfig::default(),
        tracker: TrackerConfig::default(),
        planner: PlannerSettings::default(),
        drive: DriveConfig::default(),
        rng_seed: seed,
        duration_limit: 120.0,
        repeat_dynamic: Vec::new(),
        dropout: Vec::new(),
    }
}

/// Rounds the corners of an axis-aligned polyline with quarter arcs.
fn rounded(points: &[(f64, f64)], radius: f64) -> (Vec<(f64, f64)>, Vec<bool>) {
    let mut out = vec![points[0]];
    let mut on_arc = vec![false];
    for i in 1..points.len() - 1 {
        let (a, p, c) = (points[i - 1], points[i], points[i + 1]);
        let (l1, l2) = ((p.0 - a.0).hypot(p.1 - a.1), (c.0 - p.0).hypot(c.1 - p.1));
        let d1 = ((p.0 - a.0) / l1, (p.1 - a.1) / l1);
        let d2 = ((c.0 - p.0) / l2, (c.1 - p.1) / l2);
        let start = (p.0 - radius * d1.0, p.1 - radius * d1.1);
        let turn = d1.0 * d2.1 - d1.1 * d2.0;
        let (nx, ny) = (-d1.1 * turn.signum(), d1.0 * turn.signum());
        let center = (start.0 + radius * nx, start.1 + radius * ny);
        let a0 = (start.1 - center.1).atan2(start.0 - center.0);
        for k in 0..=6 {
            let ang = a0 + turn.signum() * FRAC_PI_2 * k as f64 / 6.0;
            out.push((center.0 + radius * ang.cos(), center.1 + radius * ang.sin()));
            on_arc.push(k > 0);
        }
    }
    out.push(points[points.len() - 1]);
    on_arc.push(false);
    (out, on_arc)
}

/// Corridor of about 23 m with a left then a right 90 degree turn.
pub fn corridor_scenario(seed: u64) -> Scenario {
    let centerline = [(0.0, 0.0), (8.0, 0.0), (8.0, 7.0), (16.0, 7.0)];
    let (path, arc) = rounded(&centerline, 2.5);
    let wps = waypoints(&path, |i| if arc[i] { CORNER_SPEED } else { TEACH_SPEED });
    base_scenario("corridor", corridor_world(&centerline, 11), wps, seed)
}

/// Straight 10 m corridor.
pub fn straight_scenario(seed: u64) -> Scenario {
    let centerline = [(0.0, 0.0), (10.0, 0.0)];
    let wps = waypoints(&centerline, |_| TEACH_SPEED);
    base_scenario("straight", corridor_world(&centerline, 13), wps, seed)
}

/// Winding corridor of about 21 m following one sine period.
pub fn s_curve_scenario(seed: u64) -> Scenario {
    let (amp, length) = (1.5, 20.0);
    let path: Vec<(f64, f64)> = (0..=40)
        .map(|k| {
            let x = 0.5 * k as f64;
            (x, amp * (TAU * x / length).sin())
        })
        .collect();
    let wps = waypoints(&path, |_| TEACH_SPEED);
    base_scenario("s-curve", corridor_world(&path, 17), wps, seed)
}

/// The corridor with a disc that crosses the first leg during repeat.
pub fn dynamic_corridor_scenario(seed: u64) -> Scenario {
    let mut s = corridor_scenario(seed);
    s.name = "dynamic-corridor".into();
    s.repeat_dynamic.push(DynamicDisc {
        radius: 0.3,
        waypoints: vec![
            TimedWaypoint { t: 0.0, x: 4.5, y: -1.2 },
            TimedWaypoint { t: 4.0, x: 4.5, y: -1.2 },
            TimedWaypoint { t: 10.0, x: 4.5, y: 1.2 },
        ],
    });
    s
}
