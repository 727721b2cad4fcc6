//! Simulated environment: landmarks, obstacles, camera rig and noise settings.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{CameraIntrinsics, CameraMount, GeometryError, Landmark};

pub const DESCRIPTOR_DIM: usize = 32;

pub type Descriptor = [f64; DESCRIPTOR_DIM];

pub const WORLD_SCHEMA: &str = "flowvtr-world";
pub const WORLD_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("world schema violation: {0}")]
    Schema(String),
    #[error("unsupported world version {found} (expected {WORLD_VERSION})")]
    Version { found: u32 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Mixes two 64-bit values into a seed (splitmix64 finalizer).
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(a << 6).wrapping_add(a >> 2);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Draws a uniformly distributed unit vector.
pub fn random_unit_descriptor<R: rand::Rng + ?Sized>(rng: &mut R) -> Descriptor {
    let mut d = [0.0; DESCRIPTOR_DIM];
    loop {
        for x in d.iter_mut() {
            *x = StandardNormal.sample(rng);
        }
        if normalize_descriptor(&mut d) {
            return d;
        }
    }
}

/// Scales `d` to unit length. Returns false for a (near) zero vector.
pub fn normalize_descriptor(d: &mut Descriptor) -> bool {
    let n = d.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n < 1e-12 {
        return false;
    }
    d.iter_mut().for_each(|x| *x /= n);
    true
}

/// Noise-free descriptor of a landmark.
pub fn canonical_descriptor(descriptor_seed: u64, landmark_id: u64) -> Descriptor {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(descriptor_seed, landmark_id));
    random_unit_descriptor(&mut rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub pixel_sigma: f64,
    pub descriptor_sigma: f64,
    pub dropout_prob: f64,
    pub outlier_prob: f64,
    pub rng_seed: u64,
}

impl NoiseConfig {
    pub fn noiseless() -> Self {
        Self { pixel_sigma: 0.0, descriptor_sigma: 0.0, dropout_prob: 0.0, outlier_prob: 0.0, rng_seed: 0 }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if !prob(self.dropout_prob) || !prob(self.outlier_prob) {
            return Err(WorldError::Schema("noise probabilities must lie in [0, 1]".into()));
        }
        if !(self.pixel_sigma >= 0.0 && self.descriptor_sigma >= 0.0) {
            return Err(WorldError::Schema("noise sigmas must be non-negative".into()));
        }
        Ok(())
    }
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { pixel_sigma: 0.5, descriptor_sigma: 0.1, dropout_prob: 0.1, outlier_prob: 0.05, rng_seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Disc {
    pub x: f64,
    pub y: f64,
    pub radius: f64,
}

/// Axis-aligned box on the ground plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AaBox {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl AaBox {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self { min_x: x0.min(x1), min_y: y0.min(y1), max_x: x0.max(x1), max_y: y0.max(y1) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimedWaypoint {
    pub t: f64,
    pub x: f64,
    pub y: f64,
}

/// Disc moving along a piecewise-linear script. Held at the first/last
/// waypoint outside the scripted time span.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicDisc {
    pub radius: f64,
    pub waypoints: Vec<TimedWaypoint>,
}

impl DynamicDisc {
    pub fn position_at(&self, t: f64) -> (f64, f64) {
        let wps = &self.waypoints;
        let first = wps[0];
        if t <= first.t {
            return (first.x, first.y);
        }
        for w in wps.windows(2) {
            let (a, b) = (w[0], w[1]);
            if t <= b.t {
                let span = b.t - a.t;
                let s = if span > 0.0 { (t - a.t) / span } else { 1.0 };
                return (a.x + s * (b.x - a.x), a.y + s * (b.y - a.y));
            }
        }
        let last = wps[wps.len() - 1];
        (last.x, last.y)
    }

    pub fn at(&self, t: f64) -> Disc {
        let (x, y) = self.position_at(t);
        Disc { x, y, radius: self.radius }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    Disc(Disc),
    Box(AaBox),
}

impl Shape {
    /// Smallest `s >= 0` with `origin + s * dir` on the shape; `Some(0)` when the origin is inside.
    /// `dir` must be a unit vector for `s` to be a distance.
    pub fn ray_hit(&self, ox: f64, oy: f64, dx: f64, dy: f64) -> Option<f64> {
        match *self {
            Shape::Disc(d) => {
                let (px, py) = (ox - d.x, oy - d.y);
                let c = px * px + py * py - d.radius * d.radius;
                if c <= 0.0 {
                    return Some(0.0);
                }
                let a = dx * dx + dy * dy;
                let b = px * dx + py * dy;
                let disc = b * b - a * c;
                if disc < 0.0 {
                    return None;
                }
                let s = (-b - disc.sqrt()) / a;
                (s >= 0.0).then_some(s)
            }
            Shape::Box(bx) => {
                let mut lo = f64::NEG_INFINITY;
                let mut hi = f64::INFINITY;
                for (o, d, min, max) in [(ox, dx, bx.min_x, bx.max_x), (oy, dy, bx.min_y, bx.max_y)] {
                    if d.abs() < 1e-15 {
                        if o < min || o > max {
                            return None;
                        }
                    } else {
                        let t0 = (min - o) / d;
                        let t1 = (max - o) / d;
                        lo = lo.max(t0.min(t1));
                        hi = hi.min(t0.max(t1));
                    }
                }
                if hi < lo || hi < 0.0 {
                    None
                } else {
                    Some(lo.max(0.0))
                }
            }
        }
    }

    /// Whether the open segment a→b crosses the shape. Touching the far endpoint does not count.
    pub fn blocks_segment(&self, ax: f64, ay: f64, bx: f64, by: f64) -> bool {
        let len = (bx - ax).hypot(by - ay);
        if len < 1e-12 {
            return self.signed_distance(ax, ay) < 0.0;
        }
        match self.ray_hit(ax, ay, (bx - ax) / len, (by - ay) / len) {
            Some(s) => s < len - 1e-9,
            None => false,
        }
    }

    /// Signed distance from a point to the shape boundary (negative inside).
    pub fn signed_distance(&self, x: f64, y: f64) -> f64 {
        match *self {
            Shape::Disc(d) => (x - d.x).hypot(y - d.y) - d.radius,
            Shape::Box(b) => {
                let dx = (b.min_x - x).max(x - b.max_x);
                let dy = (b.min_y - y).max(y - b.max_y);
                if dx <= 0.0 && dy <= 0.0 {
                    dx.max(dy)
                } else {
                    dx.max(0.0).hypot(dy.max(0.0))
                }
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ObstacleWorld {
    #[serde(default)]
    pub discs: Vec<Disc>,
    #[serde(default)]
    pub boxes: Vec<AaBox>,
    #[serde(default)]
    pub dynamic: Vec<DynamicDisc>,
}

impl ObstacleWorld {
    pub fn validate(&self) -> Result<(), WorldError> {
        let bad_radius = self.discs.iter().map(|d| d.radius).chain(self.dynamic.iter().map(|d| d.radius)).any(|r| !(r > 0.0));
        if bad_radius {
            return Err(WorldError::Schema("obstacle radii must be positive".into()));
        }
        for d in &self.dynamic {
            if d.waypoints.is_empty() {
                return Err(WorldError::Schema("dynamic obstacle without waypoints".into()));
            }
            if d.waypoints.windows(2).any(|w| w[1].t < w[0].t) {
                return Err(WorldError::Schema("dynamic obstacle waypoints must be time-ordered".into()));
            }
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.discs.is_empty() && self.boxes.is_empty() && self.dynamic.is_empty()
    }

    /// All obstacles frozen at time `t`.
    pub fn shapes_at(&self, t: f64) -> Vec<Shape> {
        self.discs
            .iter()
            .map(|d| Shape::Disc(*d))
            .chain(self.boxes.iter().map(|b| Shape::Box(*b)))
            .chain(self.dynamic.iter().map(|d| Shape::Disc(d.at(t))))
            .collect()
    }

    /// Signed clearance from a point to the nearest obstacle boundary at time `t`.
    pub fn clearance(&self, x: f64, y: f64, t: f64) -> f64 {
        self.shapes_at(t).iter().map(|s| s.signed_distance(x, y)).fold(f64::INFINITY, f64::min)
    }
}

/// On-disk description of a world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldSpec {
    pub schema: String,
    pub version: u32,
    pub intrinsics: CameraIntrinsics,
    pub mount: CameraMount,
    #[serde(default)]
    pub descriptor_seed: u64,
    pub noise: NoiseConfig,
    pub landmarks: Vec<LandmarkRecord>,
    #[serde(default)]
    pub obstacles: ObstacleWorld,
    /// Camera depth (m) beyond which landmarks are too small to be detected.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_range: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LandmarkRecord {
    pub id: u64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

/// A validated world with canonical landmark descriptors attached.
#[derive(Debug, Clone)]
pub struct World {
    pub intrinsics: CameraIntrinsics,
    pub mount: CameraMount,
    pub noise: NoiseConfig,
    pub obstacles: ObstacleWorld,
    /// Camera depth (m) beyond which landmarks are not detected; unlimited when `None`.
    pub feature_range: Option<f64>,
    descriptor_seed: u64,
    landmarks: Vec<Landmark>,
    descriptors: Vec<Descriptor>,
}

impl World {
    pub fn new(
        intrinsics: CameraIntrinsics,
        mount: CameraMount,
        mut landmarks: Vec<Landmark>,
        obstacles: ObstacleWorld,
        noise: NoiseConfig,
        descriptor_seed: u64,
    ) -> Result<Self, WorldError> {
        intrinsics.validate()?;
        mount.validate()?;
        obstacles.validate()?;
        noise.validate()?;
        landmarks.sort_by_key(|l| l.id);
        if landmarks.windows(2).any(|w| w[0].id == w[1].id) {
            return Err(WorldError::Schema("landmark ids must be unique".into()));
        }
        let descriptors = landmarks.iter().map(|l| canonical_descriptor(descriptor_seed, l.id)).collect();
        Ok(Self { intrinsics, mount, noise, obstacles, feature_range: None, descriptor_seed, landmarks, descriptors })
    }

    pub fn from_spec(spec: WorldSpec) -> Result<Self, WorldError> {
        if spec.schema != WORLD_SCHEMA {
            return Err(WorldError::Schema(format!("unexpected schema tag {:?}", spec.schema)));
        }
        if spec.version != WORLD_VERSION {
            return Err(WorldError::Version { found: spec.version });
        }
        let landmarks = spec
            .landmarks
            .iter()
            .map(|r| Landmark { id: r.id, position: crate::geometry::Point3::new(r.x, r.y, r.z) })
            .collect();
        if spec.feature_range.is_some_and(|r| !(r > 0.0)) {
            return Err(WorldError::Schema("feature_range must be positive".into()));
        }
        let mut world = Self::new(spec.intrinsics, spec.mount, landmarks, spec.obstacles, spec.noise, spec.descriptor_seed)?;
        world.feature_range = spec.feature_range;
        Ok(world)
    }

    pub fn to_spec(&self) -> WorldSpec {
        WorldSpec {
            schema: WORLD_SCHEMA.into(),
            version: WORLD_VERSION,
            intrinsics: self.intrinsics,
            mount: self.mount,
            descriptor_seed: self.descriptor_seed,
            noise: self.noise,
            landmarks: self
                .landmarks
                .iter()
                .map(|l| LandmarkRecord { id: l.id, x: l.position.x, y: l.position.y, z: l.position.z })
                .collect(),
            obstacles: self.obstacles.clone(),
            feature_range: self.feature_range,
        }
    }

    pub fn load(path: &Path) -> Result<Self, WorldError> {
        let text = fs::read_to_string(path).map_err(|source| WorldError::Io { path: path.display().to_string(), source })?;
        let spec: WorldSpec = serde_json::from_str(&text).map_err(|e| WorldError::Schema(e.to_string()))?;
        Self::from_spec(spec)
    }

    pub fn save(&self, path: &Path) -> Result<(), WorldError> {
        let text = serde_json::to_string_pretty(&self.to_spec()).map_err(|e| WorldError::Schema(e.to_string()))?;
        fs::write(path, text + "\n").map_err(|source| WorldError::Io { path: path.display().to_string(), source })
    }

    /// Landmarks sorted by id.
    pub fn landmarks(&self) -> &[Landmark] {
        &self.landmarks
    }

    pub fn descriptor(&self, index: usize) -> &Descriptor {
        &self.descriptors[index]
    }

    pub fn descriptor_seed(&self) -> u64 {
        self.descriptor_seed
    }

    /// Same world with extra dynamic obstacles.
    pub fn with_dynamic(&self, extra: &[DynamicDisc]) -> Self {
        let mut w = self.clone();
        w.obstacles.dynamic.extend_from_slice(extra);
        w
    }
}
