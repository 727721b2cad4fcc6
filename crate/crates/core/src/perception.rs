//! Synthetic feature observations, descriptor matching and feature flow.
//!
//! Feature flow between a query and a reference frame is the mean signed
//! horizontal pixel displacement `u_query - u_reference` over matched pairs.
//! Positive flow means the query viewpoint is rotated to the LEFT of the
//! reference viewpoint. During repeat the tracked keyframe is the query and
//! the live frame the reference, so positive flow asks for a left turn.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{project_camera_point, CameraIntrinsics, PixelPoint, Pose2};
use crate::world::{mix_seed, normalize_descriptor, random_unit_descriptor, Descriptor, World};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PerceptionError {
    #[error("feature flow needs at least one matched pair")]
    EmptyMatch,
    #[error("range scan needs at least 8 beams, got {0}")]
    TooFewBeams(usize),
    #[error("max range must be positive")]
    InvalidMaxRange,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureObservation {
    pub pixel: PixelPoint,
    pub descriptor: Descriptor,
    /// Ground-truth landmark id. Only oracles and tests read this.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub debug_landmark_id: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Frame {
    pub observations: Vec<FeatureObservation>,
    pub frame_index: u64,
    pub timestamp: f64,
}

impl Frame {
    pub fn empty(frame_index: u64, timestamp: f64) -> Self {
        Self { observations: Vec::new(), frame_index, timestamp }
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }
}

/// Renders the landmarks visible from `pose` at time `time` into a frame.
///
/// The random stream is seeded from `(noise.rng_seed, frame_index)`, so the
/// result is a pure function of the arguments.
pub fn observe(world: &World, pose: &Pose2, time: f64, frame_index: u64) -> Frame {
    let k = &world.intrinsics;
    let noise = &world.noise;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(noise.rng_seed, frame_index));
    let pixel_noise = Normal::new(0.0, noise.pixel_sigma).expect("validated sigma");
    let desc_noise = Normal::new(0.0, noise.descriptor_sigma).expect("validated sigma");
    let shapes = world.obstacles.shapes_at(time);
    let (cam_x, cam_y) = world.mount.camera_position(pose);

    let mut observations = Vec::new();
    for (i, lm) in world.landmarks().iter().enumerate() {
        let cam = world.mount.world_to_camera(pose, &lm.position);
        if world.feature_range.is_some_and(|r| cam.z > r) {
            continue;
        }
        let Some(px) = project_camera_point(k, &cam) else { continue };
        let (lx, ly) = (lm.position.x, lm.position.y);
        if shapes.iter().any(|s| s.blocks_segment(cam_x, cam_y, lx, ly)) {
            continue;
        }
        if noise.dropout_prob > 0.0 && rng.random::<f64>() < noise.dropout_prob {
            continue;
        }
        let pixel = if noise.pixel_sigma > 0.0 {
            let u: f64 = px.u + pixel_noise.sample(&mut rng);
            let v: f64 = px.v + pixel_noise.sample(&mut rng);
            PixelPoint::new(u.clamp(0.0, k.width - 1e-6), v.clamp(0.0, k.height - 1e-6))
        } else {
            px
        };
        let descriptor = if noise.outlier_prob > 0.0 && rng.random::<f64>() < noise.outlier_prob {
            random_unit_descriptor(&mut rng)
        } else if noise.descriptor_sigma > 0.0 {
            let mut d = *world.descriptor(i);
            for x in d.iter_mut() {
                *x += desc_noise.sample(&mut rng);
            }
            if !normalize_descriptor(&mut d) {
                d = *world.descriptor(i);
            }
            d
        } else {
            *world.descriptor(i)
        };
        observations.push(FeatureObservation { pixel, descriptor, debug_landmark_id: Some(lm.id) });
    }
    Frame { observations, frame_index, timestamp: time }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchConfig {
    /// Lowe ratio threshold on cosine distance.
    pub ratio: f64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self { ratio: 0.8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchPair {
    pub query_index: usize,
    pub reference_index: usize,
    pub query: PixelPoint,
    pub reference: PixelPoint,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MatchSet {
    pub pairs: Vec<MatchPair>,
}

impl MatchSet {
    pub fn inlier_count(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

fn cosine_distance(a: &Descriptor, b: &Descriptor) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    (1.0 - dot).max(0.0)
}

#[derive(Clone, Copy)]
struct Nearest {
    index: usize,
    best: f64,
    second: f64,
}

impl Nearest {
    fn new() -> Self {
        Self { index: usize::MAX, best: f64::INFINITY, second: f64::INFINITY }
    }

    fn offer(&mut self, index: usize, d: f64) {
        if d < self.best {
            self.second = self.best;
            self.best = d;
            self.index = index;
        } else if d < self.second {
            self.second = d;
        }
    }

    fn passes_ratio(&self, ratio: f64) -> bool {
        !self.second.is_finite() || self.best < ratio * self.second
    }
}

/// Mutual nearest-neighbour matching on cosine distance, with the ratio test
/// applied from both sides. Pairs come back sorted by query pixel.
pub fn match_frames(query: &Frame, reference: &Frame, cfg: &MatchConfig) -> MatchSet {
    match_features(&query.observations, &reference.observations, cfg)
}

/// [`match_frames`] over bare observation lists.
pub fn match_features(query: &[FeatureObservation], reference: &[FeatureObservation], cfg: &MatchConfig) -> MatchSet {
    let nq = query.len();
    let nr = reference.len();
    if nq == 0 || nr == 0 {
        return MatchSet::default();
    }
    let mut from_query = vec![Nearest::new(); nq];
    let mut from_reference = vec![Nearest::new(); nr];
    for (i, q) in query.iter().enumerate() {
        for (j, r) in reference.iter().enumerate() {
            let d = cosine_distance(&q.descriptor, &r.descriptor);
            from_query[i].offer(j, d);
            from_reference[j].offer(i, d);
        }
    }
    let mut pairs: Vec<MatchPair> = from_query
        .iter()
        .enumerate()
        .filter(|(i, nq)| {
            let back = &from_reference[nq.index];
            back.index == *i && nq.passes_ratio(cfg.ratio) && back.passes_ratio(cfg.ratio)
        })
        .map(|(i, nq)| MatchPair {
            query_index: i,
            reference_index: nq.index,
            query: query[i].pixel,
            reference: reference[nq.index].pixel,
        })
        .collect();
    pairs.sort_by(|a, b| {
        a.query.u.total_cmp(&b.query.u).then(a.query.v.total_cmp(&b.query.v)).then(a.query_index.cmp(&b.query_index))
    });
    MatchSet { pairs }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureFlow {
    pub flow: f64,
    pub inliers: usize,
}

/// Mean of `u_query - u_reference` over the matched pairs.
pub fn feature_flow(matches: &MatchSet) -> Result<FeatureFlow, PerceptionError> {
    let n = matches.inlier_count();
    if n == 0 {
        return Err(PerceptionError::EmptyMatch);
    }
    let sum: f64 = matches.pairs.iter().map(|p| p.query.u - p.reference.u).sum();
    Ok(FeatureFlow { flow: sum / n as f64, inliers: n })
}

/// Least-squares scale `s` with `(v_ref - cy) ≈ s (v_query - cy)`.
///
/// Vertical offsets from the principal row shrink with depth and are
/// unaffected by yaw, so `s < 1` means the reference camera stands behind the
/// query camera. `None` when the pairs carry no vertical spread.
pub fn vertical_scale(matches: &MatchSet, k: &CameraIntrinsics) -> Option<f64> {
    let (num, den) = matches.pairs.iter().fold((0.0, 0.0), |(n, d), p| {
        let q = p.query.v - k.cy;
        let r = p.reference.v - k.cy;
        (n + q * r, d + q * q)
    });
    (den > 1e-9).then(|| num / den)
}
