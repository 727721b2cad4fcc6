//! Keyframe graph built during the teach run.
//!
//! The map is a linear chain of keyframes. Each keyframe keeps its features
//! and the feature flow measured towards the next keyframe.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::geometry::CameraIntrinsics;
use crate::perception::{feature_flow, match_features, FeatureObservation, Frame, MatchConfig};
use crate::textio::to_precise_json;

pub const MAP_SCHEMA: &str = "flowvtr-map";
pub const MAP_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TeachError {
    #[error("frame {frame_index} has only {features} features (need at least {min})")]
    BarrenFrame { frame_index: u64, features: usize, min: usize },
    #[error("teach run produced {keyframes} keyframe(s); a navigable map needs at least 2")]
    TooShortTeach { keyframes: usize },
    #[error("edge {from} -> {} rests on {inliers} matches (need at least {min})", from + 1)]
    SparseEdge { from: usize, inliers: usize, min: usize },
}

#[derive(Debug, Error)]
pub enum MapError {
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("unsupported map version {found} (expected {MAP_VERSION})")]
    VersionMismatch { found: String },
    #[error("map schema violation: {0}")]
    Schema(String),
}

/// How the flow stored on an edge is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeFlow {
    /// Flow of the frame that triggered the new keyframe, against the previous keyframe.
    EmissionTime,
    /// Match the two stored keyframes again after emission.
    Rematch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TeachConfig {
    /// Flow magnitude (px) that triggers a keyframe.
    pub flow_threshold: f64,
    /// A keyframe is also emitted when inliers drop below this fraction of the
    /// last keyframe's feature count.
    pub inlier_ratio: f64,
    /// Minimum matches behind every stored edge flow.
    pub min_edge_matches: usize,
    pub max_features: usize,
    pub min_frame_features: usize,
    pub edge_flow: EdgeFlow,
    pub matching: MatchConfig,
}

impl Default for TeachConfig {
    fn default() -> Self {
        Self {
            flow_threshold: 30.0,
            inlier_ratio: 0.6,
            min_edge_matches: 15,
            max_features: 500,
            min_frame_features: 8,
            edge_flow: EdgeFlow::EmissionTime,
            matching: MatchConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Keyframe {
    pub id: usize,
    pub features: Vec<FeatureObservation>,
    pub flow_to_next: Option<f64>,
    pub creation_inliers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyframeMap {
    pub keyframes: Vec<Keyframe>,
    pub intrinsics: CameraIntrinsics,
    pub config: TeachConfig,
}

impl KeyframeMap {
    pub fn len(&self) -> usize {
        self.keyframes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keyframes.is_empty()
    }

    pub fn last_index(&self) -> usize {
        self.keyframes.len().saturating_sub(1)
    }

    pub fn validate(&self) -> Result<(), MapError> {
        let k = self.keyframes.len();
        if k < 2 {
            return Err(MapError::Schema(format!("map has {k} keyframes, need at least 2")));
        }
        self.intrinsics.validate().map_err(|e| MapError::Schema(e.to_string()))?;
        for (i, kf) in self.keyframes.iter().enumerate() {
            if kf.id != i {
                return Err(MapError::Schema(format!("keyframe at position {i} has id {}", kf.id)));
            }
            if kf.flow_to_next.is_some() != (i + 1 < k) {
                return Err(MapError::Schema(format!("keyframe {i}: flow_to_next must be present exactly on non-final keyframes")));
            }
            if kf.flow_to_next.is_some_and(|f| !f.is_finite()) {
                return Err(MapError::Schema(format!("keyframe {i}: non-finite flow")));
            }
            if i > 0 && kf.creation_inliers < self.config.min_edge_matches {
                return Err(MapError::Schema(format!(
                    "keyframe {i}: edge built from {} matches (< {})",
                    kf.creation_inliers, self.config.min_edge_matches
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TeachStep {
    pub frame_index: u64,
    /// Flow and inliers against the last keyframe; `None` for the first frame.
    pub flow: Option<f64>,
    pub inliers: usize,
    /// Feature count of the keyframe the frame was compared with.
    pub reference_features: usize,
    pub emitted: Option<usize>,
}

#[derive(Debug, Clone)]
struct PendingFrame {
    frame: Frame,
    flow: f64,
    inliers: usize,
}

/// Incremental keyframe selection over a stream of teach frames.
#[derive(Debug, Clone)]
pub struct TeachBuilder {
    cfg: TeachConfig,
    intrinsics: CameraIntrinsics,
    keyframes: Vec<Keyframe>,
    /// Last frame seen that has not become a keyframe.
    pending: Option<PendingFrame>,
    /// Frame index the last keyframe was taken from.
    last_emitted_frame: u64,
}

/// A final frame this close (in frames) to the last keyframe replaces it
/// rather than being appended, so the map never ends on a near-duplicate pair.
const FINAL_MERGE_FRAMES: u64 = 3;

impl TeachBuilder {
    pub fn new(intrinsics: CameraIntrinsics, cfg: TeachConfig) -> Self {
        Self { cfg, intrinsics, keyframes: Vec::new(), pending: None, last_emitted_frame: 0 }
    }

    pub fn keyframes(&self) -> &[Keyframe] {
        &self.keyframes
    }

    fn strip(&self, frame: &Frame) -> Vec<FeatureObservation> {
        frame
            .observations
            .iter()
            .take(self.cfg.max_features)
            .map(|o| FeatureObservation { debug_landmark_id: None, ..o.clone() })
            .collect()
    }

    fn push_keyframe(&mut self, frame: &Frame, flow: Option<f64>, inliers: usize) -> Result<usize, TeachError> {
        let id = self.keyframes.len();
        if let (Some(prev), Some(flow)) = (self.keyframes.last_mut(), flow) {
            if inliers < self.cfg.min_edge_matches {
                return Err(TeachError::SparseEdge { from: id - 1, inliers, min: self.cfg.min_edge_matches });
            }
            prev.flow_to_next = Some(flow);
        }
        self.last_emitted_frame = frame.frame_index;
        let features = self.strip(frame);
        let creation_inliers = if id == 0 { features.len() } else { inliers };
        self.keyframes.push(Keyframe { id, features, flow_to_next: None, creation_inliers });
        if id > 0 && self.cfg.edge_flow == EdgeFlow::Rematch {
            let (a, b) = (&self.keyframes[id - 1], &self.keyframes[id]);
            let m = match_features(&b.features, &a.features, &self.cfg.matching);
            if m.inlier_count() < self.cfg.min_edge_matches {
                return Err(TeachError::SparseEdge { from: id - 1, inliers: m.inlier_count(), min: self.cfg.min_edge_matches });
            }
            let f = feature_flow(&m).expect("non-empty match set");
            self.keyframes[id - 1].flow_to_next = Some(f.flow);
            self.keyframes[id].creation_inliers = f.inliers;
        }
        Ok(id)
    }

    /// Feeds one teach frame. The first frame becomes keyframe 0.
    pub fn process_frame(&mut self, frame: Frame) -> Result<TeachStep, TeachError> {
        if frame.len() < self.cfg.min_frame_features {
            return Err(TeachError::BarrenFrame {
                frame_index: frame.frame_index,
                features: frame.len(),
                min: self.cfg.min_frame_features,
            });
        }
        let frame_index = frame.frame_index;
        let Some(last) = self.keyframes.last() else {
            let id = self.push_keyframe(&frame, None, 0)?;
            self.pending = None;
            return Ok(TeachStep { frame_index, flow: None, inliers: 0, reference_features: 0, emitted: Some(id) });
        };
        let reference_features = last.features.len();
        let matches = match_features(&frame.observations, &last.features, &self.cfg.matching);
        let inliers = matches.inlier_count();
        let flow = feature_flow(&matches).map(|f| f.flow).unwrap_or(0.0);
        let emit = flow.abs() >= self.cfg.flow_threshold || (inliers as f64) < self.cfg.inlier_ratio * reference_features as f64;
        let emitted = if emit {
            let id = self.push_keyframe(&frame, Some(flow), inliers)?;
            self.pending = None;
            Some(id)
        } else {
            self.pending = Some(PendingFrame { frame, flow, inliers });
            None
        };
        Ok(TeachStep { frame_index, flow: (inliers > 0).then_some(flow), inliers, reference_features, emitted })
    }

    /// Appends the last frame as final keyframe (unless it already is one) and checks the map.
    ///
    /// When the last keyframe was taken only a few frames earlier, the final
    /// frame replaces it instead, provided it still matches the keyframe before.
    pub fn finalize(mut self) -> Result<KeyframeMap, TeachError> {
        if let Some(p) = self.pending.take() {
            let n = self.keyframes.len();
            let close = p.frame.frame_index.saturating_sub(self.last_emitted_frame) <= FINAL_MERGE_FRAMES;
            let replacement = (close && n >= 2)
                .then(|| match_features(&p.frame.observations, &self.keyframes[n - 2].features, &self.cfg.matching))
                .filter(|m| m.inlier_count() >= self.cfg.min_edge_matches);
            match replacement {
                Some(m) => {
                    self.keyframes.pop();
                    self.keyframes[n - 2].flow_to_next = None;
                    let flow = feature_flow(&m).expect("non-empty match set").flow;
                    self.push_keyframe(&p.frame, Some(flow), m.inlier_count())?;
                }
                None => {
                    self.push_keyframe(&p.frame, Some(p.flow), p.inliers)?;
                }
            }
        }
        if self.keyframes.len() < 2 {
            return Err(TeachError::TooShortTeach { keyframes: self.keyframes.len() });
        }
        let map = KeyframeMap { keyframes: self.keyframes, intrinsics: self.intrinsics, config: self.cfg };
        debug_assert!(map.validate().is_ok());
        Ok(map)
    }
}

#[derive(Serialize)]
struct MapFileOut<'a> {
    schema: &'static str,
    version: u32,
    #[serde(flatten)]
    map: &'a KeyframeMap,
}

pub fn save_map(map: &KeyframeMap, path: &Path) -> Result<(), MapError> {
    let text = to_precise_json(&MapFileOut { schema: MAP_SCHEMA, version: MAP_VERSION, map })
        .map_err(|e| MapError::Schema(e.to_string()))?;
    fs::write(path, text).map_err(|source| MapError::Io { path: path.display().to_string(), source })
}

pub fn load_map(path: &Path) -> Result<KeyframeMap, MapError> {
    let text = fs::read_to_string(path).map_err(|source| MapError::Io { path: path.display().to_string(), source })?;
    parse_map(&text)
}

pub fn parse_map(text: &str) -> Result<KeyframeMap, MapError> {
    let mut value: Value = serde_json::from_str(text).map_err(|e| MapError::Schema(e.to_string()))?;
    let obj = value.as_object_mut().ok_or_else(|| MapError::Schema("top level must be an object".into()))?;
    match obj.remove("schema") {
        Some(Value::String(s)) if s == MAP_SCHEMA => {}
        other => return Err(MapError::Schema(format!("missing or wrong schema tag: {other:?}"))),
    }
    match obj.remove("version") {
        Some(v) if v.as_u64() == Some(MAP_VERSION as u64) => {}
        Some(v) => return Err(MapError::VersionMismatch { found: v.to_string() }),
        None => return Err(MapError::Schema("missing version".into())),
    }
    let map: KeyframeMap = serde_json::from_value(value).map_err(|e| MapError::Schema(e.to_string()))?;
    map.validate()?;
    Ok(map)
}
