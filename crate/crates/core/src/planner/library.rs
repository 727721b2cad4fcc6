//! Offline library of multi-segment constant-curvature trajectories.

use std::f64::consts::FRAC_PI_3;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::PlannerError;
use crate::geometry::{step_unicycle, Pose2, VelocityCommand};
use crate::textio::to_precise_json;

pub const LIBRARY_SCHEMA: &str = "flowvtr-trajectory-library";
pub const LIBRARY_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LibraryConfig {
    pub segments: usize,
    /// Path length of each segment (m).
    pub segment_length: f64,
    /// Linear speed the library is sampled at (m/s).
    pub speed: f64,
    /// Angular rates span [-omega_max, omega_max] (rad/s).
    pub omega_max: f64,
    pub angular_samples: usize,
    /// Time between stored samples (s).
    pub sample_dt: f64,
}

impl Default for LibraryConfig {
    fn default() -> Self {
        Self { segments: 3, segment_length: 1.0, speed: 1.0, omega_max: FRAC_PI_3, angular_samples: 13, sample_dt: 0.1 }
    }
}

impl LibraryConfig {
    /// Integration steps per segment.
    pub fn steps_per_segment(&self) -> Result<usize, PlannerError> {
        let invalid = |m: &str| Err(PlannerError::InvalidConfig(m.to_string()));
        if self.segments == 0 || self.angular_samples == 0 {
            return invalid("segments and angular_samples must be positive");
        }
        if !(self.segment_length > 0.0 && self.speed > 0.0 && self.sample_dt > 0.0 && self.omega_max >= 0.0) {
            return invalid("lengths, speed, sample spacing must be positive and omega_max non-negative");
        }
        let exact = self.segment_length / (self.speed * self.sample_dt);
        let steps = exact.round();
        if steps < 1.0 || (exact - steps).abs() > 1e-9 {
            return invalid("segment duration must be a whole number of sample steps");
        }
        let total = (self.angular_samples as f64).powi(self.segments as i32);
        if total > 1e6 {
            return invalid("library would exceed one million candidates");
        }
        Ok(steps as usize)
    }

    pub fn omegas(&self) -> Vec<f64> {
        let a = self.angular_samples;
        if a == 1 {
            return vec![0.0];
        }
        (0..a).map(|i| -self.omega_max + 2.0 * self.omega_max * i as f64 / (a - 1) as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryCandidate {
    pub path_id: usize,
    /// Index of the first-segment angular rate.
    pub group_id: usize,
    /// Angular rate of every segment.
    pub segment_omegas: Vec<f64>,
    /// Robot-frame poses, starting at the origin, one per `sample_dt`.
    pub samples: Vec<Pose2>,
    pub first_command: VelocityCommand,
}

impl TrajectoryCandidate {
    pub fn end(&self) -> &Pose2 {
        self.samples.last().expect("candidate has samples")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateLibrary {
    pub config: LibraryConfig,
    pub candidates: Vec<TrajectoryCandidate>,
}

impl CandidateLibrary {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    /// Candidates sharing a first-segment command.
    pub fn group(&self, group_id: usize) -> impl Iterator<Item = &TrajectoryCandidate> {
        self.candidates.iter().filter(move |c| c.group_id == group_id)
    }
}

/// Samples every combination of angular rates over the segments. The first
/// segment is the most significant digit of `path_id`.
pub fn generate_library(cfg: &LibraryConfig) -> Result<CandidateLibrary, PlannerError> {
    let steps = cfg.steps_per_segment()?;
    let omegas = cfg.omegas();
    let a = omegas.len();
    let total = a.pow(cfg.segments as u32);
    let mut candidates = Vec::with_capacity(total);
    for path_id in 0..total {
        let mut digits = vec![0usize; cfg.segments];
        let mut rest = path_id;
        for d in digits.iter_mut().rev() {
            *d = rest % a;
            rest /= a;
        }
        let segment_omegas: Vec<f64> = digits.iter().map(|&d| omegas[d]).collect();
        let mut samples = Vec::with_capacity(cfg.segments * steps + 1);
        let mut pose = Pose2::default();
        samples.push(pose);
        for &w in &segment_omegas {
            let cmd = VelocityCommand::new(cfg.speed, w);
            for _ in 0..steps {
                pose = step_unicycle(&pose, &cmd, cfg.sample_dt);
                samples.push(pose);
            }
        }
        candidates.push(TrajectoryCandidate {
            path_id,
            group_id: digits[0],
            first_command: VelocityCommand::new(cfg.speed, segment_omegas[0]),
            segment_omegas,
            samples,
        });
    }
    Ok(CandidateLibrary { config: *cfg, candidates })
}

#[derive(Serialize)]
struct LibraryFileOut<'a> {
    schema: &'static str,
    version: u32,
    #[serde(flatten)]
    library: &'a CandidateLibrary,
}

pub fn library_to_string(library: &CandidateLibrary) -> Result<String, PlannerError> {
    to_precise_json(&LibraryFileOut { schema: LIBRARY_SCHEMA, version: LIBRARY_VERSION, library })
        .map_err(|e| PlannerError::Schema(e.to_string()))
}

pub fn save_library(library: &CandidateLibrary, path: &Path) -> Result<(), PlannerError> {
    let text = library_to_string(library)?;
    fs::write(path, text).map_err(|source| PlannerError::Io { path: path.display().to_string(), source })
}

pub fn load_library(path: &Path) -> Result<CandidateLibrary, PlannerError> {
    let text = fs::read_to_string(path).map_err(|source| PlannerError::Io { path: path.display().to_string(), source })?;
    parse_library(&text)
}

pub fn parse_library(text: &str) -> Result<CandidateLibrary, PlannerError> {
    let mut value: Value = serde_json::from_str(text).map_err(|e| PlannerError::Schema(e.to_string()))?;
    let obj = value.as_object_mut().ok_or_else(|| PlannerError::Schema("top level must be an object".into()))?;
    match obj.remove("schema") {
        Some(Value::String(s)) if s == LIBRARY_SCHEMA => {}
        other => return Err(PlannerError::Schema(format!("missing or wrong schema tag: {other:?}"))),
    }
    match obj.remove("version") {
        Some(v) if v.as_u64() == Some(LIBRARY_VERSION as u64) => {}
        Some(v) => return Err(PlannerError::VersionMismatch { found: v.to_string() }),
        None => return Err(PlannerError::Schema("missing version".into())),
    }
    let lib: CandidateLibrary = serde_json::from_value(value).map_err(|e| PlannerError::Schema(e.to_string()))?;
    validate_library(&lib)?;
    Ok(lib)
}

fn validate_library(lib: &CandidateLibrary) -> Result<(), PlannerError> {
    let steps = lib.config.steps_per_segment()?;
    for (i, c) in lib.candidates.iter().enumerate() {
        if c.path_id != i {
            return Err(PlannerError::Schema(format!("path ids must be dense; found {} at {i}", c.path_id)));
        }
        if c.samples.len() != lib.config.segments * steps + 1 || c.segment_omegas.len() != lib.config.segments {
            return Err(PlannerError::Schema(format!("candidate {i} has inconsistent sample count")));
        }
    }
    Ok(())
}
