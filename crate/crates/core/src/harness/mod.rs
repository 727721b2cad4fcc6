//! Closed-loop simulation of teach and repeat runs, their logs and metrics.

mod log;
mod metrics;
mod run;
mod scenario;

use std::path::Path;

use serde_json::Value;
use thiserror::Error;

pub use log::{
    trace_rows, EndReason, EndRecord, LogHeader, Phase, RunLog, TeachTelemetry, TickRecord, TraceRow, TrackerTelemetry,
    LOG_SCHEMA, LOG_VERSION,
};
pub use metrics::{evaluate, sweep_clearance, Metrics};
pub use run::{run_repeat, run_teach, RepeatRun, REPEAT_STREAM, TEACH_STREAM};
pub use scenario::{
    builtin, corridor_scenario, corridor_world, dynamic_corridor_scenario, load_scenario, parse_scenario, s_curve_scenario,
    save_scenario, scenario_to_string, straight_scenario, DriveConfig, PlannerSettings, Scenario, TeachWaypoint,
    TickRange, WorldRef, BUILTIN_NAMES, SCENARIO_SCHEMA, SCENARIO_VERSION,
};

use crate::perception::PerceptionError;
use crate::planner::PlannerError;
use crate::teach::{MapError, TeachError};
use crate::world::WorldError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("invalid map: {0}")]
    InvalidMap(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("unsupported file version {found}")]
    VersionMismatch { found: String },
    #[error(transparent)]
    World(#[from] WorldError),
    #[error("teach failed: {0}")]
    Teach(#[from] TeachError),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Planner(#[from] PlannerError),
    #[error(transparent)]
    Perception(#[from] PerceptionError),
}

impl HarnessError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.display().to_string(), source }
    }
}

/// Strips and checks the `schema` and `version` tags of a versioned file.
pub(crate) fn check_tags(value: &mut Value, schema: &str, version: u32) -> Result<(), HarnessError> {
    let obj = value.as_object_mut().ok_or_else(|| HarnessError::Schema("top level must be an object".into()))?;
    match obj.remove("schema") {
        Some(Value::String(s)) if s == schema => {}
        other => return Err(HarnessError::Schema(format!("missing or wrong schema tag: {other:?}"))),
    }
    match obj.remove("version") {
        Some(v) if v.as_u64() == Some(version as u64) => Ok(()),
        Some(v) => Err(HarnessError::VersionMismatch { found: v.to_string() }),
        None => Err(HarnessError::Schema("missing version".into())),
    }
}
