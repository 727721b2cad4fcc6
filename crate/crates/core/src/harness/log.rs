//! Line-oriented run logs: a header line, one line per control tick, an end line.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::geometry::{Pose2, VelocityCommand};
use crate::tracker::{MovementDistribution, MovementEvent, TrackStatus};

pub const LOG_SCHEMA: &str = "flowvtr-run-log";
pub const LOG_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Teach,
    Repeat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub schema: String,
    pub version: u32,
    pub phase: Phase,
    pub scenario: String,
    pub rng_seed: u64,
    pub dt: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TeachTelemetry {
    pub flow: Option<f64>,
    pub inliers: usize,
    pub emitted: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackerTelemetry {
    pub status: TrackStatus,
    pub tracked_index: usize,
    pub flow_l: Option<f64>,
    pub flow_l1: Option<f64>,
    pub inliers_l: usize,
    pub inliers_l1: usize,
    pub scale_l: Option<f64>,
    pub event: Option<MovementEvent>,
    pub probabilities: Option<MovementDistribution>,
    /// Local loop detection ran on this tick.
    pub loop_search: bool,
    /// The frame was blanked by a forced dropout window.
    pub forced_dropout: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub tick: u64,
    pub time: f64,
    /// Ground-truth pose at `time`, before the command is applied.
    pub pose: Pose2,
    pub command: VelocityCommand,
    /// Distance from the robot's edge to the nearest obstacle; absent in an empty world.
    pub clearance: Option<f64>,
    pub features: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub teach: Option<TeachTelemetry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tracker: Option<TrackerTelemetry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feasible: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path_id: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndReason {
    /// Teach reached the last waypoint.
    PathEnd,
    /// Repeat reached the last keyframe.
    Finished,
    DurationLimit,
    Collision,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EndRecord {
    pub ticks: u64,
    pub time: f64,
    pub pose: Pose2,
    pub clearance: Option<f64>,
    pub reason: EndReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Line {
    Header(LogHeader),
    Tick(TickRecord),
    End(EndRecord),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub header: LogHeader,
    pub ticks: Vec<TickRecord>,
    pub end: EndRecord,
}

impl RunLog {
    pub fn final_pose(&self) -> Pose2 {
        self.end.pose
    }

    /// Ticks at which teach emitted a keyframe, indexed by keyframe id.
    pub fn keyframe_ticks(&self) -> Vec<u64> {
        let mut out = Vec::new();
        for r in &self.ticks {
            if let Some(id) = r.teach.and_then(|t| t.emitted) {
                if id == out.len() {
                    out.push(r.tick);
                }
            }
        }
        out
    }

    pub fn to_text(&self) -> Result<String, HarnessError> {
        let mut out = String::new();
        let line = |l: &Line| serde_json::to_string(l).map_err(|e| HarnessError::Schema(e.to_string()));
        writeln!(out, "{}", line(&Line::Header(self.header.clone()))?).expect("string write");
        for t in &self.ticks {
            writeln!(out, "{}", line(&Line::Tick(*t))?).expect("string write");
        }
        writeln!(out, "{}", line(&Line::End(self.end))?).expect("string write");
        Ok(out)
    }

    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let mut header = None;
        let mut ticks: Vec<TickRecord> = Vec::new();
        let mut end = None;
        for (n, raw) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let bad = |m: String| HarnessError::Schema(format!("log line {}: {m}", n + 1));
            if end.is_some() {
                return Err(bad("content after end record".into()));
            }
            let line: Line = serde_json::from_str(raw).map_err(|e| bad(e.to_string()))?;
            match line {
                Line::Header(h) => {
                    if header.is_some() || !ticks.is_empty() {
                        return Err(bad("header must be the first line".into()));
                    }
                    if h.schema != LOG_SCHEMA {
                        return Err(bad(format!("unexpected schema {:?}", h.schema)));
                    }
                    if h.version != LOG_VERSION {
                        return Err(HarnessError::VersionMismatch { found: h.version.to_string() });
                    }
                    header = Some(h);
                }
                Line::Tick(t) => {
                    if header.is_none() {
                        return Err(bad("tick before header".into()));
                    }
                    if ticks.last().is_some_and(|p| t.tick <= p.tick) {
                        return Err(bad("ticks must be strictly increasing".into()));
                    }
                    ticks.push(t);
                }
                Line::End(e) => end = Some(e),
            }
        }
        let header = header.ok_or_else(|| HarnessError::Schema("log has no header".into()))?;
        let end = end.ok_or_else(|| HarnessError::Schema("log has no end record (incomplete run?)".into()))?;
        Ok(Self { header, ticks, end })
    }

    pub fn save(&self, path: &Path) -> Result<(), HarnessError> {
        fs::write(path, self.to_text()?).map_err(|e| HarnessError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::parse(&text)
    }
}

/// One row of the tracking trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub tick: u64,
    pub tracked_index: Option<usize>,
    pub flow_l: Option<f64>,
    pub flow_l1: Option<f64>,
    pub inliers_l: Option<usize>,
    pub inliers_l1: Option<usize>,
    pub event: Option<MovementEvent>,
    pub p_straight: Option<f64>,
    pub p_left: Option<f64>,
    pub p_right: Option<f64>,
}

pub fn trace_rows(log: &RunLog) -> Vec<TraceRow> {
    log.ticks
        .iter()
        .map(|r| {
            let t = r.tracker.as_ref();
            let p = t.and_then(|t| t.probabilities);
            TraceRow {
                tick: r.tick,
                tracked_index: t.map(|t| t.tracked_index),
                flow_l: t.and_then(|t| t.flow_l),
                flow_l1: t.and_then(|t| t.flow_l1),
                inliers_l: t.map(|t| t.inliers_l),
                inliers_l1: t.map(|t| t.inliers_l1),
                event: t.and_then(|t| t.event),
                p_straight: p.map(|p| p.p_straight),
                p_left: p.map(|p| p.p_left),
                p_right: p.map(|p| p.p_right),
            }
        })
        .collect()
}
