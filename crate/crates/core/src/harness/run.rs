//! Teach and repeat control loops.

use std::time::Instant;

use super::log::{EndReason, EndRecord, LogHeader, Phase, RunLog, TeachTelemetry, TickRecord, TrackerTelemetry, LOG_SCHEMA, LOG_VERSION};
use super::metrics::{evaluate_against, Metrics};
use super::scenario::Scenario;
use super::HarnessError;
use crate::geometry::{step_unicycle, Pose2, VelocityCommand};
use crate::lidar::raycast_scan;
use crate::perception::{observe, Frame};
use crate::planner::{build_grid, filter_collisions, generate_library, select_command};
use crate::teach::{KeyframeMap, TeachBuilder};
use crate::tracker::{movement_probabilities, select_goal, TrackStatus, TrackerState};
use crate::world::{mix_seed, World};

/// Noise stream of teach frames, mixed with the scenario seed.
pub const TEACH_STREAM: u64 = 1;
/// Noise stream of repeat frames, mixed with the scenario seed.
pub const REPEAT_STREAM: u64 = 2;

/// Remaining path length (m) at which teach stops.
const ARRIVAL_TOLERANCE: f64 = 0.01;

fn header(scenario: &Scenario, phase: Phase) -> LogHeader {
    LogHeader {
        schema: LOG_SCHEMA.into(),
        version: LOG_VERSION,
        phase,
        scenario: scenario.name.clone(),
        rng_seed: scenario.rng_seed,
        dt: scenario.dt(),
    }
}

fn clearance(world: &World, pose: &Pose2, t: f64, robot_radius: f64) -> Option<f64> {
    (!world.obstacles.is_empty()).then(|| world.obstacles.clearance(pose.x, pose.y, t) - robot_radius)
}

/// Waypoint polyline with arc-length bookkeeping.
struct TeachPath {
    points: Vec<(f64, f64)>,
    speeds: Vec<f64>,
    /// Arc length at each point.
    cumulative: Vec<f64>,
}

impl TeachPath {
    fn new(scenario: &Scenario) -> Self {
        let points: Vec<_> = scenario.waypoints.iter().map(|w| (w.pose.x, w.pose.y)).collect();
        let speeds = scenario.waypoints.iter().map(|w| w.speed).collect();
        let mut cumulative = vec![0.0];
        for w in points.windows(2) {
            let l = (w[1].0 - w[0].0).hypot(w[1].1 - w[0].1);
            cumulative.push(cumulative.last().unwrap() + l);
        }
        Self { points, speeds, cumulative }
    }

    fn length(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    /// Closest arc length to `(x, y)` on segments `from..from + 4`.
    fn project(&self, x: f64, y: f64, from: usize) -> (f64, usize) {
        let mut best = (f64::INFINITY, self.cumulative[from], from);
        for i in from..(from + 4).min(self.points.len() - 1) {
            let (a, b) = (self.points[i], self.points[i + 1]);
            let (dx, dy) = (b.0 - a.0, b.1 - a.1);
            let l2 = dx * dx + dy * dy;
            let s = if l2 > 0.0 { (((x - a.0) * dx + (y - a.1) * dy) / l2).clamp(0.0, 1.0) } else { 0.0 };
            let d = (a.0 + s * dx - x).hypot(a.1 + s * dy - y);
            if d < best.0 {
                best = (d, self.cumulative[i] + s * l2.sqrt(), i);
            }
        }
        (best.1, best.2)
    }

    fn point_at(&self, s: f64) -> (f64, f64) {
        let s = s.clamp(0.0, self.length());
        let i = self.cumulative.partition_point(|&c| c <= s).clamp(1, self.points.len() - 1) - 1;
        let l = self.cumulative[i + 1] - self.cumulative[i];
        let f = if l > 0.0 { (s - self.cumulative[i]) / l } else { 0.0 };
        let (a, b) = (self.points[i], self.points[i + 1]);
        (a.0 + f * (b.0 - a.0), a.1 + f * (b.1 - a.1))
    }

    fn speed_on(&self, segment: usize) -> f64 {
        self.speeds[(segment + 1).min(self.speeds.len() - 1)]
    }
}

/// Drives the waypoint route with pure pursuit while building the keyframe map.
pub fn run_teach(scenario: &Scenario, world: &World) -> Result<(KeyframeMap, RunLog), HarnessError> {
    scenario.validate()?;
    let dt = scenario.dt();
    let mut world = world.clone();
    world.noise.rng_seed = mix_seed(scenario.rng_seed, TEACH_STREAM);
    let radius = scenario.planner.grid.robot_radius;
    let drive = scenario.drive;
    let path = TeachPath::new(scenario);
    let mut builder = TeachBuilder::new(world.intrinsics, scenario.teach);
    let mut pose = scenario.start_pose();
    let (mut progress, mut segment) = (0.0f64, 0usize);
    let mut ticks = Vec::new();
    let mut tick = 0u64;
    let reason = loop {
        let t = tick as f64 * dt;
        let (s, seg) = path.project(pose.x, pose.y, segment);
        if s >= progress {
            (progress, segment) = (s, seg);
        }
        let remaining = path.length() - progress;
        let arrived = remaining <= ARRIVAL_TOLERANCE;
        let out_of_time = t > scenario.duration_limit;

        let frame = observe(&world, &pose, t, tick);
        let features = frame.len();
        let step = builder.process_frame(frame)?;
        let command = if arrived || out_of_time {
            VelocityCommand::stop()
        } else {
            let (gx, gy) = path.point_at(progress + drive.lookahead);
            let (lx, ly) = pose.to_local(gx, gy);
            let d2 = lx * lx + ly * ly;
            let v = path.speed_on(segment).min(remaining / dt);
            let kappa = if d2 > 0.0 { 2.0 * ly / d2 } else { 0.0 };
            VelocityCommand::new(v, (v * kappa).clamp(-drive.teach_omega_max, drive.teach_omega_max))
        };
        ticks.push(TickRecord {
            tick,
            time: t,
            pose,
            command,
            clearance: clearance(&world, &pose, t, radius),
            features,
            teach: Some(TeachTelemetry { flow: step.flow, inliers: step.inliers, emitted: step.emitted }),
            tracker: None,
            feasible: None,
            path_id: None,
        });
        if arrived {
            break EndReason::PathEnd;
        }
        if out_of_time {
            break EndReason::DurationLimit;
        }
        pose = step_unicycle(&pose, &command, dt);
        tick += 1;
    };
    let before = builder.keyframes().last().map(|k| k.features.clone());
    let map = builder.finalize()?;
    if before.as_ref() != map.keyframes.last().map(|k| &k.features) {
        // the final frame became the last keyframe, appended or replacing
        let last = map.last_index();
        for r in ticks.iter_mut().filter_map(|r| r.teach.as_mut()) {
            if r.emitted == Some(last) {
                r.emitted = None;
            }
        }
        if let Some(t) = ticks.last_mut().and_then(|r| r.teach.as_mut()) {
            t.emitted = Some(last);
        }
    }
    let last = ticks.last().expect("at least one tick");
    let end = EndRecord { ticks: ticks.len() as u64, time: last.time, pose: last.pose, clearance: last.clearance, reason };
    Ok((map, RunLog { header: header(scenario, Phase::Teach), ticks, end }))
}

/// Outcome of a repeat run.
#[derive(Debug, Clone)]
pub struct RepeatRun {
    pub log: RunLog,
    pub metrics: Metrics,
}

/// Repeats the taught route from the teach start pose.
///
/// Each tick observes, tracks, maps the movement event to a local goal, plans
/// against a fresh range scan and applies the chosen command. Metrics are
/// measured against the last teach waypoint.
pub fn run_repeat(map: &KeyframeMap, scenario: &Scenario, world: &World) -> Result<RepeatRun, HarnessError> {
    scenario.validate()?;
    map.validate().map_err(|e| HarnessError::InvalidMap(e.to_string()))?;
    let dt = scenario.dt();
    let mut world = world.with_dynamic(&scenario.repeat_dynamic);
    world.noise.rng_seed = mix_seed(scenario.rng_seed, REPEAT_STREAM);
    let planner = &scenario.planner;
    let radius = planner.grid.robot_radius;
    let library = generate_library(&planner.library)?;
    let speed_ratio = scenario.drive.cruise_speed / planner.library.speed;

    let mut state = TrackerState::new();
    let mut pose = scenario.start_pose();
    let mut ticks = Vec::new();
    let mut tick_time = 0.0;
    let mut tick = 0u64;
    let reason = loop {
        let t = tick as f64 * dt;
        let c = clearance(&world, &pose, t, radius);
        if c.is_some_and(|c| c <= 0.0) {
            break EndReason::Collision;
        }
        if t > scenario.duration_limit {
            break EndReason::DurationLimit;
        }
        let started = Instant::now();
        let forced_dropout = scenario.dropout.iter().any(|r| r.contains(tick));
        let frame = if forced_dropout { Frame::empty(tick, t) } else { observe(&world, &pose, t, tick) };
        let outcome = state.track(&frame, map, &scenario.tracker);
        let finished = state.check_finished(outcome.window.as_ref(), map, &scenario.tracker);

        let mut telemetry = TrackerTelemetry {
            status: state.status,
            tracked_index: state.tracked_index,
            flow_l: None,
            flow_l1: None,
            inliers_l: state.last_inlier_counts.0,
            inliers_l1: state.last_inlier_counts.1.unwrap_or(0),
            scale_l: None,
            event: None,
            probabilities: None,
            loop_search: outcome.loop_search.is_some(),
            forced_dropout,
        };
        let (mut command, mut feasible, mut path_id) = (VelocityCommand::stop(), None, None);
        if let (Some(w), false, TrackStatus::Tracking) = (outcome.window, finished, state.status) {
            let dist = movement_probabilities(&w, &scenario.tracker);
            telemetry.flow_l = Some(w.f_l);
            telemetry.flow_l1 = w.f_l1;
            telemetry.inliers_l = w.inliers_l;
            telemetry.inliers_l1 = w.inliers_l1;
            telemetry.scale_l = w.scale_l;
            telemetry.event = Some(dist.argmax());
            telemetry.probabilities = Some(dist);
            let scan = raycast_scan(&world.obstacles, &pose, t, planner.beam_count, planner.max_range)?;
            let grid = build_grid(&scan, &planner.grid);
            let candidates = filter_collisions(&library, &grid);
            let selection = select_command(&candidates, select_goal(&dist));
            feasible = Some(candidates.len());
            path_id = selection.path_id;
            if !selection.command.is_stop() {
                command = VelocityCommand::new(
                    selection.command.linear * speed_ratio,
                    selection.command.angular * speed_ratio,
                );
            }
        }
        tick_time += started.elapsed().as_secs_f64();
        ticks.push(TickRecord {
            tick,
            time: t,
            pose,
            command,
            clearance: c,
            features: frame.len(),
            teach: None,
            tracker: Some(telemetry),
            feasible,
            path_id,
        });
        if finished {
            break EndReason::Finished;
        }
        pose = step_unicycle(&pose, &command, dt);
        tick += 1;
    };
    let t_end = tick as f64 * dt;
    let end = EndRecord {
        ticks: ticks.len() as u64,
        time: t_end,
        pose,
        clearance: clearance(&world, &pose, t_end, radius),
        reason,
    };
    let log = RunLog { header: header(scenario, Phase::Repeat), ticks, end };
    let goal = scenario.waypoints.last().expect("validated").pose;
    let mut metrics = evaluate_against(&log, &goal);
    if !log.ticks.is_empty() {
        metrics.mean_tick_ms = Some(1e3 * tick_time / log.ticks.len() as f64);
    }
    Ok(RepeatRun { log, metrics })
}

