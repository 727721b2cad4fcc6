//! Keyframe tracking during repeat and movement-event probabilities.

use serde::{Deserialize, Serialize};

use crate::perception::{feature_flow, match_features, vertical_scale, Frame, MatchConfig, MatchSet};
use crate::teach::KeyframeMap;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackerConfig {
    /// Below this many inliers against both tracked keyframes the tracker is lost.
    pub lost_inliers: usize,
    /// Half-width (keyframes) of the local loop search.
    pub loop_window: usize,
    /// Flow scale (px) of the movement scores.
    pub sigma: f64,
    /// Scale of the keyframe-distance weights.
    pub sigma_w: f64,
    /// Flow magnitude (px) under which the last keyframe counts as reached.
    /// Kept at `sigma`: smaller residual flows select the straight event, so
    /// the robot would never correct them.
    pub end_flow: f64,
    /// Vertical feature scale against the last keyframe required to finish;
    /// 1.0 means standing on the keyframe.
    pub end_scale: f64,
    pub matching: MatchConfig,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            lost_inliers: 15,
            loop_window: 5,
            sigma: 20.0,
            sigma_w: 2.0,
            end_flow: 20.0,
            end_scale: 0.98,
            matching: MatchConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackStatus {
    Tracking,
    Lost,
    Finished,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackerState {
    pub tracked_index: usize,
    pub status: TrackStatus,
    /// Inliers against the tracked keyframe and its successor in the last update.
    pub last_inlier_counts: (usize, Option<usize>),
    pub frames_since_ok: u32,
}

impl Default for TrackerState {
    fn default() -> Self {
        Self::new()
    }
}

/// Flows of the live frame against the tracked keyframe and the next one.
/// Positive flow asks for a left turn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowWindow {
    pub f_l: f64,
    pub inliers_l: usize,
    pub f_l1: Option<f64>,
    pub inliers_l1: usize,
    /// Vertical feature scale of the live frame relative to keyframe `l`.
    pub scale_l: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackOutcome {
    pub window: Option<FlowWindow>,
    /// Keyframe inlier counts gathered by local loop detection, if it ran.
    pub loop_search: Option<Vec<(usize, usize)>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MovementEvent {
    Straight,
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MovementDistribution {
    pub p_straight: f64,
    pub p_left: f64,
    pub p_right: f64,
}

impl MovementDistribution {
    /// Most probable event; ties prefer straight, then left.
    pub fn argmax(&self) -> MovementEvent {
        if self.p_straight >= self.p_left && self.p_straight >= self.p_right {
            MovementEvent::Straight
        } else if self.p_left >= self.p_right {
            MovementEvent::Left
        } else {
            MovementEvent::Right
        }
    }
}

// The keyframe is the query and the live frame the reference, so that
// positive flow means the keyframe view lies to the left.
fn match_keyframe(map: &KeyframeMap, index: usize, frame: &Frame, cfg: &TrackerConfig) -> MatchSet {
    match_features(&map.keyframes[index].features, &frame.observations, &cfg.matching)
}

impl TrackerState {
    /// Tracking keyframe 0, as at the start of a repeat run.
    pub fn new() -> Self {
        Self { tracked_index: 0, status: TrackStatus::Tracking, last_inlier_counts: (0, None), frames_since_ok: 0 }
    }

    /// Updates the tracked keyframe from a live frame.
    ///
    /// Matches against keyframes `l` and `l + 1` and keeps whichever has more
    /// inliers (ties keep `l`). When neither reaches `lost_inliers`, searches
    /// the keyframes within `loop_window` of `l` and recovers to the best one
    /// if it does.
    pub fn track(&mut self, frame: &Frame, map: &KeyframeMap, cfg: &TrackerConfig) -> TrackOutcome {
        debug_assert!(self.status != TrackStatus::Finished);
        let last = map.last_index();
        let l = self.tracked_index.min(last);
        let m_l = match_keyframe(map, l, frame, cfg);
        let m_next = (l < last).then(|| match_keyframe(map, l + 1, frame, cfg));
        let c_l = m_l.inlier_count();
        let c_next = m_next.as_ref().map_or(0, MatchSet::inlier_count);

        let (mut index, mut m_cur) = if c_next > c_l { (l + 1, m_next.clone().unwrap()) } else { (l, m_l) };
        let mut loop_search = None;

        if c_l.max(c_next) < cfg.lost_inliers {
            self.status = TrackStatus::Lost;
            let lo = l.saturating_sub(cfg.loop_window);
            let hi = (l + cfg.loop_window).min(last);
            let mut best: Option<(usize, MatchSet)> = None;
            let mut counts = Vec::with_capacity(hi - lo + 1);
            for i in lo..=hi {
                let m = match_keyframe(map, i, frame, cfg);
                counts.push((i, m.inlier_count()));
                // ties go to the keyframe closest to l, then the lower index
                let better = match &best {
                    None => true,
                    Some((j, bm)) => {
                        m.inlier_count() > bm.inlier_count()
                            || (m.inlier_count() == bm.inlier_count() && i.abs_diff(l) < j.abs_diff(l))
                    }
                };
                if better {
                    best = Some((i, m));
                }
            }
            loop_search = Some(counts);
            match best {
                Some((i, m)) if m.inlier_count() >= cfg.lost_inliers => {
                    index = i;
                    m_cur = m;
                    self.status = TrackStatus::Tracking;
                }
                _ => {}
            }
        } else {
            self.status = TrackStatus::Tracking;
        }

        if self.status == TrackStatus::Lost {
            self.frames_since_ok += 1;
            self.last_inlier_counts = (c_l, m_next.as_ref().map(MatchSet::inlier_count));
            return TrackOutcome { window: None, loop_search };
        }

        self.frames_since_ok = 0;
        self.tracked_index = index;
        let m_following = if index == l {
            m_next
        } else {
            (index < last).then(|| match_keyframe(map, index + 1, frame, cfg))
        };
        let f_l = feature_flow(&m_cur).expect("tracking implies matches");
        let f_l1 = m_following.as_ref().and_then(|m| feature_flow(m).ok());
        self.last_inlier_counts = (f_l.inliers, m_following.as_ref().map(MatchSet::inlier_count));
        let window = FlowWindow {
            f_l: f_l.flow,
            inliers_l: f_l.inliers,
            f_l1: f_l1.map(|f| f.flow),
            inliers_l1: f_l1.map_or(0, |f| f.inliers),
            scale_l: vertical_scale(&m_cur, &map.intrinsics),
        };
        TrackOutcome { window: Some(window), loop_search }
    }

    /// Marks the run finished once the last keyframe is reached.
    pub fn check_finished(&mut self, window: Option<&FlowWindow>, map: &KeyframeMap, cfg: &TrackerConfig) -> bool {
        if self.status != TrackStatus::Tracking || self.tracked_index != map.last_index() {
            return false;
        }
        let Some(w) = window else { return false };
        let reached = w.inliers_l >= cfg.lost_inliers
            && w.f_l.abs() <= cfg.end_flow
            && w.scale_l.is_some_and(|s| s >= cfg.end_scale);
        if reached {
            self.status = TrackStatus::Finished;
        }
        reached
    }
}

/// Weight of the `n`-th keyframe ahead of the tracked one.
pub fn window_weight(n: usize, sigma_w: f64) -> f64 {
    let n = n as f64;
    (-(n * n) / (2.0 * sigma_w * sigma_w)).exp()
}

/// Unnormalized event scores (straight, left, right).
pub fn movement_scores(window: &FlowWindow, cfg: &TrackerConfig) -> (f64, f64, f64) {
    let flows = std::iter::once(window.f_l).chain(window.f_l1);
    let mut scores = (0.0, 0.0, 0.0);
    for (n, f) in flows.enumerate() {
        let w = window_weight(n, cfg.sigma_w);
        let g = (-(f * f) / (2.0 * cfg.sigma * cfg.sigma)).exp();
        scores.0 += w * g;
        if f > 0.0 {
            scores.1 += w * (1.0 - g);
        } else if f < 0.0 {
            scores.2 += w * (1.0 - g);
        }
    }
    scores
}

pub fn movement_probabilities(window: &FlowWindow, cfg: &TrackerConfig) -> MovementDistribution {
    let (s, l, r) = movement_scores(window, cfg);
    let total = s + l + r;
    MovementDistribution { p_straight: s / total, p_left: l / total, p_right: r / total }
}

/// Local goal in the robot frame for the most probable event.
pub fn select_goal(dist: &MovementDistribution) -> (f64, f64) {
    goal_for(dist.argmax())
}

pub fn goal_for(event: MovementEvent) -> (f64, f64) {
    match event {
        MovementEvent::Straight => (1.0, 0.0),
        MovementEvent::Left => (1.0, 1.0),
        MovementEvent::Right => (1.0, -1.0),
    }
}
