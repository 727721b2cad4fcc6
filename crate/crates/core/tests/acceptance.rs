mod common;

use std::f64::consts::{FRAC_PI_4, PI};
use std::path::Path;
use std::time::Instant;

use flowvtr::geometry::{predict_rotation_shift, CameraIntrinsics, CameraMount, Landmark, Point3, Pose2};
use flowvtr::harness::{
    corridor_scenario, dynamic_corridor_scenario, run_repeat, run_teach, s_curve_scenario, straight_scenario, RepeatRun,
    RunLog, Scenario, TickRange, WorldRef,
};
use flowvtr::perception::{feature_flow, match_frames, observe, MatchConfig};
use flowvtr::planner::{
    build_grid, filter_collisions, generate_library, parse_library, library_to_string, score_from_gap, GridConfig,
    LibraryConfig,
};
use flowvtr::teach::{parse_map, KeyframeMap};
use flowvtr::tracker::{movement_probabilities, movement_scores, FlowWindow, TrackStatus, TrackerConfig};
use flowvtr::world::{Disc, NoiseConfig, ObstacleWorld, World};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Report {
    lines: Vec<(String, bool)>,
}

impl Report {
    fn check(&mut self, name: &str, pass: bool, detail: String) {
        println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        self.lines.push((name.to_string(), pass));
    }
}

fn noiseless_world(landmarks: Vec<Landmark>) -> World {
    World::new(CameraIntrinsics::default(), CameraMount::default(), landmarks, ObstacleWorld::default(), NoiseConfig::noiseless(), 5)
        .unwrap()
}

fn flow_between(world: &World, query: &Pose2, reference: &Pose2) -> f64 {
    let q = observe(world, query, 0.0, 1);
    let r = observe(world, reference, 0.0, 0);
    feature_flow(&match_frames(&q, &r, &MatchConfig::default())).unwrap().flow
}

fn rule_one(report: &mut Report) {
    let start = Instant::now();
    let mut lms = Vec::new();
    for i in 0..40u64 {
        let depth = 4.0 + i as f64 * 0.4;
        let lateral = 0.3 + (i % 7) as f64 * 0.2;
        let h = 0.4 + (i % 5) as f64 * 0.3;
        lms.push(Landmark { id: 2 * i, position: Point3::new(depth, lateral, h) });
        lms.push(Landmark { id: 2 * i + 1, position: Point3::new(depth, -lateral, h) });
    }
    let w = noiseless_world(lms);
    let f = flow_between(&w, &Pose2::new(0.5, 0.0, 0.0), &Pose2::default());
    let secs = start.elapsed().as_secs_f64();
    report.check("1 straight motion flow", f.abs() <= 1.0 && secs < 1.0, format!("|flow| = {:.4} px, {secs:.3} s", f.abs()));
}

fn rule_two(report: &mut Report) {
    let start = Instant::now();
    let lms: Vec<Landmark> = (0..60)
        .map(|i| {
            let depth = 20.0 + (i % 10) as f64 * 3.0;
            // keep |x/z| <= 0.2 from every rotated viewpoint
            let ratio = -0.09 + 0.18 * (i as f64 / 59.0);
            Landmark { id: i, position: Point3::new(depth, ratio * depth, 0.3 + (i % 5) as f64 * 0.35) }
        })
        .collect();
    let w = noiseless_world(lms);
    let k = CameraIntrinsics::default();
    let mut worst: f64 = 0.0;
    let mut signs = true;
    for theta in [0.05, -0.05, 0.10, -0.10] {
        let f = flow_between(&w, &Pose2::new(0.0, 0.0, theta), &Pose2::default());
        let expected = predict_rotation_shift(&k, theta);
        worst = worst.max((f - expected).abs() / expected.abs());
        signs &= f.signum() == theta.signum();
    }
    let secs = start.elapsed().as_secs_f64();
    report.check(
        "2 rotation flow",
        worst <= 0.05 && signs && secs < 1.0,
        format!("worst relative error {:.4}, signs ok {signs}, {secs:.3} s", worst),
    );
}

fn probabilities(report: &mut Report) {
    let cfg = TrackerConfig::default();
    let window = |f_l: f64, f_l1: f64| FlowWindow { f_l, inliers_l: 50, f_l1: Some(f_l1), inliers_l1: 50, scale_l: None };
    let e2 = (-2.0f64).exp();
    let examples: [((f64, f64), [f64; 3]); 3] = [
        ((0.0, 0.0), [1.0, 0.0, 0.0]),
        ((40.0, 40.0), [e2, 1.0 - e2, 0.0]),
        ((-30.0, 10.0), [0.586164709708024477, 0.0550843506678920826, 0.358750939624083440]),
    ];
    let mut examples_err: f64 = 0.0;
    for ((a, b), want) in examples {
        let d = movement_probabilities(&window(a, b), &cfg);
        for (got, want) in [d.p_straight, d.p_left, d.p_right].into_iter().zip(want) {
            examples_err = examples_err.max((got - want).abs());
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let omega = 1.0 + (-1.0f64 / 8.0).exp();
    let (mut sum_err, mut antisymmetric, mut monotone): (f64, bool, bool) = (0.0, true, true);
    for _ in 0..1000 {
        let (a, b) = (rng.random_range(-120.0..120.0), rng.random_range(-120.0..120.0));
        let (s, l, r) = movement_scores(&window(a, b), &cfg);
        sum_err = sum_err.max((s + l + r - omega).abs());

        let d = movement_probabilities(&window(a, b), &cfg);
        let m = movement_probabilities(&window(-a, -b), &cfg);
        antisymmetric &= (d.p_left - m.p_right).abs() < 1e-12
            && (d.p_right - m.p_left).abs() < 1e-12
            && (d.p_straight - m.p_straight).abs() < 1e-12;

        let (lo, hi) = if a.abs() < b.abs() { (a, b) } else { (b, a) };
        let p_lo = movement_probabilities(&window(lo, 0.0), &cfg).p_straight;
        let p_hi = movement_probabilities(&window(hi, 0.0), &cfg).p_straight;
        monotone &= p_hi <= p_lo + 1e-15;
    }
    report.check(
        "3 movement probabilities",
        examples_err <= 1e-9 && sum_err <= 1e-12 && antisymmetric && monotone,
        format!("example error {examples_err:.2e}, score sum error {sum_err:.2e}, antisymmetric {antisymmetric}, monotone {monotone}"),
    );
}

fn alignment_score(report: &mut Report) {
    let want = [(0.0, 1.0), (FRAC_PI_4, 0.749668805647847770), (PI, 0.645978229862131183)];
    let err = want.iter().map(|&(t, s)| (score_from_gap(t) - s).abs()).fold(0.0, f64::max);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut strict = true;
    for _ in 0..1000 {
        let (a, b) = (rng.random_range(0.0..PI), rng.random_range(0.0..PI));
        if a != b {
            strict &= (a < b) == (score_from_gap(a) > score_from_gap(b));
        }
    }
    report.check("4 alignment score", err <= 1e-9 && strict, format!("value error {err:.2e}, strictly decreasing {strict}"));
}

fn teach_and_repeat(s: &Scenario) -> (KeyframeMap, RunLog, RepeatRun, f64) {
    let world = s.resolve_world(Path::new(".")).unwrap();
    let (map, teach) = run_teach(s, &world).unwrap();
    let start = Instant::now();
    let run = run_repeat(&map, s, &world).unwrap();
    (map, teach, run, start.elapsed().as_secs_f64())
}

fn static_repeat(report: &mut Report) {
    let mut completed = 0;
    let mut worst_epd: f64 = 0.0;
    let mut slowest: f64 = 0.0;
    let mut runs = 0;
    for make in [corridor_scenario, s_curve_scenario, straight_scenario] {
        for seed in 1..=5 {
            let s = make(seed);
            let (_, _, run, secs) = teach_and_repeat(&s);
            let m = &run.metrics;
            println!("     {} seed {seed}: completed {} epd {:.3} m, {secs:.2} s", s.name, m.path_completed, m.end_point_distance);
            runs += 1;
            slowest = slowest.max(secs);
            if m.path_completed {
                completed += 1;
                worst_epd = worst_epd.max(m.end_point_distance);
            }
        }
    }
    report.check(
        "5 static repeat",
        completed >= 14 && worst_epd <= 0.5 && slowest <= 60.0,
        format!("{completed}/{runs} completed, worst end point distance {worst_epd:.3} m, slowest run {slowest:.2} s"),
    );
}

fn median(mut v: Vec<usize>) -> f64 {
    v.sort_unstable();
    v[v.len() / 2] as f64
}

fn dynamic_repeat(report: &mut Report) {
    let s = dynamic_corridor_scenario(1);
    let (_, _, run, _) = teach_and_repeat(&s);
    let m = &run.metrics;
    let inliers: Vec<usize> = run.log.ticks.iter().filter_map(|t| t.tracker.map(|r| r.inliers_l)).collect();
    let typical = median(inliers.clone());
    let collapse = inliers.iter().position(|&n| (n as f64) < 0.6 * typical);
    let recovery = collapse.and_then(|c| inliers[c..].iter().position(|&n| n as f64 >= 0.8 * typical).map(|r| c + r));
    let clearance = m.min_clearance.unwrap_or(f64::INFINITY);
    report.check(
        "6 dynamic obstacle repeat",
        !m.collision && clearance > 0.0 && m.path_completed && m.end_point_distance <= 1.0 && recovery.is_some(),
        format!(
            "min clearance {clearance:.3} m, completed {}, epd {:.3} m, median inliers {typical}, collapse at tick {collapse:?}, recovered at tick {recovery:?}",
            m.path_completed, m.end_point_distance
        ),
    );
}

fn nearest_keyframe(keyframe_poses: &[Pose2], pose: &Pose2) -> usize {
    let d = |k: &Pose2| k.distance_to(pose);
    (0..keyframe_poses.len()).min_by(|&a, &b| d(&keyframe_poses[a]).total_cmp(&d(&keyframe_poses[b]))).unwrap()
}

fn dropout_recovery(report: &mut Report) {
    let mut s = corridor_scenario(2);
    let (first, last) = (60, 79);
    s.dropout = vec![TickRange { start: first, end: last }];
    let (_, teach, run, _) = teach_and_repeat(&s);
    let keyframe_poses: Vec<Pose2> = teach.keyframe_ticks().iter().map(|&t| teach.ticks[t as usize].pose).collect();
    let status = |tick: u64| run.log.ticks[tick as usize].tracker.map(|t| t.status);

    let tracking_before = status(first - 1) == Some(TrackStatus::Tracking);
    let went_lost = (first..=last).any(|t| status(t) == Some(TrackStatus::Lost));
    let back = (last + 1..=last + 10).find(|&t| {
        let rec = &run.log.ticks[t as usize];
        let tr = rec.tracker.unwrap();
        tr.status == TrackStatus::Tracking && tr.tracked_index.abs_diff(nearest_keyframe(&keyframe_poses, &rec.pose)) <= 1
    });
    report.check(
        "7 tracking recovery",
        tracking_before && went_lost && back.is_some(),
        format!(
            "tracking before {tracking_before}, lost during dropout {went_lost}, correct index again at tick {back:?} (dropout ends {last}), run completed {}",
            run.metrics.path_completed
        ),
    );
}

fn planner_safety(report: &mut Report) {
    let library = generate_library(&LibraryConfig::default()).unwrap();
    let size_ok = library.len() == 2197;

    let mut s = straight_scenario(1);
    let WorldRef::Inline(spec) = &mut s.world else { unreachable!() };
    // posts 0.3 m apart: the camera sees between them, the inflated grid does not
    for k in -9..=9 {
        spec.obstacles.discs.push(Disc { x: 0.55, y: 0.3 * k as f64, radius: 0.05 });
    }
    s.duration_limit = 2.0;
    let world = s.resolve_world(Path::new(".")).unwrap();
    let taught = straight_scenario(1);
    let (map, _) = run_teach(&taught, &taught.resolve_world(Path::new(".")).unwrap()).unwrap();
    let run = run_repeat(&map, &s, &world).unwrap();
    let walled = run.log.ticks.iter().all(|t| t.feasible == Some(0) && t.command.is_stop());

    let cfg = GridConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut agree = 0;
    for _ in 0..100 {
        let scan = common::random_scan(&mut rng);
        let hits: Vec<_> = scan.hits().collect();
        let kept: Vec<usize> = filter_collisions(&library, &build_grid(&scan, &cfg)).iter().map(|c| c.path_id).collect();
        let expected: Vec<usize> = library
            .candidates
            .iter()
            .filter(|c| c.samples.iter().all(|p| !common::occupied(&hits, &cfg, p.x, p.y)))
            .map(|c| c.path_id)
            .collect();
        agree += usize::from(kept == expected);
    }
    report.check(
        "8 planner safety",
        size_ok && walled && agree == 100,
        format!("{} candidates, wall ahead stops every tick {walled}, oracle agreement {agree}/100", library.len()),
    );
}

fn determinism(report: &mut Report) {
    let s = s_curve_scenario(3);
    let (map_a, teach_a, run_a, _) = teach_and_repeat(&s);
    let (_, teach_b, run_b, _) = teach_and_repeat(&s);
    let logs = teach_a.to_text().unwrap() == teach_b.to_text().unwrap()
        && run_a.log.to_text().unwrap() == run_b.log.to_text().unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("map.json");
    flowvtr::teach::save_map(&map_a, &path).unwrap();
    let map_ok = flowvtr::teach::load_map(&path).unwrap() == map_a
        && parse_map(&std::fs::read_to_string(&path).unwrap()).unwrap() == map_a;

    let library = generate_library(&LibraryConfig::default()).unwrap();
    let lib_text = library_to_string(&library).unwrap();
    let lib_ok = parse_library(&lib_text).unwrap() == library
        && library_to_string(&generate_library(&LibraryConfig::default()).unwrap()).unwrap() == lib_text;
    report.check(
        "9 determinism",
        logs && map_ok && lib_ok,
        format!("byte-identical logs {logs}, map round trip {map_ok}, library round trip {lib_ok}"),
    );
}

fn main() {
    let mut report = Report { lines: Vec::new() };
    rule_one(&mut report);
    rule_two(&mut report);
    probabilities(&mut report);
    alignment_score(&mut report);
    static_repeat(&mut report);
    dynamic_repeat(&mut report);
    dropout_recovery(&mut report);
    planner_safety(&mut report);
    determinism(&mut report);
    let failed: Vec<&str> = report.lines.iter().filter(|(_, ok)| !ok).map(|(n, _)| n.as_str()).collect();
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
