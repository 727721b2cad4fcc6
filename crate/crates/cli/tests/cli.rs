use std::path::Path;
use std::process::{Command, Output};

fn flowvtr(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flowvtr")).current_dir(dir).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn straight_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(flowvtr(d, &["gen-scenario", "--name", "straight", "--seed", "2", "--out", "s.json"]).status.success());

    let teach = flowvtr(d, &["teach", "--scenario", "s.json", "--out", "map.json", "--log", "teach.jsonl"]);
    assert!(teach.status.success(), "{}", String::from_utf8_lossy(&teach.stderr));
    assert!(stdout(&teach).starts_with("keyframes "));

    let repeat = flowvtr(d, &["repeat", "--map", "map.json", "--scenario", "s.json", "--out", "repeat.jsonl"]);
    assert!(repeat.status.success(), "{}", String::from_utf8_lossy(&repeat.stderr));
    let text = stdout(&repeat);
    assert!(text.contains("path_completed true"), "{text}");
    assert!(text.contains("collision false"), "{text}");

    let eval = flowvtr(d, &["eval", "--repeat", "repeat.jsonl", "--teach", "teach.jsonl"]);
    assert!(eval.status.success());
    let epd: f64 = stdout(&eval)
        .lines()
        .find_map(|l| l.strip_prefix("end_point_distance "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(epd <= 0.5, "{epd}");

    let same = flowvtr(d, &["eval", "--repeat", "teach.jsonl", "--teach", "teach.jsonl"]);
    assert!(stdout(&same).contains("end_point_distance 0.000"));

    assert!(flowvtr(d, &["trace", "--log", "repeat.jsonl", "--out", "trace.csv"]).status.success());
    let csv = std::fs::read_to_string(d.join("trace.csv")).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "tick,tracked_index,flow_l,flow_l1,inliers_l,inliers_l1,event,p_straight,p_left,p_right"
    );
    assert!(csv.lines().count() > 10);
}

#[test]
fn library_generation_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let a = flowvtr(d, &["gen-traj-lib", "--out", "a.json"]);
    assert!(a.status.success());
    assert_eq!(stdout(&a).trim(), "candidates 2197");
    assert!(flowvtr(d, &["gen-traj-lib", "--out", "b.json"]).status.success());
    assert_eq!(std::fs::read(d.join("a.json")).unwrap(), std::fs::read(d.join("b.json")).unwrap());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(flowvtr(d, &["repeat", "--map"]).status.code(), Some(2));
    assert_eq!(flowvtr(d, &["gen-scenario", "--name", "maze", "--out", "x.json"]).status.code(), Some(2));

    assert!(flowvtr(d, &["gen-scenario", "--name", "straight", "--out", "s.json"]).status.success());
    let missing = flowvtr(d, &["repeat", "--map", "nope.json", "--scenario", "s.json", "--out", "r.jsonl"]);
    assert_eq!(missing.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&missing.stderr).starts_with("flowvtr: "));

    std::fs::write(d.join("bad.json"), "{\"schema\":\"something-else\",\"version\":1}").unwrap();
    let bad = flowvtr(d, &["repeat", "--map", "bad.json", "--scenario", "s.json", "--out", "r.jsonl"]);
    assert_eq!(bad.status.code(), Some(4));

    std::fs::write(d.join("junk.jsonl"), "not a log").unwrap();
    assert_eq!(flowvtr(d, &["eval", "--repeat", "junk.jsonl", "--teach", "junk.jsonl"]).status.code(), Some(4));
}
