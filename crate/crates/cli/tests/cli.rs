use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_inspect");

fn toy() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/toy_mission.json")
}

fn inspect(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn edited(f: impl FnOnce(&mut Value)) -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = json(&toy());
    f(&mut cfg);
    let path = dir.path().join("mission.json");
    fs::write(&path, serde_json::to_string(&cfg).unwrap()).unwrap();
    (dir, path)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn plan_then_check_agree() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = inspect(&["plan", s(&toy()), "--out", s(&out), "--max-iters", "200", "--margins"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report = json(&out.join("report.json"));
    for f in report["files"].as_array().unwrap() {
        assert!(out.join(f.as_str().unwrap()).exists(), "{f}");
    }
    let n = report["grid"]["n"].as_u64().unwrap() as usize;
    let rows = fs::read_to_string(out.join("trajectories.csv")).unwrap().lines().count() - 1;
    assert_eq!(rows, 2 * (n + 1));
    assert!(fs::read_to_string(out.join("margins.csv")).unwrap().starts_with("path,label,k,t,rho\n"));

    let checked = dir.path().join("check");
    let o = inspect(&[
        "check",
        s(&toy()),
        s(&out.join("trajectory_1.csv")),
        s(&out.join("trajectory_2.csv")),
        "--out",
        s(&checked),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let check = json(&checked.join("check.json"));
    let a = report["robustness"]["rho_smooth"].as_f64().unwrap();
    let b = check["robustness"]["rho_smooth"].as_f64().unwrap();
    assert!((a - b).abs() <= 1e-9, "{a} vs {b}");
    assert_eq!(report["robustness"]["rho"], check["robustness"]["rho"]);
}

#[test]
fn degenerate_box_exits_2() {
    let (_dir, path) = edited(|c| c["targets"][0]["hi"][0] = c["targets"][0]["lo"][0].clone());
    let o = inspect(&["plan", s(&path), "--out", s(&path.with_file_name("out"))]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("BOX_DEGENERATE"), "{}", stderr(&o));
}

#[test]
fn short_horizon_exits_3_with_bound() {
    let (_dir, path) = edited(|c| c["timing"]["TN"] = 10.0.into());
    let o = inspect(&["plan", s(&path), "--out", s(&path.with_file_name("out"))]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("minimal feasible TN = 37 s"), "{}", stderr(&o));
    let o = inspect(&["seed", s(&path), "--out", s(&path.with_file_name("out"))]);
    assert_eq!(code(&o), 3);
}

#[test]
fn check_rejects_obstacle_and_bad_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json(&toy());
    let n = (cfg["timing"]["TN"].as_f64().unwrap() / cfg["timing"]["Ts"].as_f64().unwrap()).round() as usize;
    let mut csv = String::from("t,vehicle,px,py,pz,vx,vy,vz,ax,ay,az\n");
    for k in 0..=n {
        let t = k as f64 * 0.5;
        csv.push_str(&format!("{t},1,10,10,3,0,0,0,0,0,0\n{t},2,18,2,1,0,0,0,0,0,0\n"));
    }
    let traj = dir.path().join("crash.csv");
    fs::write(&traj, csv).unwrap();
    let o = inspect(&["check", s(&toy()), s(&traj)]);
    assert_eq!(code(&o), 1);
    let text = String::from_utf8_lossy(&o.stdout);
    let safety = text.lines().find(|l| l.trim_start().starts_with("safety[1]")).unwrap();
    assert!(safety.split_whitespace().nth(1).unwrap().starts_with('-'), "{text}");

    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "").unwrap();
    assert_eq!(code(&inspect(&["check", s(&toy()), s(&empty)])), 2);
    let short = dir.path().join("short.csv");
    fs::write(&short, "t,vehicle,px,py,pz,vx,vy,vz,ax,ay,az\n0,1,2,2,1,0,0,0,0,0,0\n0,2,18,2,1,0,0,0,0,0,0\n").unwrap();
    assert_eq!(code(&inspect(&["check", s(&toy()), s(&short)])), 2);
}

#[test]
fn seed_dumps_routes() {
    let dir = tempfile::tempdir().unwrap();
    let o = inspect(&["seed", s(&toy()), "--out", s(dir.path())]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let routes = json(&dir.path().join("routes.json"));
    let covered: Vec<String> = routes["routing"]["routes"]
        .as_array()
        .unwrap()
        .iter()
        .flat_map(|r| r["nodes"].as_array().unwrap().clone())
        .filter_map(|n| n.as_str().filter(|n| !n.starts_with("depot")).map(str::to_string))
        .collect();
    let mut sorted = covered.clone();
    sorted.sort();
    assert_eq!(sorted, ["blade[1]", "target[1]", "target[2]"]);
    assert!(dir.path().join("edges.csv").exists());
}

#[test]
fn simulate_without_events_matches_plan() {
    let dir = tempfile::tempdir().unwrap();
    let events = dir.path().join("none.csv");
    fs::write(&events, "# no events\n").unwrap();
    let o = inspect(&["simulate", s(&toy()), s(&events), "--out", s(dir.path()), "--max-iters", "200"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report = json(&dir.path().join("report.json"));
    assert_eq!(report["verdict"], true);
    assert!(report["replans"].as_array().unwrap().is_empty());
    assert_eq!(
        fs::read_to_string(dir.path().join("trajectories.csv")).unwrap(),
        fs::read_to_string(dir.path().join("planned_trajectories.csv")).unwrap()
    );
}

#[test]
fn dropping_every_vehicle_exits_5() {
    let dir = tempfile::tempdir().unwrap();
    let events = dir.path().join("all.csv");
    fs::write(&events, "3,DROPOUT,1\n3,DROPOUT,2\n").unwrap();
    let o = inspect(&["simulate", s(&toy()), s(&events), "--out", s(dir.path()), "--max-iters", "50"]);
    assert_eq!(code(&o), 5, "{}", stderr(&o));
    assert!(stderr(&o).contains("no active vehicles"));
}

#[test]
fn bad_event_script_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let events = dir.path().join("bad.csv");
    fs::write(&events, "3,EXPLODE,1\n").unwrap();
    let o = inspect(&["simulate", s(&toy()), s(&events), "--out", s(dir.path())]);
    assert_eq!(code(&o), 2);
}

#[test]
fn plan_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = inspect(&["plan", s(&toy()), "--out", s(out), "--max-iters", "100", "--multi-start", "2"]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    for f in ["report.json", "trajectories.csv", "trajectory_1.csv", "trajectory_2.csv", "iterations.csv", "edges.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}
