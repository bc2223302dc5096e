use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(format!("{name}.toml"))
}

fn gfcsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gfcsim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn shipped_scenarios_validate() {
    for entry in fs::read_dir(scenario("x").parent().unwrap()).unwrap() {
        let path = entry.unwrap().path();
        let o = gfcsim(&["validate", "--scenario", s(&path)]);
        assert_eq!(code(&o), 0, "{}: {}", path.display(), String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn empty_scenario_is_a_syntax_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.toml");
    fs::write(&path, "").unwrap();
    let o = gfcsim(&["validate", "--scenario", s(&path)]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("syntax error"));
}

#[test]
fn collapse_run_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = gfcsim(&["run", "--scenario", s(&scenario("ieee9_vsg_collapse")), "--out", s(&out)]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    let m = json(&out.join("metrics.json"));
    assert_eq!(m["summary"]["collapsed"], true);
    for f in ["waveforms.csv", "resolved.json", "v_dc.svg", "i_dc.svg", "omega.svg", "p.svg"] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn feedback_run_is_clean_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let o = gfcsim(&["run", "--scenario", s(&scenario("ieee9_vsg_feedback")), "--out", s(&a)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(json(&a.join("metrics.json"))["summary"]["collapsed"], false);

    let o = gfcsim(&["run", "--scenario", s(&a.join("resolved.json")), "--out", s(&b)]);
    assert_eq!(code(&o), 0);
    assert_eq!(
        fs::read(a.join("waveforms.csv")).unwrap(),
        fs::read(b.join("waveforms.csv")).unwrap()
    );
    assert_eq!(json(&a.join("resolved.json")), json(&b.join("resolved.json")));
}

#[test]
fn bad_override_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = gfcsim(&[
        "run",
        "--scenario",
        s(&scenario("ieee9_vsg_feedback")),
        "--out",
        s(&out),
        "--set",
        "gfc1.controller.no_such_gain=1",
    ]);
    assert_eq!(code(&o), 1);
    assert!(!out.exists());
}

#[test]
fn override_provenance_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = gfcsim(&[
        "run",
        "--scenario",
        s(&scenario("ieee9_vsg_feedback")),
        "--out",
        s(&out),
        "--set",
        "simulation.t_end=0.1",
    ]);
    assert_eq!(code(&o), 0);
    let r = json(&out.join("resolved.json"));
    assert_eq!(r["provenance"]["simulation.t_end"], "override");
    assert_eq!(r["provenance"]["gfc.gfc1.controller.j"], "paper");
    assert_eq!(r["provenance"]["gfc.gfc1.controller.alpha"], "scenario");
}

#[test]
fn alpha_sweep_keeps_every_run_alive() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    let o = Command::new(env!("CARGO_BIN_EXE_gfcsim"))
        .args([
            "sweep",
            "--scenario",
            s(&scenario("ieee9_droop_feedback")),
            "--out",
            s(&out),
            "--sweep",
            "gfc.*.controller.alpha=0.25,0.5,0.75",
        ])
        .env("GFCSIM_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    let rows: Vec<&str> = summary.lines().skip(1).collect();
    assert_eq!(rows.len(), 3);
    for (row, v) in rows.iter().zip(["0.25", "0.5", "0.75"]) {
        let f: Vec<&str> = row.split(',').collect();
        assert_eq!(f[0], v);
        assert_eq!(f[1], "false");
    }
}

#[test]
fn single_point_sweep_matches_run() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let sweep = dir.path().join("sweep");
    let sc = scenario("ieee9_vsg_collapse");
    let o = gfcsim(&["run", "--scenario", s(&sc), "--out", s(&run), "--set", "gfc.*.controller.alpha=1.0"]);
    assert_eq!(code(&o), 2);
    let o = gfcsim(&["sweep", "--scenario", s(&sc), "--out", s(&sweep), "--sweep", "gfc.*.controller.alpha=1.0"]);
    assert_eq!(code(&o), 2);
    assert_eq!(
        fs::read(run.join("waveforms.csv")).unwrap(),
        fs::read(sweep.join("run0/waveforms.csv")).unwrap()
    );
    let summary = fs::read_to_string(sweep.join("summary.csv")).unwrap();
    assert!(summary.lines().nth(1).unwrap().starts_with("1.0,true,"));
}

#[test]
fn empty_sweep_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = gfcsim(&[
        "sweep",
        "--scenario",
        s(&scenario("ieee9_vsg_feedback")),
        "--out",
        s(dir.path()),
        "--sweep",
        "gfc.*.controller.alpha=",
    ]);
    assert_eq!(code(&o), 1);
    let o = gfcsim(&["frobnicate"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn plot_command() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let o = gfcsim(&[
        "run",
        "--scenario",
        s(&scenario("ieee9_vsg_feedback")),
        "--out",
        s(&run),
        "--set",
        "simulation.t_end=1.5",
    ]);
    assert_eq!(code(&o), 0);
    let csv = run.join("waveforms.csv");
    let p1 = dir.path().join("p1");
    let p2 = dir.path().join("p2");
    for p in [&p1, &p2] {
        let o = gfcsim(&["plot", s(&csv), "--out", s(p), "--channels", "v_dc,i_dc"]);
        assert_eq!(code(&o), 0);
    }
    let mut files: Vec<String> = fs::read_dir(&p1)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    files.sort();
    assert_eq!(files, ["i_dc.svg", "v_dc.svg"]);
    for f in &files {
        assert_eq!(fs::read(p1.join(f)).unwrap(), fs::read(p2.join(f)).unwrap());
    }

    let all = dir.path().join("all");
    let o = gfcsim(&["plot", s(&csv), "--out", s(&all)]);
    assert_eq!(code(&o), 0);
    assert!(fs::read_dir(&all).unwrap().count() > 5);

    let o = gfcsim(&["plot", s(&csv), "--channels", "nonsense"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("gfc1.v_dc"));
}
