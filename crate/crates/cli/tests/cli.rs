use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn evsched(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evsched"))
        .args(args)
        .env_remove("EVSCHED_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const ARTIFACTS: [&str; 4] = ["schedule.csv", "metrics.json", "trace.csv", "ledger.json"];

#[test]
fn gen_then_run_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let sc = dir.path().join("scenario.txt");
    assert!(evsched(&["gen", "--evs", "30", "--seed", "7", "--out", s(&sc)]).status.success());
    for method in ["csa", "dcsa", "cost-min", "convenience-max"] {
        let a = dir.path().join(format!("{method}-a"));
        let b = dir.path().join(format!("{method}-b"));
        for out in [&a, &b] {
            let o = evsched(&["run", "--method", method, "--scenario", s(&sc), "--out-dir", s(out)]);
            assert!(o.status.success(), "{method}: {}", String::from_utf8_lossy(&o.stderr));
        }
        for f in ARTIFACTS {
            assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{method} {f}");
        }
    }
}

#[test]
fn gen_to_stdout_matches_file() {
    let dir = tempfile::tempdir().unwrap();
    let sc = dir.path().join("scenario.txt");
    evsched(&["gen", "--evs", "12", "--seed", "3", "--out", s(&sc)]);
    let o = evsched(&["gen", "--evs", "12", "--seed", "3"]);
    assert_eq!(o.stdout, fs::read(&sc).unwrap());
}

#[test]
fn audit_confirms_a_distributed_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    assert!(evsched(&["run", "--method", "dcsa", "--evs", "40", "--seed", "2", "--out-dir", s(&out)])
        .status
        .success());
    let o = evsched(&["audit", "--out-dir", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("ledger matches trace"));
}

#[test]
fn audit_flags_a_tampered_trace() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    evsched(&["run", "--method", "dcsa", "--evs", "20", "--seed", "5", "--out-dir", s(&out)]);
    let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
    // Drop the last delivered message.
    let mut lines: Vec<&str> = trace.lines().collect();
    lines.pop();
    fs::write(out.join("trace.csv"), lines.join("\n") + "\n").unwrap();
    assert_eq!(evsched(&["audit", "--out-dir", s(&out)]).status.code(), Some(4));
}

#[test]
fn output_dir_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("from-env");
    let o = Command::new(env!("CARGO_BIN_EXE_evsched"))
        .args(["run", "--method", "csa", "--evs", "10"])
        .env("EVSCHED_OUT_DIR", &out)
        .output()
        .unwrap();
    assert!(o.status.success());
    for f in ARTIFACTS {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn flags_override_the_scenario_file() {
    let dir = tempfile::tempdir().unwrap();
    let sc = dir.path().join("scenario.txt");
    evsched(&["gen", "--evs", "20", "--seed", "1", "--out", s(&sc)]);
    let out = dir.path().join("run");
    let o = evsched(&[
        "run", "--method", "csa", "--scenario", s(&sc), "--peak-cap", "none", "--k1", "2e-4", "--out-dir", s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let metrics: serde_json::Value = serde_json::from_slice(&fs::read(out.join("metrics.json")).unwrap()).unwrap();
    assert!(metrics["summary"]["peak_cap_kw"].is_null());
}

#[test]
fn bad_configuration_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    for args in [
        vec!["run", "--method", "nope", "--evs", "5"],
        vec!["run", "--unknown-flag"],
        vec!["run", "--method", "dcsa", "--epsilon", "2", "--evs", "5"],
        vec!["run", "--forecaster", "oracle", "--evs", "5"],
        vec!["run", "--evs", "5", "--peak-cap", "1"],
        vec!["sweep", "--method", "nope", "--reps", "1"],
    ] {
        let mut full = args.clone();
        full.extend(["--out-dir", s(&out)]);
        let o = evsched(&full);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let o = evsched(&["run", "--unknown-flag"]);
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
}

#[test]
fn unschedulable_scenario_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let sc = dir.path().join("scenario.txt");
    evsched(&["gen", "--evs", "200", "--seed", "4", "--out", s(&sc)]);
    // A cap just above the base-load peak leaves no room for 200 EVs.
    let base = evsched::scenario_io::load_scenario(&sc).unwrap().base_load_kw;
    let peak = base.iter().cloned().fold(0.0, f64::max);
    let cap = format!("{}", peak + 1.0);
    let o = evsched(&[
        "run", "--method", "csa", "--scenario", s(&sc), "--peak-cap", &cap, "--out-dir", s(&dir.path().join("o")),
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn sweep_writes_one_row_per_replication() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    let o = evsched(&["sweep", "--evs", "10,20", "--reps", "3", "--method", "dcsa", "--out-dir", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("n,rep,seed,method"));
    assert_eq!(lines.len(), 7);
    let keys: Vec<String> = lines[1..].iter().map(|l| l.split(',').take(2).collect::<Vec<_>>().join(",")).collect();
    assert_eq!(keys, ["10,0", "10,1", "10,2", "20,0", "20,1", "20,2"]);

    let again = dir.path().join("sweep2");
    evsched(&["sweep", "--evs", "10,20", "--reps", "3", "--method", "dcsa", "--out-dir", s(&again)]);
    assert_eq!(text, fs::read_to_string(again.join("sweep.csv")).unwrap());
}
