use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use adaflow::trajectory::Trajectory;
use adaflow::Error;
use adaflow_cli::{run, CliError, Format, Policy, RunConfig};
use tempfile::TempDir;

const FIXTURE: &str = "x,label\n1,1\n2,1\n4,1\n3,-1\n";

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p
}

fn adaflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adaflow")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn flow_and_discrete_summaries_agree() {
    let dir = TempDir::new().unwrap();
    let data = write(&dir, "fx.csv", FIXTURE);
    for (flow, discrete) in [
        (Policy::Adaboost, Policy::DiscreteAdaboost),
        (Policy::Arcgv, Policy::DiscreteArcgv),
        (Policy::Crp, Policy::DiscreteCrp),
    ] {
        let a = run(&RunConfig::new(&data, flow)).unwrap().summary;
        let b = run(&RunConfig::new(&data, discrete)).unwrap().summary;
        assert_eq!(a.rounds, b.rounds);
        assert_eq!(a.stop_reason, b.stop_reason);
        for (x, y) in [
            (a.training_error, b.training_error),
            (a.margin, b.margin),
            (a.lyapunov_e, b.lyapunov_e),
            (a.sum_beta_squared, b.sum_beta_squared),
            (a.error_bound, b.error_bound),
        ] {
            assert!((x - y).abs() <= 1e-10, "{flow:?}: {x} vs {y}");
        }
    }
}

#[test]
fn arcgv_first_switch_is_at_the_cap() {
    let dir = TempDir::new().unwrap();
    let data = write(&dir, "fx.csv", FIXTURE);
    let out = dir.path().join("t.csv");
    let mut config = RunConfig::new(&data, Policy::Arcgv);
    config.output = Some(out.clone());
    run(&config).unwrap();
    let traj = Trajectory::read_csv(fs::File::open(&out).unwrap()).unwrap();
    assert_eq!(traj.samples[1].time, 10.0);
}

#[test]
fn output_is_deterministic_and_round_trips() {
    let dir = TempDir::new().unwrap();
    let data = write(&dir, "fx.csv", FIXTURE);
    let (a, b, j) = (dir.path().join("a.csv"), dir.path().join("b.csv"), dir.path().join("c.json"));
    for p in [&a, &b] {
        let o = adaflow(&["run", s(&data), "--policy", "adaboost", "--sample-dt", "0.1", "-o", s(p)]);
        assert!(o.status.success());
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let o = adaflow(&["run", s(&data), "--sample-dt", "0.1", "--format", "json", "-o", s(&j)]);
    assert!(o.status.success());
    let from_csv = Trajectory::read_csv(fs::File::open(&a).unwrap()).unwrap();
    let from_json = Trajectory::from_json(&fs::read_to_string(&j).unwrap()).unwrap();
    assert_eq!(from_csv, from_json);
    assert!(from_csv.len() > 10);
}

#[test]
fn summary_is_printed_and_saved() {
    let dir = TempDir::new().unwrap();
    let data = write(&dir, "fx.csv", FIXTURE);
    let json = dir.path().join("summary.json");
    let o = adaflow(&["run", s(&data), "--max-rounds", "5", "--summary", s(&json), "--eval", s(&data)]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    for key in [
        "training_error:",
        "margin:",
        "lyapunov_E:",
        "sum_beta_squared:",
        "error_bound:",
        "rounds: 5",
        "stop_reason: max_segments",
        "eval_error:",
    ] {
        assert!(text.contains(key), "missing {key} in\n{text}");
    }
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(v["policy"], "adaboost");
    assert_eq!(v["rounds"], 5);
}

#[test]
fn eval_matches_training_error_on_the_training_file() {
    let dir = TempDir::new().unwrap();
    let data = write(&dir, "sep.csv", "a,b,y\n0,0,-1\n1,0,-1\n0,1,1\n1,1,1\n0.5,0.9,1\n");
    for policy in [Policy::Adaboost, Policy::Crp, Policy::DiscreteArcgv] {
        let mut config = RunConfig::new(&data, policy);
        config.eval = Some(data.clone());
        config.max_rounds = 10;
        let summary = run(&config).unwrap().summary;
        assert_eq!(summary.eval_error, Some(summary.training_error), "{policy:?}");
    }
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let data = write(&dir, "fx.csv", FIXTURE);
    let missing = dir.path().join("nope.csv");
    assert_eq!(adaflow(&["run", s(&missing)]).status.code(), Some(3));
    let bad = write(&dir, "bad.csv", "x,label\n1,1\n2,7\n");
    let o = adaflow(&["run", s(&bad)]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8(o.stderr).unwrap().contains("line 3"));
    assert_eq!(adaflow(&["run", s(&data), "--cap", "-1", "--policy", "arcgv"]).status.code(), Some(2));
    assert_eq!(adaflow(&["run", s(&data), "--policy", "nonsense"]).status.code(), Some(2));
    assert_eq!(adaflow(&["run", s(&data), "--max-rounds", "0"]).status.code(), Some(2));
    // every stump errs on exactly half the mass
    let stuck = write(&dir, "stuck.csv", "x,label\n1,1\n2,1\n");
    let o = adaflow(&["run", s(&stuck)]);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8(o.stdout).unwrap().contains("stop_reason: stopped_unfinished"));
    assert_eq!(CliError::from(Error::NumericRange("x".into())).exit_code(), 5);
    assert_eq!(CliError::from(Error::Domain("x".into())).exit_code(), 5);
}

#[test]
fn constant_features_give_a_data_error() {
    let dir = TempDir::new().unwrap();
    let flat = write(&dir, "flat.csv", "x,label\n1,1\n1,-1\n");
    assert_eq!(adaflow(&["run", s(&flat)]).status.code(), Some(3));
}

#[test]
fn pool_info_reports_the_pool() {
    let dir = TempDir::new().unwrap();
    let data = write(&dir, "fx.csv", FIXTURE);
    let o = adaflow(&["pool-info", s(&data)]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("points: 4"));
    assert!(text.contains("stumps: 6"));
    let o = adaflow(&["pool-info", s(&data), "--resolution", "1"]);
    assert!(String::from_utf8(o.stdout).unwrap().contains("stumps: 2"));
}

#[test]
fn selftest_passes() {
    let o = adaflow(&["selftest", "--seed", "7"]);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(o.status.success(), "{text}");
    assert!(text.contains("14 of 14 checks passed"));
}

#[test]
fn weights_column_sets_the_start() {
    let dir = TempDir::new().unwrap();
    let data = write(&dir, "w.csv", "x,w,y\n1,1,1\n2,1,1\n3,2,-1\n4,0,1\n");
    let mut config = RunConfig::new(&data, Policy::DiscreteAdaboost);
    config.weights_column = Some("w".into());
    config.max_rounds = 1;
    config.format = Format::Csv;
    let out = dir.path().join("t.csv");
    config.output = Some(out.clone());
    run(&config).unwrap();
    let traj = Trajectory::read_csv(fs::File::open(&out).unwrap()).unwrap();
    assert_eq!(traj.samples[0].w, vec![0.25, 0.25, 0.5, 0.0]);
}
