use std::path::Path;
use std::process::{Command, Output};

fn aicon(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aicon"))
        .args(args)
        .env_remove("AICON_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
    assert!(
        out.status.success(),
        "stdout:\n{stdout}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    stdout
}

fn header(path: &Path) -> String {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string()
}

#[test]
fn run_writes_trace_and_figure() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let stdout = ok(&aicon(&[
        "run",
        "--domain",
        "nav2d",
        "--seed",
        "3",
        "--max-ticks",
        "50",
        "--out",
        out,
    ]));
    assert!(stdout.contains("ticks"));
    let files: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    let trace = files
        .iter()
        .find(|p| p.extension().is_some_and(|e| e == "csv"))
        .unwrap();
    assert!(header(trace).starts_with("tick,time_s,agent,object,action"));
    assert!(files.iter().any(|p| p.extension().is_some_and(|e| e == "svg")));
}

#[test]
fn bench_then_plot_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let stdout = ok(&aicon(&[
        "bench",
        "--domain",
        "pusht",
        "--n",
        "2",
        "--modes",
        "full,steepest",
        "--max-ticks",
        "40",
        "--jobs",
        "2",
        "--out",
        out,
    ]));
    assert!(stdout.contains("full") && stdout.contains("steepest"));
    let p = dir.path();
    assert_eq!(header(&p.join("curves.csv")), "mode,tick,time_s,success_fraction");
    assert_eq!(
        header(&p.join("outcomes.csv")),
        "mode,scenario_id,seed,outcome,success_tick,ticks,collided,error"
    );
    assert_eq!(
        header(&p.join("paths.csv")),
        "mode,scenario_id,tick,agent_x,agent_y,object_x,object_y,object_theta"
    );
    let rows = std::fs::read_to_string(p.join("outcomes.csv")).unwrap().lines().count();
    assert_eq!(rows, 1 + 2 * 2);
    assert!(p.join("scenarios.toml").exists() && p.join("config.toml").exists());

    std::fs::remove_file(p.join("success_curves.svg")).unwrap();
    ok(&aicon(&["plot", "--in", out]));
    assert!(p.join("success_curves.svg").exists());
    assert_eq!(std::fs::read_dir(p.join("trajectories")).unwrap().count(), 4);

    let again = tempfile::tempdir().unwrap();
    let scenarios = p.join("scenarios.toml");
    ok(&aicon(&[
        "run",
        "--domain",
        "pusht",
        "--scenario",
        scenarios.to_str().unwrap(),
        "--mode",
        "full-no-noise",
        "--max-ticks",
        "20",
        "--out",
        again.path().to_str().unwrap(),
    ]));
}

#[test]
fn bad_arguments_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let bad_mode = aicon(&["bench", "--domain", "nav2d", "--modes", "fastest", "--out", out]);
    assert!(!bad_mode.status.success());
    let zero = aicon(&["bench", "--domain", "nav2d", "--n", "0", "--out", out]);
    assert!(!zero.status.success());
    assert!(String::from_utf8_lossy(&zero.stderr).contains("error"));
    let alpha = aicon(&["run", "--domain", "nav2d", "--lowpass-alpha", "0", "--out", out]);
    assert!(!alpha.status.success());
}

#[test]
fn output_directory_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_aicon"))
        .args(["run", "--domain", "nav2d", "--max-ticks", "5"])
        .env("AICON_OUT_DIR", dir.path())
        .output()
        .unwrap();
    ok(&out);
    assert!(std::fs::read_dir(dir.path()).unwrap().count() >= 2);
}
