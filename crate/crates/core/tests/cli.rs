use std::fs;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cyclequeue"))
        .args(args)
        .env_remove("CYCLEQUEUE_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn analytic_run_succeeds() {
    let o = run(&["busy", "--k", "2", "--quantity", "tail"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.starts_with("quantity,analytic,mc_mean,mc_stderr,target_ref,pass\n"));
    assert!(out.contains("tail_beta_k2,0.273467573497,"));
}

#[test]
fn height_moments_example() {
    let o = run(&["walk", "--rho", "1", "--quantity", "height-moments"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("1.88724287214"), "{out}");
    assert!(out.contains("1.24227920433"), "{out}");
}

#[test]
fn usage_errors_exit_two() {
    for args in [
        &[][..],
        &["walk", "--bogus"],
        &["crp"],
        &["walk", "--rho", "-1"],
        &["mminf", "--n-reps", "1", "--seed", "1"],
        &["tandem", "--checkpoints", "10,5", "--seed", "1"],
        &["walk", "--quantity", "nonsense"],
    ] {
        let o = run(args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
        assert!(o.stdout.is_empty(), "{args:?}");
    }
}

#[test]
fn runtime_error_exits_one() {
    let o = run(&["walk", "--rho", "1000", "--quantity", "park"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("too small"));
}

#[test]
fn thread_setting_is_validated() {
    let o = Command::new(env!("CARGO_BIN_EXE_cyclequeue"))
        .args(["busy", "--quantity", "tail"])
        .env("CYCLEQUEUE_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.json");
    fs::write(&cfg, r#"{"command": "busy", "theta": 1.0, "k": 1, "quantity": "tail"}"#).unwrap();
    let from_file = run(&["busy", "--config", cfg.to_str().unwrap()]);
    assert_eq!(from_file.status.code(), Some(0), "{}", stderr(&from_file));
    assert!(stdout(&from_file).contains("tail_beta_k1,0.450265027496"));
    let overridden = run(&["busy", "--config", cfg.to_str().unwrap(), "--k", "2"]);
    assert!(stdout(&overridden).contains("tail_beta_k2,0.273467573497"));
}

#[test]
fn config_file_errors() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = dir.path().join("unknown.json");
    fs::write(&unknown, r#"{"command": "busy", "thetta": 1.0}"#).unwrap();
    let o = run(&["busy", "--config", unknown.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let msg = stderr(&o);
    assert!(
        msg.contains("thetta") && msg.contains("theta") && msg.contains("n_reps"),
        "{msg}"
    );

    let broken = dir.path().join("broken.json");
    fs::write(&broken, "{\n  \"command\": \"busy\",\n  \"theta\": 1.0,,\n}").unwrap();
    let o = run(&["busy", "--config", broken.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));

    let mismatch = dir.path().join("walk.json");
    fs::write(&mismatch, r#"{"command": "walk"}"#).unwrap();
    assert_eq!(
        run(&["busy", "--config", mismatch.to_str().unwrap()]).status.code(),
        Some(2)
    );
}

#[test]
fn output_file_and_json_mirror() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tail.csv");
    let o = run(&[
        "busy",
        "--k",
        "3",
        "--quantity",
        "tail",
        "--output",
        path.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
    let csv = fs::read_to_string(&path).unwrap();
    assert!(csv.starts_with("quantity,"));
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(path.with_extension("json")).unwrap()).unwrap();
    assert_eq!(json["schema"], 1);
    assert_eq!(json["rows"].as_array().unwrap().len(), csv.lines().count() - 1);
}

#[test]
fn seeded_runs_are_reproducible() {
    let args = ["mminf", "--seed", "7", "--n-reps", "2000", "--quantity", "excursion"];
    let a = run(&args);
    let b = Command::new(env!("CARGO_BIN_EXE_cyclequeue"))
        .args(args)
        .env("CYCLEQUEUE_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(a.stdout, b.stdout);
    let c = run(&["mminf", "--seed", "8", "--n-reps", "2000", "--quantity", "excursion"]);
    assert_ne!(a.stdout, c.stdout);
}
