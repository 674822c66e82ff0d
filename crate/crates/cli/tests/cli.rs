use std::fs;
use std::process::Command;

fn decaykit(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_decaykit")).args(args).output().unwrap()
}

fn preset(name: &str) -> String {
    format!("{}/../../scenarios/{name}", env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn predict_verb_writes_the_trace() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("p");
    let o = decaykit(&["predict", &preset("null_form.txt"), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(fs::read_to_string(out.join("prediction.txt")).unwrap().contains("interior_final=(0+0s,1+0s,1+0s;int)"));
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    let o = decaykit(&["verify", "does-not-exist.txt", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("cannot read"));
    assert!(!out.exists());
    let o = decaykit(&["simulate", &preset("dtphi3.txt"), "--out", out.to_str().unwrap(), "--courant", "3"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn grid_overrides_apply() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s");
    let o = decaykit(&[
        "simulate",
        &preset("dtphi3.txt"),
        "--out",
        out.to_str().unwrap(),
        "--dr",
        "0.125",
        "--t-max",
        "16",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let scen = fs::read_to_string(out.join("scenario.txt")).unwrap();
    assert!(scen.contains("dr=0.125\n") && scen.contains("t_max=16\n"), "{scen}");
    assert!(out.join("checkpoints/t16.txt").exists());
}

#[test]
fn desk_verify_of_the_cubic_time_derivative_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("v");
    let o = decaykit(&["verify", &preset("dtphi3.txt"), "--out", out.to_str().unwrap()]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    println!("{stdout}");
    assert_eq!(o.status.code(), Some(0), "{stdout}{}", String::from_utf8_lossy(&o.stderr));
    let verdict = fs::read_to_string(out.join("verdict.txt")).unwrap();
    assert!(verdict.lines().any(|l| l.starts_with("t-slope,") && l.ends_with(",PASS")), "{verdict}");
}
