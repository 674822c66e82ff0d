use std::fs;
use std::path::{Path, PathBuf};

use decaykit::bound::Region;
use decaykit::exponent::Exp;
use decaykit::harness::*;

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn config(scenario: PathBuf, out: PathBuf, mode: Mode) -> ExperimentConfig {
    ExperimentConfig { scenario_path: scenario, out_dir: out, mode, overrides: Overrides::default() }
}

const SMALL: &str = "sigma=1\neps=0.01\nr0=6\nw=4\ndr=1/8\nt_max=64\nframe_dt=1\nframe_dr=0.5\n[terms]\ndtphi^3\n";

fn all_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn cubic_time_derivative_descriptor() {
    let e = parse_scenario("sigma=0.5\n[terms]\ndphi^3\n").unwrap();
    assert_eq!(e.spec.sigma.value(), 0.5);
    assert_eq!(e.spec.tangential(), Some(0));
    assert_eq!(e.spec.order(), Some(3));
    assert_eq!(e.spec.terms[0].derivs, 3);
}

#[test]
fn phi_squared_dphi_needs_sigma_above_a_quarter() {
    let err = parse_scenario("sigma=0.2\n[terms]\nphi^2 dphi\n").unwrap_err();
    match err {
        ConfigError::Validation(msg) => assert!(msg.contains("sigma > 1/4"), "{msg}"),
        other => panic!("{other:?}"),
    }
    assert!(parse_scenario("sigma=0.3\n[terms]\nphi^2 dphi\n").is_ok());
}

#[test]
fn malformed_lines_report_their_number() {
    for (text, line) in [
        ("sigma=1\neps=0.01\nthis is not a pair\n", 3),
        ("sigma=1\n\n# comment\nunknown_key=3\n", 4),
        ("sigma=1\neps=abc\n", 2),
        ("sigma=1\n[terms]\ndtphi^x\n", 3),
        ("[terms]\ndtphi^3\ndt(phi dtphi)\n", 3),
        ("sigma=1\nsigma=2\n", 2),
        ("[extras]\n", 1),
        ("sigma=1\ndata=sideways\n", 2),
    ] {
        match parse_scenario(text) {
            Err(ConfigError::Parse { line: l, .. }) => assert_eq!(l, line, "{text}"),
            other => panic!("{text}: {other:?}"),
        }
    }
}

#[test]
fn term_syntax() {
    let e = parse_scenario("term=-1/3 dt(phi^3)\nterm=dbar dphi\nterm=0.5 drphi^2 phi\n").unwrap();
    let t = &e.scenario.terms;
    assert!((t[0].coef + 1.0 / 3.0).abs() < 1e-15);
    assert!(t[0].descriptor().total_derivative && t[0].descriptor().dt_structured);
    assert_eq!(t[1].descriptor().tangential, 1);
    assert_eq!(t[2].coef, 0.5);
    assert_eq!(t[2].descriptor().factors, 3);
}

#[test]
fn canonical_text_parses_back_to_the_same_scenario() {
    let e = parse_scenario(&fs::read_to_string("../../scenarios/potential_dtphi4.txt").unwrap()).unwrap();
    let again = parse_scenario(&e.scenario.canonical()).unwrap();
    assert_eq!(again.scenario.canonical(), e.scenario.canonical());
    assert_eq!(again.scenario.hash(), e.scenario.hash());
}

#[test]
fn bad_tolerances_and_windows_are_configuration_errors() {
    for text in ["tolerance=0\n", "tolerance=-1\n", "t_max=64\nfit_from=32\nfit_to=16\n", "sigma=0.3\ngamma=0.7\n"] {
        assert!(matches!(parse_scenario(text), Err(ConfigError::Validation(_))), "{text}");
    }
}

#[test]
fn predict_only_on_the_null_form() {
    let dir = tempfile::tempdir().unwrap();
    let scen = write(dir.path(), "null.txt", "sigma=1\n[terms]\ndbar dphi\n");
    let out = dir.path().join("out");
    let o = run_verify(&config(scen, out.clone(), Mode::Predict)).unwrap();
    assert_eq!(o.exit_code(), EXIT_PASS);
    let text = fs::read_to_string(out.join("prediction.txt")).unwrap();
    let final_line = text.lines().find(|l| l.starts_with("interior_final=")).unwrap();
    assert_eq!(final_line, "interior_final=(0+0s,1+0s,1+0s;int)");
    assert!(!out.join("energy.csv").exists());
    let e = parse_scenario("sigma=1\n[terms]\ndbar dphi\n").unwrap();
    let p = predict(&e.spec).unwrap();
    assert_eq!((p.interior.0.b, p.interior.0.e, p.interior.0.region), (Exp::int(1), Exp::int(1), Region::Interior));
}

#[test]
fn missing_scenario_leaves_no_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let r = run_verify(&config(dir.path().join("absent.txt"), out.clone(), Mode::Verify));
    assert!(matches!(r, Err(HarnessError::Config(ConfigError::Io { .. }))));
    assert_eq!(exit_code(&r), EXIT_CONFIG);
    assert!(!out.exists());
}

#[test]
fn invalid_scenario_leaves_no_output() {
    let dir = tempfile::tempdir().unwrap();
    let scen = write(dir.path(), "bad.txt", "sigma=0.2\n[terms]\nphi^2 dphi\n");
    let out = dir.path().join("out");
    let r = run_verify(&config(scen, out.clone(), Mode::Verify));
    assert_eq!(exit_code(&r), EXIT_CONFIG);
    assert!(!out.exists());
}

#[test]
fn blowup_is_a_runtime_error_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let scen = write(dir.path(), "boom.txt", "eps=3\nr0=4\nw=2\ndr=1/16\nt_max=32\n[terms]\nphi^7\n");
    let out = dir.path().join("out");
    let r = run_verify(&config(scen, out.clone(), Mode::Simulate));
    match &r {
        Err(HarnessError::Runtime { stage, msg }) => {
            assert_eq!(*stage, "simulate");
            assert!(msg.contains("t="), "{msg}");
        }
        other => panic!("{other:?}"),
    }
    assert_eq!(exit_code(&r), EXIT_RUNTIME);
    assert!(!out.exists());
}

#[test]
fn identical_configs_give_identical_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let scen = write(dir.path(), "small.txt", SMALL);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    run_verify(&config(scen.clone(), a.clone(), Mode::Verify)).unwrap();
    run_verify(&config(scen, b.clone(), Mode::Verify)).unwrap();
    let (fa, fb) = (all_files(&a), all_files(&b));
    assert!(fa.iter().any(|(n, _)| n == "regions.csv"));
    assert!(fa.iter().any(|(n, _)| n == "verdict.txt"));
    assert!(fa.iter().all(|(n, _)| !n.ends_with(".tmp")));
    assert_eq!(fa, fb);
}

#[test]
fn failing_check_sets_exit_code_one() {
    let dir = tempfile::tempdir().unwrap();
    let scen = write(dir.path(), "small.txt", SMALL);
    let mut cfg = config(scen, dir.path().join("out"), Mode::Verify);
    cfg.overrides.tolerance = Some(1e-9);
    let o = run_verify(&cfg).unwrap();
    assert!(!o.passed());
    assert_eq!(o.exit_code(), EXIT_CHECK_FAILED);
    let verdict = fs::read_to_string(dir.path().join("out/verdict.txt")).unwrap();
    assert!(verdict.lines().any(|l| l.starts_with("t-slope,interior-final") && l.ends_with("FAIL")), "{verdict}");
}

#[test]
fn measure_mode_writes_statistics_without_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let scen = write(dir.path(), "small.txt", SMALL);
    let out = dir.path().join("out");
    let mut cfg = config(scen, out.clone(), Mode::Measure);
    cfg.overrides.gamma = Some(0.6);
    let o = run_verify(&cfg).unwrap();
    assert!(o.verdicts.is_empty());
    assert_eq!(o.exit_code(), EXIT_PASS);
    let csv = fs::read_to_string(out.join("regions.csv")).unwrap();
    assert!(csv.starts_with("region_kind,T,RorU,field,sup,l2\n"));
    let rg = fs::read_to_string(out.join("rgamma.csv")).unwrap();
    assert!(rg.lines().count() >= 2, "{rg}");
    assert!(out.join("checkpoints/t32.txt").exists());
    assert!(!out.join("prediction.txt").exists());
}

#[test]
fn overrides_are_validated() {
    let dir = tempfile::tempdir().unwrap();
    let scen = write(dir.path(), "small.txt", SMALL);
    let mut cfg = config(scen, dir.path().join("out"), Mode::Simulate);
    cfg.overrides.courant = Some(5.0);
    assert_eq!(exit_code(&run_verify(&cfg)), EXIT_CONFIG);
    cfg.overrides.courant = None;
    cfg.overrides.tolerance = Some(-1.0);
    assert_eq!(exit_code(&run_verify(&cfg)), EXIT_CONFIG);
}
