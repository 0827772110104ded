use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn cms(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cms"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("cms runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", stdout(o)))
}

#[test]
fn analyze_prdm_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = cms(&["analyze", "fixture:prdm"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    for line in ["a = 1/2", "b = 1/4", "Omega = {}", "verdict: existence guaranteed (eimc-i)"] {
        assert!(text.contains(line), "missing {line:?} in\n{text}");
    }
    let v = json(&cms(&["analyze", "fixture:prdm", "--format", "json"], dir.path()));
    assert_eq!(v["a"], "1/2");
    assert_eq!(v["b"], "1/4");
}

#[test]
fn validate_reports_straddle() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.json");
    std::fs::write(&path, cms_core::fixtures::STRADDLE).unwrap();
    let o = cms(&["validate", path.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("straddles") && err.contains("1/3"), "{err}");

    let ok = cms(&["validate", "fixture:gnce", "--format", "json"], dir.path());
    assert_eq!(ok.status.code(), Some(0));
    assert_eq!(json(&ok)["valid"], true);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(cms(&["frobnicate"], dir.path()).status.code(), Some(64));
    assert_eq!(cms(&["analyze", "fixture:prdm", "--bogus"], dir.path()).status.code(), Some(64));
    assert_eq!(cms(&["analyze", "missing.json"], dir.path()).status.code(), Some(3));
    assert_eq!(cms(&["code", "fixture:prdm", "--word", "b"], dir.path()).status.code(), Some(64));
    // One boundary-operator iteration cannot decide Ω for dMse.
    let undecided = cms(&["analyze", "fixture:dmse", "--n-max", "1", "--strict"], dir.path());
    assert_eq!(undecided.status.code(), Some(2), "{}", stdout(&undecided));
    assert_eq!(cms(&["analyze", "fixture:dmse", "--n-max", "1"], dir.path()).status.code(), Some(0));
}

#[test]
fn simulate_is_deterministic_and_replayable() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let o = cms(
            &["simulate", "fixture:prdm", "--seed", "42", "--steps", "1000000", "--out", name],
            dir.path(),
        );
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read(dir.path().join(name)).unwrap()
    };
    let a = run("a.csv");
    let b = run("b.csv");
    assert_eq!(a, b);
    assert!(String::from_utf8_lossy(&a).starts_with("atom_id,count,frequency\n"));
    let moments = std::fs::read_to_string(dir.path().join("a.moments.csv")).unwrap();
    assert!(moments.starts_with("quantity,value\n") && moments.contains("residual:x,"));

    let o = cms(&["replay", "a.csv.manifest.json"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("identical"));
    assert_eq!(std::fs::read(dir.path().join("a.csv.replay")).unwrap(), a);
}

#[test]
fn generated_seed_is_printed_and_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let o = cms(&["simulate", "fixture:gnce", "--steps", "2000", "--out", "h.csv"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stderr).contains("seed: "));
    let manifest: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("h.csv.manifest.json")).unwrap()).unwrap();
    let seed = manifest["seed"].as_u64().unwrap();
    assert!(stdout(&o).contains(&format!("seed: {seed}")));
    let args: Vec<&str> = manifest["args"].as_array().unwrap().iter().map(|a| a.as_str().unwrap()).collect();
    assert!(args.ends_with(&["--seed", &seed.to_string()]));
    assert_eq!(cms(&["replay", "h.csv.manifest.json"], dir.path()).status.code(), Some(0));
}

#[test]
fn replay_detects_changed_spec() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("sys.json");
    std::fs::write(&spec, cms_core::fixtures::PRDM).unwrap();
    let o = cms(
        &["simulate", "sys.json", "--seed", "1", "--steps", "1000", "--manifest", "m.json"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(cms(&["replay", "m.json"], dir.path()).status.code(), Some(0));
    std::fs::write(&spec, cms_core::fixtures::DMSE).unwrap();
    assert_ne!(cms(&["replay", "m.json"], dir.path()).status.code(), Some(0));
}

#[test]
fn code_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let v = json(&cms(
        &["code", "fixture:prdm", "--period", "b,c", "--exact", "--format", "json"],
        dir.path(),
    ));
    assert_eq!(v["value"], "2/3");
    assert_eq!(v["atom"], 2);
    let v = json(&cms(
        &["code", "fixture:prdm", "--word", "c", "--period", "b", "--depth", "4", "--format", "json"],
        dir.path(),
    ));
    assert_eq!(v["mode"], "truncated");
    assert!(v["error_bound"].as_f64().unwrap() > 0.0);
    let broken = cms(&["code", "fixture:gnce", "--word", "a,b", "--period", "c", "--exact"], dir.path());
    assert_ne!(broken.status.code(), Some(0));
}

#[test]
fn subsystems_and_thermo() {
    let dir = tempfile::tempdir().unwrap();
    let text = stdout(&cms(&["subsystems", "fixture:dmse"], dir.path()));
    assert!(text.contains("{1} (closed in K)") && text.contains("{3} (closed in K)"), "{text}");
    let v = json(&cms(
        &["thermo", "fixture:chain", "--seed", "5", "--steps", "200000", "--format", "json"],
        dir.path(),
    ));
    for key in ["H_m", "u_avg", "residual", "se", "verdict"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert!(v["residual"].as_f64().unwrap().abs() < 0.01);
}

#[test]
fn refine_emits_verified_spec() {
    let dir = tempfile::tempdir().unwrap();
    let o = cms(
        &["refine", "fixture:prdm", "--cuts", "2@1/2:left-closed", "--seed", "3", "--format", "json", "--out", "r.json"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&o);
    assert_eq!(v["verification"]["ok"], true);
    assert_eq!(v["refined"]["edges"].as_array().unwrap().len(), 6);
    let written = std::fs::read_to_string(dir.path().join("r.json")).unwrap();
    let again = cms(&["validate", "r.json"], dir.path());
    assert_eq!(again.status.code(), Some(0), "{written}");
    assert!(dir.path().join("r.json.manifest.json").exists());

    let bad = cms(&["refine", "fixture:prdm", "--cuts", "2@1/3", "--seed", "1"], dir.path());
    assert_eq!(bad.status.code(), Some(1));
}
