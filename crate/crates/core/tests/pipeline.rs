use std::f64::consts::PI;

use clf_core::artifact::{reverify, DesignArtifact};
use clf_core::config::{preset_example_2_4, preset_example_3_3, RunConfig};
use clf_core::pipeline::{build_design, run, simulate, ExitStatus, Stage};
use clf_core::semilinear::{NonlinearityKind, NonlinearitySpec};
use clf_core::sim::fit_decay_rate;
use clf_core::spectral::Coefficient;

#[test]
fn preset_toml_round_trip() {
    for cfg in [preset_example_2_4(), preset_example_3_3()] {
        let text = cfg.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
    }
}

#[test]
fn unknown_key_is_config_error() {
    let mut text = preset_example_2_4().to_toml().unwrap();
    text.push_str("\nbogus = 1\n");
    let err = RunConfig::from_toml(&text).unwrap_err();
    assert_eq!(clf_core::pipeline::status_for(&err), ExitStatus::ConfigInvalid);
}

#[test]
fn semilinear_needs_square_inputs() {
    let mut cfg = preset_example_3_3();
    cfg.design.mus.pop();
    let dir = tempfile::tempdir().unwrap();
    let f = run(&cfg, dir.path(), Stage::Design).unwrap_err();
    assert_eq!(f.status, ExitStatus::ConfigInvalid);
}

#[test]
fn unstable_tail_fails_certification() {
    let mut cfg = preset_example_2_4();
    let q = -30.0 * PI * PI;
    cfg.problem.q = Coefficient::Constant(q);
    cfg.design.mus = vec![6.25 * PI * PI + q];
    let dir = tempfile::tempdir().unwrap();
    let f = run(&cfg, dir.path(), Stage::Simulate).unwrap_err();
    assert_eq!(f.status, ExitStatus::CertificationFailed);
    assert!(f.verdicts.iter().any(|v| v.name == "tail_modes_stable" && !v.pass));
    assert!(!dir.path().join("trajectory.csv").exists());
}

#[test]
fn excessive_lbar_is_not_certified() {
    let mut cfg = preset_example_3_3();
    let s = cfg.semilinear.as_mut().unwrap();
    s.nonlinearity = NonlinearitySpec::new(NonlinearityKind::SineType { amplitude: 0.5 }, 0.5).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let f = run(&cfg, dir.path(), Stage::Design).unwrap_err();
    assert_eq!(f.status, ExitStatus::CertificationFailed);
    assert!(dir.path().join("report.txt").exists());
}

#[test]
fn artifact_json_round_trip_reverifies() {
    let bundle = build_design(&preset_example_2_4()).unwrap();
    let json = bundle.artifact.to_json().unwrap();
    let back = DesignArtifact::from_json(&json).unwrap();
    assert_eq!(back.to_json().unwrap(), json);
    let rep = reverify(&back);
    assert!(rep.matches(), "{:?}", rep.mismatches);
}

#[test]
fn tampered_artifact_is_detected() {
    let bundle = build_design(&preset_example_2_4()).unwrap();
    let mut art = bundle.artifact.clone();
    art.clf.gamma = -art.clf.gamma;
    assert!(!reverify(&art).matches());
}

#[test]
fn decay_rate_stable_under_mode_doubling() {
    let mut cfg = preset_example_2_4();
    cfg.sim.open_loop = false;
    let mut rates = Vec::new();
    for n in [24, 48] {
        cfg.sim.n_modes = n;
        let bundle = build_design(&cfg).unwrap();
        let out = simulate(&bundle, &cfg).unwrap();
        rates.push(fit_decay_rate(&out.trajectory).unwrap().sigma_bar);
    }
    assert!((rates[0] - rates[1]).abs() / rates[1] < 0.02, "{rates:?}");
}

#[test]
fn shipped_configs_load() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut count = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            RunConfig::load(&path).unwrap().validate().unwrap();
            count += 1;
        }
    }
    assert!(count >= 2);
    assert_eq!(RunConfig::load(&dir.join("example_2_4.toml")).unwrap(), preset_example_2_4());
    assert_eq!(RunConfig::load(&dir.join("example_3_3.toml")).unwrap(), preset_example_3_3());
}
