use super::*;
use crate::eval::PhaseStatus;
use crate::synth::{self, Scenario, SynthParams};
use sha2::{Digest, Sha256};

fn load_fixture(scenario: Scenario, frames: usize, seed: u64) -> (tempfile::TempDir, LoadedConfig) {
    let dir = tempfile::tempdir().unwrap();
    let out = synth::generate(scenario, &SynthParams { frames, seed }, dir.path()).unwrap();
    let loaded = LoadedConfig::from_path(&out.config.unwrap()).unwrap();
    (dir, loaded)
}

fn phase<'a>(report: &'a LifecycleReport, name: &str) -> &'a PhaseReport {
    report.phases.iter().find(|p| p.name == name).unwrap()
}

#[test]
fn bind_fixture_compiles_clean() {
    let (dir, loaded) = load_fixture(Scenario::Bind, 12, 0);
    let out_path = dir.path().join("out/model.json");
    let outcome = compile(&loaded, Some(&out_path));
    assert!(outcome.error.is_none(), "{:?}", outcome.report.phases);
    for p in &outcome.report.phases {
        assert_eq!(p.status, PhaseStatus::Passed, "phase {} {:?}", p.name, p.detail);
    }
    let asset = outcome.asset.unwrap();
    // Residuals are zero: every target already sits at its effector.
    for r in &asset.clip.residuals_mm {
        assert!(*r < 1e-9);
    }
    assert!(out_path.exists());
    assert!(buffer_path(&out_path).exists());
    assert!(outcome.report.all_gates_pass());

    // The packaged asset round-trips.
    let read = read_asset(&out_path).unwrap();
    assert_eq!(read, asset);
}

#[test]
fn missing_role_map_coil_fails_validate_and_skips_the_rest() {
    let (_dir, mut loaded) = load_fixture(Scenario::Bind, 8, 0);
    loaded.config.coils.insert(
        "T9".into(),
        CoilSpec {
            articulator: crate::ema::Articulator::Tongue,
            chain_index: Some(9),
        },
    );
    let outcome = compile(&loaded, None);
    let validate = phase(&outcome.report, "validate");
    assert_eq!(validate.status, PhaseStatus::Error);
    assert!(validate.detail.contains("T9"), "{}", validate.detail);
    for name in ["rig", "solve", "evaluate", "package"] {
        assert_eq!(phase(&outcome.report, name).status, PhaseStatus::Skipped);
    }
    assert!(outcome.asset.is_none());
    assert!(outcome.error.is_some());
}

#[test]
fn fk_roundtrip_fixture_passes_the_distance_gate() {
    let (_dir, loaded) = load_fixture(Scenario::FkRoundtrip, 60, 3);
    let outcome = compile(&loaded, None);
    assert!(outcome.error.is_none(), "{:?}", outcome.report.phases);
    assert!(outcome.report.all_gates_pass(), "{:?}", outcome.report.gates);
    let distance_gates: Vec<_> = outcome
        .report
        .gates
        .iter()
        .filter(|g| g.name.starts_with("target_distance."))
        .collect();
    assert_eq!(distance_gates.len(), 4);
    // Solver tolerance plus linear-blend skinning slack stays well inside
    // the 1.0 mm gate on this fixture.
    for gate in distance_gates {
        assert!(gate.pass, "{}: {}", gate.name, gate.measured);
        assert!(gate.measured <= 0.25, "{}: {}", gate.name, gate.measured);
    }
}

#[test]
fn penetrating_motion_fails_the_gate_and_writes_no_asset() {
    let (dir, loaded) = load_fixture(Scenario::Penetrate, 120, 0);
    let out_path = dir.path().join("out/model.json");
    let outcome = compile(&loaded, Some(&out_path));
    assert!(outcome.error.is_none());
    assert_eq!(phase(&outcome.report, "evaluate").status, PhaseStatus::GateFailed);
    assert_eq!(phase(&outcome.report, "package").status, PhaseStatus::Skipped);
    assert!(outcome.asset.is_none());
    assert!(!out_path.exists(), "failed compile must not write an asset");
    assert!(!buffer_path(&out_path).exists());
    let gate = outcome
        .report
        .gates
        .iter()
        .find(|g| g.name == "palate_penetration")
        .unwrap();
    assert!(!gate.pass);
    assert!(gate.measured > gate.threshold);
    // Gate soundness: the report alone re-checks the verdict.
    for g in &outcome.report.gates {
        assert_eq!(g.pass, g.measured <= g.threshold);
    }
}

#[test]
fn compile_is_deterministic_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let out = synth::generate(
        Scenario::FkRoundtrip,
        &SynthParams { frames: 30, seed: 5 },
        dir.path(),
    )
    .unwrap();
    let loaded = LoadedConfig::from_path(out.config.as_ref().unwrap()).unwrap();

    // Identical invocations, the second overwriting the first.
    let out_path = dir.path().join("out/model.json");
    let run = || {
        let outcome = compile(&loaded, Some(&out_path));
        assert!(outcome.error.is_none());
        let report_doc = serde_json::to_vec_pretty(&outcome.report.doc()).unwrap();
        (
            std::fs::read(&out_path).unwrap(),
            std::fs::read(buffer_path(&out_path)).unwrap(),
            report_doc,
        )
    };
    let (m1, b1, r1) = run();
    let (m2, b2, r2) = run();
    assert_eq!(m1, m2);
    assert_eq!(b1, b2);
    assert_eq!(r1, r2);
}

#[test]
fn provenance_hashes_match_the_actual_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = synth::generate(Scenario::Bind, &SynthParams { frames: 8, seed: 0 }, dir.path())
        .unwrap();
    let config_path = out.config.unwrap();
    let loaded = LoadedConfig::from_path(&config_path).unwrap();
    let outcome = compile(&loaded, None);
    let asset = outcome.asset.unwrap();
    assert_eq!(
        asset.provenance.config_sha256,
        hex::encode(Sha256::digest(std::fs::read(&config_path).unwrap()))
    );
    for input in &asset.provenance.inputs {
        let bytes = std::fs::read(dir.path().join(&input.name)).unwrap();
        assert_eq!(input.sha256, hex::encode(Sha256::digest(&bytes)), "{}", input.name);
    }
    assert_eq!(asset.provenance.inputs.len(), 5); // ema + 4 meshes
}

#[test]
fn report_doc_carries_phases_gates_and_series() {
    let (_dir, loaded) = load_fixture(Scenario::Bind, 8, 0);
    let outcome = compile(&loaded, None);
    let doc = outcome.report.doc();
    assert_eq!(doc.version, crate::eval::REPORT_VERSION);
    let names: Vec<&str> = doc.phases.iter().map(|p| p.name.as_str()).collect();
    assert_eq!(names, ["validate", "rig", "solve", "evaluate", "package"]);
    // Series: one distance series per rigged coil + contact + penetration.
    assert_eq!(doc.series.len(), 4 + 2);
    assert!(doc.provenance.contains_key("config_sha256"));
    assert!(doc.provenance.contains_key("input.ema.csv"));
}

#[test]
fn two_link_fixture_recovers_the_analytic_angles() {
    let (_dir, loaded) = load_fixture(Scenario::TwoLink, 120, 0);
    let outcome = compile(&loaded, None);
    assert!(outcome.error.is_none(), "{:?}", outcome.report.phases);
    let asset = outcome.asset.unwrap();
    let last = asset.clip.poses.last().unwrap();
    let root_angle = last.rotations[0].angle();
    let elbow = last.rotations[1].scaled_axis();
    assert!(root_angle < 1e-3, "root angle {root_angle}");
    assert!(
        (elbow - nalgebra::Vector3::new(0.0, 0.0, std::f64::consts::FRAC_PI_2)).norm() < 1e-3,
        "elbow {elbow:?}"
    );
}
