//! Full pipeline: generate a synthetic scene, compile it through the
//! validate / rig / solve / evaluate / package lifecycle, and read the
//! packaged asset back.
//!
//! Run with `cargo run --example compile_model`.

use glossa::compiler::{buffer_path, compile, read_asset, LoadedConfig};
use glossa::synth::{generate, Scenario, SynthParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("glossa-example-compile");
    let fixture_dir = dir.join("fixture");
    let fixture = generate(
        Scenario::FkRoundtrip,
        &SynthParams { frames: 200, seed: 42 },
        &fixture_dir,
    )?;
    println!("fixture: {} files under {}", fixture.files.len(), fixture_dir.display());

    let loaded = LoadedConfig::from_path(fixture.config.as_ref().unwrap())?;
    let out_path = dir.join("model.json");
    let outcome = compile(&loaded, Some(&out_path));

    for phase in &outcome.report.phases {
        println!(
            "phase {:<9} {:?}  {}",
            phase.name, phase.status, phase.detail
        );
    }
    for gate in &outcome.report.gates {
        println!(
            "gate {:<22} {}  measured {:.6} vs threshold {}",
            gate.name,
            if gate.pass { "pass" } else { "FAIL" },
            gate.measured,
            gate.threshold
        );
    }
    if let Some(error) = &outcome.error {
        return Err(format!("compile failed: {error}").into());
    }

    let asset = read_asset(&out_path)?;
    println!(
        "asset: {} meshes, {} bones, {} frames at {} Hz, {} coil markers",
        asset.meshes.len(),
        asset.armature.len(),
        asset.clip.frame_count(),
        asset.clip.frame_rate_hz,
        asset.markers.len()
    );
    println!(
        "wrote {} + {}",
        out_path.display(),
        buffer_path(&out_path).display()
    );
    println!("provenance: config {}", &asset.provenance.config_sha256[..12]);
    for input in &asset.provenance.inputs {
        println!("  input {:12} {}", input.name, &input.sha256[..12]);
    }
    Ok(())
}
