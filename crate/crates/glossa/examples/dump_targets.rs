//! Dump solved IK targets back to EMA data files for side-by-side
//! comparison with the original capture in external analysis tools.
//!
//! Run with `cargo run --example dump_targets`.

use glossa::compiler::{compile, LoadedConfig};
use glossa::ema::{parse_ag500_pos, parse_ema_csv, write_ag500_pos, write_ema_csv};
use glossa::ik::dump_targets;
use glossa::synth::{generate, Scenario, SynthParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("glossa-example-dump");
    let fixture = generate(
        Scenario::FkRoundtrip,
        &SynthParams { frames: 100, seed: 4 },
        &dir.join("fixture"),
    )?;
    let loaded = LoadedConfig::from_path(fixture.config.as_ref().unwrap())?;
    let outcome = compile(&loaded, None);
    let asset = outcome.asset.ok_or("compile failed")?;

    // FK-evaluate every effector over the clip; the rms field carries the
    // per-frame solver residual.
    let dumped = dump_targets(
        &asset.armature,
        &asset.clip,
        &asset.targets.topology,
        asset.clip.frame_rate_hz,
    )?;
    println!(
        "dumped {} frames x {} coils ({})",
        dumped.frame_count(),
        dumped.coil_ids().len(),
        dumped.coil_ids().join(", ")
    );

    // The dumped trajectory deviates from the input targets by at most the
    // solver residual, frame by frame.
    let mut worst = 0.0f64;
    for f in 0..dumped.frame_count() {
        for c in 0..dumped.coil_ids().len() {
            let err = (dumped.sample(f, c).position - asset.targets.frames[f].positions[c]).norm();
            worst = worst.max(err - asset.clip.residuals_mm[f]);
        }
    }
    println!("max deviation beyond the recorded residual: {worst:.2e} mm");

    // Write both interchange formats.
    let csv_path = dir.join("targets.csv");
    std::fs::write(&csv_path, write_ema_csv(&dumped))?;
    let pos_path = dir.join("targets.pos");
    std::fs::write(&pos_path, write_ag500_pos(&dumped)?)?;
    println!("wrote {} and {}", csv_path.display(), pos_path.display());

    // Both re-parse; the binary route quantizes to float32.
    let from_csv = parse_ema_csv(&std::fs::read(&csv_path)?)?;
    let from_pos = parse_ag500_pos(
        &std::fs::read(&pos_path)?,
        dumped.coil_ids().len(),
        dumped.sample_rate_hz(),
    )?;
    let csv_err = (from_csv.sample(50, 2).position - dumped.sample(50, 2).position).norm();
    let pos_err = (from_pos.sample(50, 2).position - dumped.sample(50, 2).position).norm();
    println!("re-parse drift: csv {csv_err:.2e} mm, pos {pos_err:.2e} mm");
    Ok(())
}
