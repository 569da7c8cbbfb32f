//! Generate every synthetic scenario and show what each one produces.
//!
//! Run with `cargo run --example synth_scenarios`.

use glossa::synth::{generate, Scenario, SynthParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let base = std::env::temp_dir().join("glossa-example-scenarios");
    for scenario in Scenario::ALL {
        let dir = base.join(scenario.name());
        let out = generate(scenario, &SynthParams { frames: 60, seed: 1 }, &dir)?;
        println!("{}:", scenario.name());
        for file in &out.files {
            let len = std::fs::metadata(file)?.len();
            println!("  {:12} {} B", file.file_name().unwrap().to_string_lossy(), len);
        }
        if let Some(asset) = &out.asset {
            println!("  -> constructed asset for direct evaluation: {}", asset.display());
        }
        if let Some(config) = &out.config {
            println!("  -> compile with: glossa compile {} --out model.json --report-dir report", config.display());
        }
    }
    Ok(())
}
