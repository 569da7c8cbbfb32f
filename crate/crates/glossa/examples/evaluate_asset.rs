//! The three evaluation procedures on a compiled asset: target-to-surface
//! distances, palate contact/penetration, and pose similarity, rendered
//! into a report directory (JSON + CSV + SVG).
//!
//! Run with `cargo run --example evaluate_asset`.

use glossa::compiler::{compile, LoadedConfig, MeshRole};
use glossa::eval::{
    deformed_mesh, generate_report, palate_contact, pose_similarity, target_surface_distance,
    GateOutcome, ReportDoc, ScalarMetric,
};
use glossa::mesh::parse_obj;
use glossa::synth::{generate, Scenario, SynthParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("glossa-example-evaluate");
    let fixture = generate(
        Scenario::FkRoundtrip,
        &SynthParams { frames: 150, seed: 9 },
        &dir.join("fixture"),
    )?;
    let loaded = LoadedConfig::from_path(fixture.config.as_ref().unwrap())?;
    let outcome = compile(&loaded, None);
    let asset = outcome.asset.ok_or("compile failed")?;

    // 1. Distances from each coil target to the deformed articulator
    //    surface; ideally near zero while the model deforms.
    let distance_series = target_surface_distance(&asset)?;
    for series in &distance_series {
        println!(
            "{:22} mean {:.5} max {:.5} mm over {} frames",
            series.name,
            series.summary.mean,
            series.summary.max,
            series.values.len()
        );
    }

    // 2. Palate interaction: contact without penetration.
    let palate = parse_obj(&std::fs::read(dir.join("fixture/palate.obj"))?)?;
    let (contact, penetration) = palate_contact(&asset, &palate, 0.5)?;
    println!(
        "palate: contact on {:.0}% of frames, max penetration {:.4} mm",
        100.0 * contact.summary.mean,
        penetration.summary.max
    );

    // 3. Pose similarity of the deformed tongue against a reference mesh
    //    (here: the deformed frame itself written out and reloaded, so the
    //    distance is zero; a volumetric-scan mesh would slot in the same
    //    way).
    let frame = 75;
    let deformed = deformed_mesh(&asset, MeshRole::Tongue, frame)?;
    let reference_path = dir.join("reference.obj");
    std::fs::write(&reference_path, glossa::mesh::write_obj(&deformed))?;
    let reference = parse_obj(&std::fs::read(&reference_path)?)?;
    let stats = pose_similarity(&deformed, &reference, 4, 0)?;
    println!(
        "pose similarity at frame {frame}: mean {:.2e} max {:.2e} mm ({} samples)",
        stats.mean, stats.max, stats.sample_count
    );

    // Bundle everything into a report with gates.
    let mut doc = ReportDoc::new(0);
    for series in &distance_series {
        doc.gates.push(GateOutcome::max_of(&series.name, series, 1.0));
    }
    doc.gates.push(GateOutcome::max_of("palate_penetration", &penetration, 0.2));
    doc.gates.push(GateOutcome::scalar("pose_similarity", "pose_similarity.max", stats.max, 2.0));
    doc.scalars.push(ScalarMetric {
        name: "pose_similarity.max".into(),
        unit: "mm".into(),
        value: stats.max,
    });
    let mut series = distance_series;
    series.push(contact);
    series.push(penetration);
    doc.add_series_summaries(&series);

    let report_dir = dir.join("report");
    generate_report(&doc, &series, &report_dir)?;
    println!(
        "report ({}, all gates pass = {}): {}",
        doc.version,
        doc.all_gates_pass(),
        report_dir.display()
    );
    for entry in std::fs::read_dir(&report_dir)? {
        println!("  {}", entry?.file_name().to_string_lossy());
    }
    Ok(())
}
