//! EMA ingest tour: parse the canonical CSV, validate against an rms
//! threshold, fill dropout gaps, smooth, resample, and write the
//! articulograph-compatible binary format.
//!
//! Run with `cargo run --example ingest_and_clean`.

use glossa::ema::{
    interpolate_gaps, parse_ag500_pos, parse_ema_csv, resample, smooth, validate, write_ag500_pos,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // A tiny hand-written capture: one tongue coil at 200 Hz, with one
    // noisy sample (rms 0.9) and one dropout (nan).
    let csv = "\
ema-csv v1; rate=200
coil:T1.x,coil:T1.y,coil:T1.z,coil:T1.ox,coil:T1.oy,coil:T1.oz,coil:T1.rms
0.0,0.0,0.0,1,0,0,0.05
1.0,0.1,0.0,1,0,0,0.05
2.0,0.2,0.0,1,0,0,0.9
nan,nan,nan,nan,nan,nan,nan
4.0,0.4,0.0,1,0,0,0.05
5.0,0.5,0.0,1,0,0,0.05
6.0,0.6,0.0,1,0,0,0.05
";
    let raw = parse_ema_csv(csv.as_bytes())?;
    println!(
        "parsed {} frames x {} coils at {} Hz",
        raw.frame_count(),
        raw.coil_ids().len(),
        raw.sample_rate_hz()
    );

    // Validation flags the noisy sample and reports the dropout runs; the
    // input is never mutated.
    let summary = validate(&raw, 0.3, 5);
    println!(
        "validation: {} flagged, longest run {} frames, pass = {}",
        summary.flagged.len(),
        summary.max_run_len,
        summary.pass
    );

    // Apply the flags, then interpolate the (now two-frame) gap.
    let flagged = summary.apply(&raw);
    let filled = interpolate_gaps(&flagged, 5)?;
    for f in 0..filled.frame_count() {
        let s = filled.sample(f, 0);
        println!(
            "frame {f}: x = {:+.3} mm (valid: {})",
            s.position.x, s.valid
        );
    }

    // Light smoothing and a resample to 120 Hz.
    let smoothed = smooth(&filled, 3)?;
    let resampled = resample(&smoothed, 120.0)?;
    println!(
        "after smoothing + resampling: {} frames at {} Hz",
        resampled.frame_count(),
        resampled.sample_rate_hz()
    );

    // Write the articulograph-compatible binary layout and read it back.
    let pos = write_ag500_pos(&resampled)?;
    println!("binary .pos payload: {} bytes", pos.len());
    let parsed = parse_ag500_pos(&pos, resampled.coil_ids().len(), resampled.sample_rate_hz())?;
    let drift = (parsed.sample(0, 0).position - resampled.sample(0, 0).position).norm();
    println!("first-frame drift after the float32 round trip: {drift:.2e} mm");
    Ok(())
}
