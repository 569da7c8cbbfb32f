//! Inverse kinematics tour: the analytic two-link case, an unreachable
//! target, and a sequence solve with warm starts.
//!
//! Run with `cargo run --example solve_ik`.

use glossa::ik::{
    solve_frame, solve_sequence, IkConfig, IkTarget, TargetBinding, TargetFrame, TargetSequence,
    TargetTopology,
};
use glossa::rig::forward_kinematics;
use glossa::synth::two_link_armature;
use nalgebra::{Point3, Vector3};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let armature = two_link_armature();
    let tip = armature.bones().last().unwrap();
    let tip_offset = Vector3::new(tip.length, 0.0, 0.0);
    let config = IkConfig {
        tolerance_mm: 1e-4,
        max_iterations: 200,
        ..IkConfig::default()
    };

    // Reachable corner target: the analytic solution is (0, 90 degrees).
    let target = IkTarget {
        bone_id: tip.id.clone(),
        local_offset: tip_offset,
        position: Point3::new(1.0, 1.0, 0.0),
        orientation: None,
        position_weight: 1.0,
        orientation_weight: 0.0,
    };
    let result = solve_frame(&armature, &armature.bind_pose(), std::slice::from_ref(&target), &config)?;
    println!(
        "corner target: converged = {}, residual {:.2e} mm after {} iterations",
        result.converged, result.residual_mm, result.iterations_used
    );
    let degrees: Vec<f64> = result
        .pose
        .rotations
        .iter()
        .map(|q| q.angle().to_degrees())
        .collect();
    println!("joint angles: {:.4} and {:.4} degrees (analytic: 0 and 90)", degrees[0], degrees[1]);

    // Out of reach: the chain stretches to the boundary of its workspace.
    let far = IkTarget {
        position: Point3::from(Vector3::new(1.0, 1.0, 0.0).normalize() * 3.0),
        ..target
    };
    let result = solve_frame(&armature, &armature.bind_pose(), std::slice::from_ref(&far), &config)?;
    let globals = forward_kinematics(&armature, &result.pose)?;
    let reached = globals[armature.len() - 1] * Point3::from(tip_offset);
    println!(
        "unreachable target at 3.0 mm: converged = {}, residual {:.4} mm, tip at {}",
        result.converged, result.residual_mm, reached
    );

    // Sequence solve with warm starts: the tip tracks a quarter circle.
    let frames = 50;
    let topology = TargetTopology {
        bindings: vec![TargetBinding {
            coil_id: "tip".into(),
            bone_id: tip.id.clone(),
            local_offset: tip_offset,
            position_weight: 1.0,
            orientation_weight: 0.0,
        }],
    };
    let sequence = TargetSequence {
        topology,
        frames: (0..frames)
            .map(|k| {
                let a = std::f64::consts::FRAC_PI_2 * k as f64 / (frames - 1) as f64;
                TargetFrame {
                    positions: vec![Point3::new(1.0 + a.cos(), a.sin(), 0.0)],
                    orientations: vec![None],
                    valid: vec![true],
                }
            })
            .collect(),
        rate_hz: 200.0,
    };
    let clip = solve_sequence(&armature, &sequence, &config)?;
    let max_residual = clip.residuals_mm.iter().cloned().fold(0.0, f64::max);
    let mean_iterations =
        clip.iterations.iter().map(|&i| i as f64).sum::<f64>() / frames as f64;
    println!(
        "sequence: {} frames, max residual {:.2e} mm, mean iterations {:.2} (warm starts)",
        frames, max_residual, mean_iterations
    );
    Ok(())
}
