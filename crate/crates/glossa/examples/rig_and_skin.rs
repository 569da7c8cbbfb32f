//! Rigging tour: tongue-chain and jaw armatures, forward kinematics,
//! Gaussian skin weights, linear blend skinning, and the Kabsch rigid fit.
//!
//! Run with `cargo run --example rig_and_skin`.

use glossa::mesh::TriMesh;
use glossa::rig::{
    build_jaw_armature, build_tongue_armature, compute_skin_weights, fit_rigid,
    forward_kinematics, skin, Armature,
};
use nalgebra::{Point3, UnitQuaternion, Vector3};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // A serial chain through three coil bind positions, rear to front.
    let coils = [
        Point3::new(-30.0, 0.0, 0.0),
        Point3::new(-15.0, 0.0, 0.0),
        Point3::new(0.0, 0.0, 0.0),
    ];
    let tongue = build_tongue_armature(&coils, 10.0)?;
    for bone in tongue.bones() {
        println!(
            "bone {:8} parent {:10} length {:5.1} mm",
            bone.id,
            bone.parent.as_deref().unwrap_or("-"),
            bone.length
        );
    }

    // A single rigid jaw bone from the hinge landmark to the jaw coil.
    let jaw = build_jaw_armature(&Point3::new(10.0, 0.0, -30.0), &Point3::new(-40.0, 0.0, -20.0))?;
    let armature = Armature::merge(&[&tongue, &jaw])?;
    println!("merged forest: {} bones", armature.len());

    // FK at bind reproduces the coil positions at the bone tails.
    let bind = armature.bind_globals();
    for (i, coil) in coils.iter().enumerate() {
        let tail = armature.tail(i, &bind);
        println!("chain bone {i} tail {} vs coil {} (bind)", tail, coil);
    }

    // Bend the middle bone and watch the tails move.
    let mut pose = armature.bind_pose();
    pose.rotations[1] = UnitQuaternion::from_scaled_axis(Vector3::y() * -0.3);
    let posed = forward_kinematics(&armature, &pose)?;
    println!("tip after a -0.3 rad bend: {}", armature.tail(2, &posed));

    // Skin a small strip riding the chain.
    let mut vertices = Vec::new();
    for i in 0..9 {
        vertices.push(Point3::new(-35.0 + 5.0 * i as f64, -2.0, 0.0));
        vertices.push(Point3::new(-35.0 + 5.0 * i as f64, 2.0, 0.0));
    }
    let mut triangles = Vec::new();
    for i in 0..8u32 {
        triangles.push([2 * i, 2 * i + 2, 2 * i + 1]);
        triangles.push([2 * i + 1, 2 * i + 2, 2 * i + 3]);
    }
    let strip = TriMesh::new(vertices, triangles)?;
    let weights = compute_skin_weights(&strip, &tongue, 5.0)?;
    let max_influences = weights.influences.iter().map(Vec::len).max().unwrap();
    println!(
        "skin weights: {} vertices, at most {} influences each",
        weights.vertex_count(),
        max_influences
    );

    let deformed = skin(&strip, &weights, &armature, &bind, &posed)?;
    let moved = deformed
        .vertices()
        .iter()
        .zip(strip.vertices())
        .map(|(a, b)| (a - b).norm())
        .fold(0.0f64, f64::max);
    println!("largest vertex displacement under the bend: {moved:.2} mm");

    // Rigid (Kabsch) fit: recover a known transform from point pairs.
    let cloud = [
        Point3::new(0.0, 0.0, 0.0),
        Point3::new(12.0, 0.0, 0.0),
        Point3::new(0.0, 9.0, 0.0),
        Point3::new(0.0, 0.0, 7.0),
    ];
    let secret = nalgebra::Isometry3::from_parts(
        nalgebra::Translation3::new(3.0, -2.0, 5.0),
        UnitQuaternion::from_scaled_axis(Vector3::new(0.2, 0.7, -0.1)),
    );
    let observed: Vec<Point3<f64>> = cloud.iter().map(|p| secret * p).collect();
    let fit = fit_rigid(&cloud, &observed)?;
    println!(
        "rigid fit: rotation error {:.2e} rad, translation error {:.2e} mm, rms {:.2e}",
        fit.transform.rotation.angle_to(&secret.rotation),
        (fit.transform.translation.vector - secret.translation.vector).norm(),
        fit.rms
    );
    Ok(())
}
