use super::*;
use crate::ema::{parse_ag500_pos, write_ag500_pos};
use crate::rig::{build_jaw_armature, build_tongue_armature};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

fn p(x: f64, y: f64, z: f64) -> Point3<f64> {
    Point3::new(x, y, z)
}

/// Planar 2-bone chain, lengths 1 and 1 mm, base at the origin along +x.
fn two_link() -> Armature {
    build_tongue_armature(&[p(1.0, 0.0, 0.0), p(2.0, 0.0, 0.0)], 1.0).unwrap()
}

fn tip_target(armature: &Armature, position: Point3<f64>) -> IkTarget {
    let bone = armature.bones().last().unwrap();
    IkTarget {
        bone_id: bone.id.clone(),
        local_offset: Vector3::new(bone.length, 0.0, 0.0),
        position,
        orientation: None,
        position_weight: 1.0,
        orientation_weight: 0.0,
    }
}

fn effector_position(armature: &Armature, pose: &Pose, target: &IkTarget) -> Point3<f64> {
    let globals = forward_kinematics(armature, pose).unwrap();
    let bone = armature.bone_index(&target.bone_id).unwrap();
    globals[bone] * Point3::from(target.local_offset)
}

#[test]
fn satisfied_targets_converge_at_iteration_zero() {
    let armature = two_link();
    let bind = armature.bind_pose();
    let target = tip_target(&armature, p(2.0, 0.0, 0.0));
    let result = solve_frame(&armature, &bind, &[target], &IkConfig::default()).unwrap();
    assert!(result.converged);
    assert_eq!(result.iterations_used, 0);
    assert!(result.residual_mm < 1e-9);
    assert_eq!(result.pose, bind);
}

#[test]
fn two_link_reaches_corner_target() {
    let armature = two_link();
    let config = IkConfig {
        tolerance_mm: 1e-4,
        max_iterations: 200,
        ..IkConfig::default()
    };
    let target = tip_target(&armature, p(1.0, 1.0, 0.0));
    let result = solve_frame(&armature, &armature.bind_pose(), std::slice::from_ref(&target), &config).unwrap();
    assert!(result.converged, "residual {}", result.residual_mm);
    let tip = effector_position(&armature, &result.pose, &target);
    assert!((tip - p(1.0, 1.0, 0.0)).norm() <= 1e-4 + 1e-9);
}

#[test]
fn unreachable_target_stretches_to_the_reach_limit() {
    let armature = two_link();
    let config = IkConfig {
        tolerance_mm: 1e-4,
        max_iterations: 400,
        ..IkConfig::default()
    };
    let direction = Vector3::new(1.0, 1.0, 0.0).normalize();
    let target = tip_target(&armature, Point3::from(direction * 3.0));
    let result = solve_frame(&armature, &armature.bind_pose(), std::slice::from_ref(&target), &config).unwrap();
    assert!(!result.converged);
    let tip = effector_position(&armature, &result.pose, &target);
    let limit = Point3::from(direction * 2.0);
    assert!((tip - limit).norm() < 1e-3, "tip {tip} vs limit {limit}");
    assert!((result.residual_mm - 1.0).abs() < 1e-3);
}

#[test]
fn accepted_steps_never_worsen_the_seed_residual() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let armature = two_link();
    for _ in 0..30 {
        let target = tip_target(
            &armature,
            p(
                rng.random_range(-3.0..3.0),
                rng.random_range(-3.0..3.0),
                rng.random_range(-3.0..3.0),
            ),
        );
        let seed = armature.bind_pose();
        let seed_residual = (effector_position(&armature, &seed, &target) - target.position).norm();
        let result = solve_frame(&armature, &seed, &[target], &IkConfig::default()).unwrap();
        assert!(result.residual_mm <= seed_residual + 1e-12);
    }
}

#[test]
fn joint_limits_are_hard_clamped() {
    let armature = two_link();
    let mut limits = BTreeMap::new();
    limits.insert("tongue0".to_string(), 0.05);
    limits.insert("tongue1".to_string(), 0.05);
    let config = IkConfig {
        joint_limits: Some(limits),
        max_iterations: 100,
        ..IkConfig::default()
    };
    let target = tip_target(&armature, p(0.0, 2.0, 0.0));
    let result = solve_frame(&armature, &armature.bind_pose(), &[target], &config).unwrap();
    for q in &result.pose.rotations {
        assert!(q.angle() <= 0.05 + 1e-9, "angle {}", q.angle());
    }
    assert!(!result.converged);
}

#[test]
fn solver_is_deterministic() {
    let armature = two_link();
    let target = tip_target(&armature, p(0.7, 1.2, 0.3));
    let a = solve_frame(&armature, &armature.bind_pose(), std::slice::from_ref(&target), &IkConfig::default())
        .unwrap();
    let b = solve_frame(&armature, &armature.bind_pose(), &[target], &IkConfig::default()).unwrap();
    assert_eq!(a.pose, b.pose);
    assert_eq!(a.residual_mm.to_bits(), b.residual_mm.to_bits());
    assert_eq!(a.iterations_used, b.iterations_used);
}

/// Tongue chain + jaw forest with bindings for all four coils.
fn rigged_forest() -> (Armature, TargetTopology) {
    let tongue = build_tongue_armature(
        &[p(-30.0, 0.0, 0.0), p(-15.0, 0.0, 0.0), p(0.0, 0.0, 0.0)],
        10.0,
    )
    .unwrap();
    let jaw = build_jaw_armature(&p(10.0, 0.0, -30.0), &p(-40.0, 0.0, -20.0)).unwrap();
    let armature = Armature::merge(&[&tongue, &jaw]).unwrap();
    let bindings = vec![
        binding(&armature, "T1", "tongue0"),
        binding(&armature, "T2", "tongue1"),
        binding(&armature, "T3", "tongue2"),
        binding(&armature, "J1", "jaw"),
    ];
    (armature, TargetTopology { bindings })
}

fn binding(armature: &Armature, coil: &str, bone: &str) -> TargetBinding {
    TargetBinding {
        coil_id: coil.into(),
        bone_id: bone.into(),
        local_offset: Vector3::new(armature.bone(bone).unwrap().length, 0.0, 0.0),
        position_weight: 1.0,
        orientation_weight: 0.0,
    }
}

/// Smooth sinusoidal pose sequence and the effector targets it generates.
fn fk_generated_sequence(
    armature: &Armature,
    topology: &TargetTopology,
    frames: usize,
) -> (Vec<Pose>, TargetSequence) {
    let rate = 200.0;
    let mut poses = Vec::with_capacity(frames);
    let mut target_frames = Vec::with_capacity(frames);
    for f in 0..frames {
        let t = f as f64 / rate;
        let rotations = (0..armature.len())
            .map(|b| {
                let amp = 0.08 + 0.02 * b as f64;
                let freq = 1.0 + 0.5 * b as f64;
                let angle = amp * (2.0 * std::f64::consts::PI * freq * t).sin();
                let axis = if b % 2 == 0 { Vector3::y() } else { Vector3::z() };
                UnitQuaternion::from_scaled_axis(axis * angle)
            })
            .collect();
        let pose = Pose {
            rotations,
            root_translation: Vector3::zeros(),
        };
        let globals = forward_kinematics(armature, &pose).unwrap();
        let positions = topology
            .bindings
            .iter()
            .map(|b| {
                let bone = armature.bone_index(&b.bone_id).unwrap();
                globals[bone] * Point3::from(b.local_offset)
            })
            .collect();
        target_frames.push(TargetFrame {
            positions,
            orientations: vec![None; topology.bindings.len()],
            valid: vec![true; topology.bindings.len()],
        });
        poses.push(pose);
    }
    (
        poses,
        TargetSequence {
            topology: topology.clone(),
            frames: target_frames,
            rate_hz: rate,
        },
    )
}

#[test]
fn fk_round_trip_recovers_effector_trajectories() {
    let (armature, topology) = rigged_forest();
    let (_, sequence) = fk_generated_sequence(&armature, &topology, 80);
    let config = IkConfig::default();
    let clip = solve_sequence(&armature, &sequence, &config).unwrap();
    for (f, residual) in clip.residuals_mm.iter().enumerate() {
        assert!(
            *residual <= config.tolerance_mm,
            "frame {f} residual {residual}"
        );
    }
    // Recovered effector trajectories match the generating ones.
    for (f, pose) in clip.poses.iter().enumerate() {
        let globals = forward_kinematics(&armature, pose).unwrap();
        for (i, b) in topology.bindings.iter().enumerate() {
            let bone = armature.bone_index(&b.bone_id).unwrap();
            let effector = globals[bone] * Point3::from(b.local_offset);
            let target = sequence.frames[f].positions[i];
            assert!((effector - target).norm() <= config.tolerance_mm + 1e-9);
        }
    }
}

#[test]
fn constant_targets_propagate_a_fixed_point() {
    let (armature, topology) = rigged_forest();
    let (_, sequence) = fk_generated_sequence(&armature, &topology, 1);
    let constant = TargetSequence {
        topology: topology.clone(),
        frames: vec![sequence.frames[0].clone(); 10],
        rate_hz: 200.0,
    };
    let clip = solve_sequence(&armature, &constant, &IkConfig::default()).unwrap();
    for residual in &clip.residuals_mm {
        assert!(*residual <= 0.01);
    }
    for f in 1..10 {
        for (a, b) in clip.poses[f].rotations.iter().zip(&clip.poses[1].rotations) {
            assert!(a.angle_to(b) < 1e-9);
        }
        assert_eq!(clip.iterations[f], 0);
    }
}

#[test]
fn single_frame_sequence_equals_bind_seeded_solve() {
    let (armature, topology) = rigged_forest();
    let (_, mut sequence) = fk_generated_sequence(&armature, &topology, 30);
    sequence.frames.truncate(1);
    let clip = solve_sequence(&armature, &sequence, &IkConfig::default()).unwrap();
    let targets: Vec<IkTarget> = topology
        .bindings
        .iter()
        .enumerate()
        .map(|(i, b)| IkTarget {
            bone_id: b.bone_id.clone(),
            local_offset: b.local_offset,
            position: sequence.frames[0].positions[i],
            orientation: None,
            position_weight: 1.0,
            orientation_weight: 0.0,
        })
        .collect();
    let single =
        solve_frame(&armature, &armature.bind_pose(), &targets, &IkConfig::default()).unwrap();
    assert_eq!(clip.poses[0], single.pose);
    assert_eq!(clip.residuals_mm[0].to_bits(), single.residual_mm.to_bits());
}

#[test]
fn invalid_samples_hold_the_last_valid_target() {
    let (armature, topology) = rigged_forest();
    let (_, mut sequence) = fk_generated_sequence(&armature, &topology, 12);
    // Freeze coil 2 mid-sequence.
    for f in 5..9 {
        sequence.frames[f].valid[2] = false;
        sequence.frames[f].positions[2] = p(f64::NAN, 0.0, 0.0);
    }
    let clip = solve_sequence(&armature, &sequence, &IkConfig::default()).unwrap();
    for f in 0..12 {
        assert_eq!(clip.held[f], (5..9).contains(&f));
        assert!(clip.residuals_mm[f].is_finite());
        assert!(clip.residuals_mm[f] <= 0.05, "frame {f}: {}", clip.residuals_mm[f]);
    }
}

#[test]
fn leading_invalids_hold_the_first_valid_target() {
    let (armature, topology) = rigged_forest();
    let (_, mut sequence) = fk_generated_sequence(&armature, &topology, 6);
    sequence.frames[0].valid[0] = false;
    sequence.frames[1].valid[0] = false;
    let clip = solve_sequence(&armature, &sequence, &IkConfig::default()).unwrap();
    assert!(clip.held[0] && clip.held[1] && !clip.held[2]);
}

#[test]
fn all_invalid_coil_is_an_error() {
    let (armature, topology) = rigged_forest();
    let (_, mut sequence) = fk_generated_sequence(&armature, &topology, 4);
    for f in 0..4 {
        sequence.frames[f].valid[1] = false;
    }
    assert!(matches!(
        solve_sequence(&armature, &sequence, &IkConfig::default()),
        Err(IkError::NoValidSamples(c)) if c == "T2"
    ));
}

#[test]
fn warm_starts_use_no_more_iterations_than_cold_starts() {
    let (armature, topology) = rigged_forest();
    let (_, sequence) = fk_generated_sequence(&armature, &topology, 60);
    let config = IkConfig::default();
    let warm = solve_sequence(&armature, &sequence, &config).unwrap();
    let warm_mean: f64 =
        warm.iterations.iter().map(|&i| i as f64).sum::<f64>() / warm.iterations.len() as f64;

    let mut cold_total = 0.0;
    for frame in &sequence.frames {
        let targets: Vec<IkTarget> = topology
            .bindings
            .iter()
            .enumerate()
            .map(|(i, b)| IkTarget {
                bone_id: b.bone_id.clone(),
                local_offset: b.local_offset,
                position: frame.positions[i],
                orientation: None,
                position_weight: 1.0,
                orientation_weight: 0.0,
            })
            .collect();
        let r = solve_frame(&armature, &armature.bind_pose(), &targets, &config).unwrap();
        cold_total += r.iterations_used as f64;
    }
    let cold_mean = cold_total / sequence.frames.len() as f64;
    assert!(
        warm_mean <= cold_mean + 1e-12,
        "warm {warm_mean} vs cold {cold_mean}"
    );
}

#[test]
fn attach_binds_coils_in_role_order() {
    use crate::ema::{CoilSample, EmaTrajectory};
    let (armature, _) = rigged_forest();
    let bind_positions = [
        p(-30.0, 0.0, 0.0),
        p(-15.0, 0.0, 0.0),
        p(0.0, 0.0, 0.0),
        p(10.0, 0.0, -30.0),
    ];
    let frame: Vec<CoilSample> = bind_positions
        .iter()
        .map(|q| CoilSample::new(*q, Vector3::x(), 0.05))
        .collect();
    let traj = EmaTrajectory::new(
        vec!["T1".into(), "T2".into(), "T3".into(), "J1".into(), "X".into()],
        200.0,
        vec![{
            let mut f = frame.clone();
            f.push(CoilSample::new(p(99.0, 0.0, 0.0), Vector3::x(), 0.05));
            f
        }],
    )
    .unwrap();
    let roles = vec![
        CoilRole { coil_id: "T1".into(), articulator: Articulator::Tongue, chain_index: Some(0) },
        CoilRole { coil_id: "T2".into(), articulator: Articulator::Tongue, chain_index: Some(1) },
        CoilRole { coil_id: "T3".into(), articulator: Articulator::Tongue, chain_index: Some(2) },
        CoilRole { coil_id: "J1".into(), articulator: Articulator::Jaw, chain_index: None },
        CoilRole { coil_id: "X".into(), articulator: Articulator::Other, chain_index: None },
    ];
    let seq = attach_targets(
        &armature,
        &roles,
        &traj,
        &Isometry3::identity(),
        TargetWeights::default(),
    )
    .unwrap();
    // The "other" coil produced no target.
    assert_eq!(seq.topology.bindings.len(), 4);
    // Bind-pose frame: every target coincides with its effector.
    let clip = solve_sequence(&armature, &seq, &IkConfig::default()).unwrap();
    assert!(clip.residuals_mm[0] < 1e-9);

    // A pure-translation registration shifts every target by that offset.
    let shift = Isometry3::translation(0.0, 0.0, 10.0);
    let shifted = attach_targets(&armature, &roles, &traj, &shift, TargetWeights::default()).unwrap();
    for (a, b) in seq.frames[0].positions.iter().zip(&shifted.frames[0].positions) {
        assert!((b - (a + Vector3::new(0.0, 0.0, 10.0))).norm() < 1e-12);
    }
}

#[test]
fn attach_rejects_missing_and_unrigged_coils() {
    use crate::ema::{CoilSample, EmaTrajectory};
    let (armature, _) = rigged_forest();
    let traj = EmaTrajectory::new(
        vec!["T1".into()],
        200.0,
        vec![vec![CoilSample::new(p(0.0, 0.0, 0.0), Vector3::x(), 0.0)]],
    )
    .unwrap();
    let missing = vec![CoilRole {
        coil_id: "T9".into(),
        articulator: Articulator::Tongue,
        chain_index: Some(0),
    }];
    assert!(matches!(
        attach_targets(&armature, &missing, &traj, &Isometry3::identity(), TargetWeights::default()),
        Err(IkError::MissingCoil(c)) if c == "T9"
    ));
    let unrigged = vec![CoilRole {
        coil_id: "T1".into(),
        articulator: Articulator::Tongue,
        chain_index: Some(7),
    }];
    assert!(matches!(
        attach_targets(&armature, &unrigged, &traj, &Isometry3::identity(), TargetWeights::default()),
        Err(IkError::UnriggedRole { .. })
    ));
}

#[test]
fn dumped_bind_clip_equals_coil_binds() {
    let (armature, topology) = rigged_forest();
    let clip = AnimationClip {
        frame_rate_hz: 200.0,
        poses: vec![armature.bind_pose(); 3],
        residuals_mm: vec![0.0; 3],
        iterations: vec![0; 3],
        held: vec![false; 3],
    };
    let dumped = dump_targets(&armature, &clip, &topology, 200.0).unwrap();
    let globals = armature.bind_globals();
    for (i, b) in topology.bindings.iter().enumerate() {
        let bone = armature.bone_index(&b.bone_id).unwrap();
        let expected = globals[bone] * Point3::from(b.local_offset);
        for f in 0..3 {
            assert!((dumped.sample(f, i).position - expected).norm() < 1e-9);
        }
    }
    assert_eq!(dumped.coil_ids(), &["T1", "T2", "T3", "J1"]);
}

#[test]
fn dumped_positions_stay_within_the_solver_residual() {
    let (armature, topology) = rigged_forest();
    let (_, sequence) = fk_generated_sequence(&armature, &topology, 40);
    let clip = solve_sequence(&armature, &sequence, &IkConfig::default()).unwrap();
    let dumped = dump_targets(&armature, &clip, &topology, sequence.rate_hz).unwrap();
    for f in 0..clip.frame_count() {
        for (i, _) in topology.bindings.iter().enumerate() {
            let err = (dumped.sample(f, i).position - sequence.frames[f].positions[i]).norm();
            assert!(err <= clip.residuals_mm[f] + 1e-9);
        }
    }
}

#[test]
fn dump_write_parse_round_trip_stays_within_float32_precision() {
    let (armature, topology) = rigged_forest();
    let (_, sequence) = fk_generated_sequence(&armature, &topology, 20);
    let clip = solve_sequence(&armature, &sequence, &IkConfig::default()).unwrap();
    let dumped = dump_targets(&armature, &clip, &topology, sequence.rate_hz).unwrap();
    let bytes = write_ag500_pos(&dumped).unwrap();
    let parsed = parse_ag500_pos(&bytes, dumped.coil_ids().len(), dumped.sample_rate_hz()).unwrap();
    for f in 0..dumped.frame_count() {
        for c in 0..dumped.coil_ids().len() {
            let err = (parsed.sample(f, c).position - dumped.sample(f, c).position).norm();
            assert!(err < 1e-5, "frame {f} coil {c}: {err}");
        }
    }
}

#[test]
fn empty_sequence_is_an_error() {
    let (armature, topology) = rigged_forest();
    let sequence = TargetSequence {
        topology,
        frames: vec![],
        rate_hz: 200.0,
    };
    assert!(matches!(
        solve_sequence(&armature, &sequence, &IkConfig::default()),
        Err(IkError::EmptySequence)
    ));
}
