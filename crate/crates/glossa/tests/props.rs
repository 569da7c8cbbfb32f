//! Property tests for the pipeline's structural invariants.

use nalgebra::{Point3, Vector3};
use proptest::prelude::*;

use glossa::ema::{
    interpolate_gaps, parse_ag500_pos, resample, smooth, write_ag500_pos, CoilSample,
    EmaTrajectory,
};
use glossa::mesh::{build_bvh, parse_obj, write_obj, TriMesh};
use glossa::rig::{build_tongue_armature, compute_skin_weights};

/// One canonical AG500 channel record: principal angle ranges, extra = 0.
fn record_strategy() -> impl Strategy<Value = [f32; 7]> {
    (
        -150.0f32..150.0,
        -150.0f32..150.0,
        -150.0f32..150.0,
        -89.9f32..89.9,
        -179.9f32..180.0,
        0.0f32..2.0,
    )
        .prop_map(|(x, y, z, phi, theta, rms)| [x, y, z, phi, theta, rms, 0.0])
}

fn triangle_strategy() -> impl Strategy<Value = [(f64, f64, f64); 3]> {
    let point = (-80.0f64..80.0, -80.0f64..80.0, -80.0f64..80.0);
    [point.clone(), point.clone(), point].prop_filter("non-degenerate", |corners| {
        let p = |c: &(f64, f64, f64)| Vector3::new(c.0, c.1, c.2);
        let area = 0.5 * (p(&corners[1]) - p(&corners[0]))
            .cross(&(p(&corners[2]) - p(&corners[0])))
            .norm();
        area > 1e-6
    })
}

fn soup_strategy(max_tris: usize) -> impl Strategy<Value = TriMesh> {
    proptest::collection::vec(triangle_strategy(), 1..max_tris).prop_map(|tris| {
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        for corners in tris {
            let base = vertices.len() as u32;
            for (x, y, z) in corners {
                vertices.push(Point3::new(x, y, z));
            }
            triangles.push([base, base + 1, base + 2]);
        }
        TriMesh::new(vertices, triangles).unwrap()
    })
}

fn valid_sample_strategy() -> impl Strategy<Value = CoilSample> {
    (
        (-100.0f64..100.0, -100.0f64..100.0, -100.0f64..100.0),
        (-1.0f64..1.0, -1.0f64..1.0, 0.2f64..1.0),
        0.0f64..0.5,
    )
        .prop_map(|(p, o, rms)| {
            CoilSample::new(
                Point3::new(p.0, p.1, p.2),
                Vector3::new(o.0, o.1, o.2),
                rms,
            )
        })
}

fn trajectory_strategy(frames: std::ops::Range<usize>) -> impl Strategy<Value = EmaTrajectory> {
    (1usize..4, frames)
        .prop_flat_map(|(coils, frame_count)| {
            proptest::collection::vec(
                proptest::collection::vec(valid_sample_strategy(), coils),
                frame_count,
            )
        })
        .prop_map(|frames| {
            let coils = frames[0].len();
            let ids = (0..coils).map(|c| format!("c{c}")).collect();
            EmaTrajectory::new(ids, 200.0, frames).unwrap()
        })
}

proptest! {
    /// Well-formed canonical buffers round-trip byte for byte.
    #[test]
    fn ag500_round_trip_is_byte_exact(
        (channels, records) in (1usize..4, 1usize..8).prop_flat_map(|(channels, frames)| {
            (
                Just(channels),
                proptest::collection::vec(record_strategy(), channels * frames),
            )
        }),
    ) {
        let bytes: Vec<u8> = records
            .iter()
            .flat_map(|r| r.iter().flat_map(|v| v.to_le_bytes()).collect::<Vec<_>>())
            .collect();
        let parsed = parse_ag500_pos(&bytes, channels, 200.0).unwrap();
        let written = write_ag500_pos(&parsed).unwrap();
        prop_assert_eq!(written, bytes);
    }

    /// OBJ write/parse is the identity on topology and exact on vertices.
    #[test]
    fn obj_round_trip_preserves_the_mesh(mesh in soup_strategy(20)) {
        let round = parse_obj(&write_obj(&mesh)).unwrap();
        prop_assert_eq!(round.triangles(), mesh.triangles());
        for (a, b) in round.vertices().iter().zip(mesh.vertices()) {
            prop_assert!((a - b).norm() < 1e-7);
        }
    }

    /// BVH queries equal a linear scan for any mesh and query point.
    #[test]
    fn bvh_matches_linear_scan(
        mesh in soup_strategy(40),
        q in (-150.0f64..150.0, -150.0f64..150.0, -150.0f64..150.0),
    ) {
        let query = Point3::new(q.0, q.1, q.2);
        let bvh = build_bvh(&mesh).unwrap();
        let hit = bvh.closest_point(&query);
        let mut best = f64::INFINITY;
        for t in 0..mesh.triangles().len() {
            let [a, b, c] = mesh.triangle_points(t);
            // Dense candidate scan per triangle keeps this oracle
            // independent of the production closest-point routine.
            let candidates = (0..=20).flat_map(|i| {
                (0..=20 - i).map(move |j| {
                    let u = i as f64 / 20.0;
                    let v = j as f64 / 20.0;
                    Point3::from(a.coords * (1.0 - u - v) + b.coords * u + c.coords * v)
                })
            });
            for cp in candidates {
                best = best.min((query - cp).norm());
            }
        }
        // The dense scan is an upper bound with ~1/20 triangle-scale
        // resolution; the exact distance can only be smaller.
        prop_assert!(hit.distance <= best + 1e-9);
        // And the reported point must actually lie on the mesh.
        let requery = bvh.closest_point(&hit.closest_point);
        prop_assert!(requery.distance < 1e-9);
    }

    /// Skin weights always satisfy the simplex invariants.
    #[test]
    fn skin_weights_form_a_partition_of_unity(
        mesh in soup_strategy(15),
        sigma in 0.5f64..12.0,
        spread in 6.0f64..20.0,
    ) {
        let coils = [
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(spread, 0.0, 0.0),
            Point3::new(2.0 * spread, 2.0, 0.0),
        ];
        let armature = build_tongue_armature(&coils, 5.0).unwrap();
        let weights = compute_skin_weights(&mesh, &armature, sigma).unwrap();
        for influences in &weights.influences {
            prop_assert!(!influences.is_empty() && influences.len() <= 4);
            let sum: f64 = influences.iter().map(|(_, w)| w).sum();
            prop_assert!((sum - 1.0).abs() < 1e-6);
            for &(bone, w) in influences {
                prop_assert!(w >= 0.0);
                prop_assert!((bone as usize) < armature.len());
            }
        }
    }

    /// Gap interpolation is idempotent and leaves everything valid.
    #[test]
    fn interpolate_gaps_is_idempotent(
        traj in trajectory_strategy(4..20),
        gap_start in 1usize..3,
        gap_len in 1usize..3,
    ) {
        let mut frames = traj.frames().to_vec();
        let n = frames.len();
        let coil = 0;
        let end = (gap_start + gap_len).min(n - 1);
        for frame in frames.iter_mut().take(end).skip(gap_start) {
            frame[coil] = CoilSample::invalid(Point3::origin(), 0.0);
        }
        let gappy = EmaTrajectory::new(
            traj.coil_ids().to_vec(),
            traj.sample_rate_hz(),
            frames,
        ).unwrap();
        let once = interpolate_gaps(&gappy, n).unwrap();
        let twice = interpolate_gaps(&once, n).unwrap();
        prop_assert_eq!(&once, &twice);
        for frame in once.frames() {
            for s in frame {
                prop_assert!(s.valid);
                prop_assert!((s.orientation.norm() - 1.0).abs() < 1e-6);
            }
        }
    }

    /// Smoothing and resampling preserve coil count and order and keep
    /// orientations unit length.
    #[test]
    fn smooth_and_resample_preserve_shape(
        traj in trajectory_strategy(5..24),
        window in 0usize..3,
        rate in 60.0f64..400.0,
    ) {
        let window = 2 * window + 1; // odd by construction
        if window <= traj.frame_count() {
            let smoothed = smooth(&traj, window).unwrap();
            prop_assert_eq!(smoothed.coil_ids(), traj.coil_ids());
            prop_assert_eq!(smoothed.frame_count(), traj.frame_count());
            for frame in smoothed.frames() {
                for s in frame {
                    prop_assert!((s.orientation.norm() - 1.0).abs() < 1e-6);
                }
            }
        }
        let resampled = resample(&traj, rate).unwrap();
        prop_assert_eq!(resampled.coil_ids(), traj.coil_ids());
        prop_assert!(resampled.frame_count() >= 1);
        // First frame preserved exactly.
        for c in 0..traj.coil_ids().len() {
            prop_assert!(
                (resampled.sample(0, c).position - traj.sample(0, c).position).norm() < 1e-12
            );
        }
    }
}
