//! Objective evaluation of a compiled animation: target-to-surface
//! distances, palate contact/penetration, deformed-pose similarity, and
//! machine-readable reports.

mod report;

pub use report::{
    generate_report, GateOutcome, PhaseStatus, PhaseSummary, ReportDoc, ScalarMetric,
    SeriesSummary, REPORT_VERSION,
};

use nalgebra::Point3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compiler::{AnimatedModelAsset, MeshRole};
use crate::ema::Articulator;
use crate::mesh::{build_bvh, surface_distance_stats, MeshError, Side, SurfaceDistanceStats, TriMesh};
use crate::rig::{forward_kinematics, skin, RigError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("coil `{0}` is not mapped to a mesh")]
    CoilNotMapped(String),
    #[error("asset has no {0} mesh")]
    MissingMesh(&'static str),
    #[error("frame {frame} out of range ({frames} frames)")]
    FrameOutOfRange { frame: usize, frames: usize },
    #[error("metric series `{0}` is empty")]
    EmptySeries(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Rig(#[from] RigError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Summary statistics over a metric's per-frame values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub rms: f64,
    /// 95th percentile, nearest-rank.
    pub p95: f64,
}

impl SummaryStats {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mut sorted = values.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let rank = ((0.95 * n).ceil() as usize).clamp(1, values.len());
        Self {
            min: sorted[0],
            max: sorted[sorted.len() - 1],
            mean: values.iter().sum::<f64>() / n,
            rms: (values.iter().map(|v| v * v).sum::<f64>() / n).sqrt(),
            p95: sorted[rank - 1],
        }
    }
}

/// A named per-frame metric with its summary.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSeries {
    pub name: String,
    pub unit: String,
    pub rate_hz: f64,
    pub values: Vec<f64>,
    pub summary: SummaryStats,
}

impl MetricSeries {
    pub fn new(name: &str, unit: &str, rate_hz: f64, values: Vec<f64>) -> Result<Self, EvalError> {
        if values.is_empty() {
            return Err(EvalError::EmptySeries(name.to_string()));
        }
        let summary = SummaryStats::of(&values);
        Ok(Self {
            name: name.to_string(),
            unit: unit.to_string(),
            rate_hz,
            values,
            summary,
        })
    }
}

/// Skins the asset mesh with the clip pose at `frame`; meshes without a
/// skin binding (the maxilla, or the mandible when no jaw is rigged) are
/// returned in bind pose.
pub fn deformed_mesh(
    asset: &AnimatedModelAsset,
    role: MeshRole,
    frame: usize,
) -> Result<TriMesh, EvalError> {
    if frame >= asset.frame_count() {
        return Err(EvalError::FrameOutOfRange {
            frame,
            frames: asset.frame_count(),
        });
    }
    let named = asset.mesh(role).ok_or(EvalError::MissingMesh(role_name(role)))?;
    match asset.skin_for(&named.name) {
        Some(mesh_skin) => {
            let bind = asset.armature.bind_globals();
            let posed = forward_kinematics(&asset.armature, &asset.clip.poses[frame])?;
            Ok(skin(&named.mesh, &mesh_skin.weights, &asset.armature, &bind, &posed)?)
        }
        None => Ok(named.mesh.clone()),
    }
}

fn role_name(role: MeshRole) -> &'static str {
    match role {
        MeshRole::Tongue => "tongue",
        MeshRole::Mandible => "mandible",
        MeshRole::Maxilla => "maxilla",
    }
}

/// Per-coil distance from the frame's target position to the deformed
/// surface of the articulator that coil drives (tongue coils against the
/// tongue mesh, the jaw coil against the mandible). One series per coil.
pub fn target_surface_distance(
    asset: &AnimatedModelAsset,
) -> Result<Vec<MetricSeries>, EvalError> {
    let bindings = &asset.targets.topology.bindings;
    // Resolve each coil to a mesh role through its marker's articulator.
    let roles: Vec<MeshRole> = bindings
        .iter()
        .map(|b| {
            let marker = asset
                .markers
                .iter()
                .find(|m| m.coil_id == b.coil_id)
                .ok_or_else(|| EvalError::CoilNotMapped(b.coil_id.clone()))?;
            match marker.articulator {
                Articulator::Tongue => Ok(MeshRole::Tongue),
                Articulator::Jaw => Ok(MeshRole::Mandible),
                _ => Err(EvalError::CoilNotMapped(b.coil_id.clone())),
            }
        })
        .collect::<Result<_, _>>()?;

    let needs_tongue = roles.contains(&MeshRole::Tongue);
    let needs_mandible = roles.contains(&MeshRole::Mandible);
    let frames = asset.frame_count();
    let mut values: Vec<Vec<f64>> = vec![Vec::with_capacity(frames); bindings.len()];

    for frame in 0..frames {
        let tongue_bvh = if needs_tongue {
            Some(build_bvh(&deformed_mesh(asset, MeshRole::Tongue, frame)?)?)
        } else {
            None
        };
        let mandible_bvh = if needs_mandible {
            Some(build_bvh(&deformed_mesh(asset, MeshRole::Mandible, frame)?)?)
        } else {
            None
        };
        for (i, role) in roles.iter().enumerate() {
            let bvh = match role {
                MeshRole::Tongue => tongue_bvh.as_ref().unwrap(),
                _ => mandible_bvh.as_ref().unwrap(),
            };
            let target = asset.targets.frames[frame].positions[i];
            values[i].push(bvh.closest_point(&target).distance);
        }
    }

    bindings
        .iter()
        .zip(values)
        .map(|(b, v)| {
            MetricSeries::new(
                &format!("target_distance.{}", b.coil_id),
                "mm",
                asset.clip.frame_rate_hz,
                v,
            )
        })
        .collect()
}

/// Per-frame palate interaction of the deformed tongue: whether any vertex
/// is in contact (within `contact_eps_mm` on the front side) and the max
/// penetration depth behind the palate surface. Palate normals must point
/// into the oral cavity.
pub fn palate_contact(
    asset: &AnimatedModelAsset,
    palate: &TriMesh,
    contact_eps_mm: f64,
) -> Result<(MetricSeries, MetricSeries), EvalError> {
    palate_contact_sampled(asset, palate, contact_eps_mm, 0)
}

/// [`palate_contact`] with optional interior surface samples per triangle
/// in addition to the mesh vertices (closes coverage gaps on coarse
/// meshes; 0 = vertices only, the default mode).
pub fn palate_contact_sampled(
    asset: &AnimatedModelAsset,
    palate: &TriMesh,
    contact_eps_mm: f64,
    samples_per_triangle: usize,
) -> Result<(MetricSeries, MetricSeries), EvalError> {
    let bvh = build_bvh(palate)?;
    let frames = asset.frame_count();
    let mut contact = Vec::with_capacity(frames);
    let mut penetration = Vec::with_capacity(frames);
    for frame in 0..frames {
        let tongue = deformed_mesh(asset, MeshRole::Tongue, frame)?;
        let mut any_contact = false;
        let mut max_depth = 0.0_f64;
        let mut probe = |p: &Point3<f64>| {
            let hit = bvh.closest_point(p);
            match hit.side {
                Side::Front => {
                    if hit.distance <= contact_eps_mm {
                        any_contact = true;
                    }
                }
                Side::Back => max_depth = max_depth.max(hit.distance),
            }
        };
        for v in tongue.vertices() {
            probe(v);
        }
        if samples_per_triangle > 0 {
            for t in 0..tongue.triangles().len() {
                let [a, b, c] = tongue.triangle_points(t);
                for j in 0..samples_per_triangle {
                    // Deterministic interior points via the same
                    // low-discrepancy pattern as the surface statistics.
                    let index = (t * samples_per_triangle + j) as u64 + 1;
                    let (mut u, mut v) = (halton(index, 2), halton(index, 3));
                    if u + v > 1.0 {
                        u = 1.0 - u;
                        v = 1.0 - v;
                    }
                    probe(&(a + (b - a) * u + (c - a) * v));
                }
            }
        }
        contact.push(if any_contact { 1.0 } else { 0.0 });
        penetration.push(max_depth);
    }
    Ok((
        MetricSeries::new("palate_contact", "bool", asset.clip.frame_rate_hz, contact)?,
        MetricSeries::new("palate_penetration", "mm", asset.clip.frame_rate_hz, penetration)?,
    ))
}

fn halton(mut index: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while index > 0 {
        f /= base as f64;
        r += f * (index % base) as f64;
        index /= base;
    }
    r
}

/// Symmetric surface-distance statistics between a deformed articulator
/// mesh and a reference mesh (e.g. extracted from a volumetric scan of the
/// same pose).
pub fn pose_similarity(
    deformed: &TriMesh,
    reference: &TriMesh,
    samples_per_triangle: usize,
    sample_offset: u64,
) -> Result<SurfaceDistanceStats, EvalError> {
    let fwd_bvh = build_bvh(reference)?;
    let rev_bvh = build_bvh(deformed)?;
    let fwd = surface_distance_stats(deformed, &fwd_bvh, samples_per_triangle, sample_offset)?;
    let rev = surface_distance_stats(reference, &rev_bvh, samples_per_triangle, sample_offset)?;
    Ok(SurfaceDistanceStats {
        mean: fwd.mean.max(rev.mean),
        max: fwd.max.max(rev.max),
        rms: fwd.rms.max(rev.rms),
        sample_count: fwd.sample_count + rev.sample_count,
    })
}
