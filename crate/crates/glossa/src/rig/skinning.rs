//! Skinning weights and linear blend skinning.

use nalgebra::{Isometry3, Point3, Vector3};

use crate::mesh::TriMesh;

use super::{Armature, RigError};

/// At most this many bone influences per vertex.
pub const MAX_INFLUENCES: usize = 4;

/// Sparse per-vertex bone influences. Weights are non-negative and sum to 1
/// per vertex. Bones are referenced by id through `bone_ids`, so weights
/// stay valid when armatures are merged.
#[derive(Debug, Clone, PartialEq)]
pub struct SkinWeights {
    pub bone_ids: Vec<String>,
    /// Per vertex: (index into `bone_ids`, weight), at most [`MAX_INFLUENCES`].
    pub influences: Vec<Vec<(u32, f64)>>,
}

impl SkinWeights {
    /// Weight 1 on a single bone for every vertex (rigid attachment, used
    /// for the mandible).
    pub fn rigid(vertex_count: usize, bone_id: &str) -> Self {
        Self {
            bone_ids: vec![bone_id.to_string()],
            influences: vec![vec![(0, 1.0)]; vertex_count],
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.influences.len()
    }
}

/// Distance from a point to the segment [a, b].
fn point_segment_distance(p: &Point3<f64>, a: &Point3<f64>, b: &Point3<f64>) -> f64 {
    let ab = b - a;
    let t = ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

/// Gaussian falloff weights on point-to-bone-segment distance:
/// `exp(-d^2 / (2 sigma^2))`, top-[`MAX_INFLUENCES`] kept and renormalized.
/// Vertices farther than 6 sigma from every bone bind rigidly to the
/// nearest bone.
pub fn compute_skin_weights(
    mesh: &TriMesh,
    armature: &Armature,
    falloff_sigma_mm: f64,
) -> Result<SkinWeights, RigError> {
    if mesh.vertices().is_empty() {
        return Err(RigError::EmptyMesh);
    }
    if falloff_sigma_mm <= 0.0 {
        return Err(RigError::BadSigma(falloff_sigma_mm));
    }
    let globals = armature.bind_globals();
    let segments: Vec<(Point3<f64>, Point3<f64>)> = (0..armature.len())
        .map(|i| {
            let head = Point3::from(globals[i].translation.vector);
            (head, armature.tail(i, &globals))
        })
        .collect();

    let bone_ids: Vec<String> = armature.bones().iter().map(|b| b.id.clone()).collect();
    let cutoff = 6.0 * falloff_sigma_mm;
    let inv_two_sigma_sq = 1.0 / (2.0 * falloff_sigma_mm * falloff_sigma_mm);

    let mut influences = Vec::with_capacity(mesh.vertices().len());
    for v in mesh.vertices() {
        let distances: Vec<f64> = segments
            .iter()
            .map(|(a, b)| point_segment_distance(v, a, b))
            .collect();
        let nearest = distances
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| a.partial_cmp(b).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        if distances[nearest] > cutoff {
            influences.push(vec![(nearest as u32, 1.0)]);
            continue;
        }
        let mut raw: Vec<(u32, f64)> = distances
            .iter()
            .enumerate()
            .map(|(i, d)| (i as u32, (-d * d * inv_two_sigma_sq).exp()))
            .collect();
        // Largest weights first; ties break to the lower bone index.
        raw.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        raw.truncate(MAX_INFLUENCES);
        let total: f64 = raw.iter().map(|(_, w)| w).sum();
        for (_, w) in &mut raw {
            *w /= total;
        }
        raw.sort_by_key(|(i, _)| *i);
        influences.push(raw);
    }
    Ok(SkinWeights {
        bone_ids,
        influences,
    })
}

/// Linear blend skinning: `v' = sum_b w_b * (posed_b * bind_b^-1)(v)`.
/// Topology is unchanged.
pub fn skin(
    mesh: &TriMesh,
    weights: &SkinWeights,
    armature: &Armature,
    bind_globals: &[Isometry3<f64>],
    posed_globals: &[Isometry3<f64>],
) -> Result<TriMesh, RigError> {
    if weights.vertex_count() != mesh.vertices().len() {
        return Err(RigError::WeightShape {
            got: weights.vertex_count(),
            expected: mesh.vertices().len(),
        });
    }
    if bind_globals.len() != armature.len() {
        return Err(RigError::GlobalShape {
            got: bind_globals.len(),
            expected: armature.len(),
        });
    }
    if posed_globals.len() != armature.len() {
        return Err(RigError::GlobalShape {
            got: posed_globals.len(),
            expected: armature.len(),
        });
    }
    // Resolve weight-local bone ids against this armature once.
    let bone_map: Vec<usize> = weights
        .bone_ids
        .iter()
        .map(|id| {
            armature
                .bone_index(id)
                .ok_or_else(|| RigError::UnknownBone(id.clone()))
        })
        .collect::<Result<_, _>>()?;
    let deltas: Vec<Isometry3<f64>> = bone_map
        .iter()
        .map(|&b| posed_globals[b] * bind_globals[b].inverse())
        .collect();

    let vertices: Vec<Point3<f64>> = mesh
        .vertices()
        .iter()
        .zip(&weights.influences)
        .map(|(v, inf)| {
            let mut acc = Vector3::zeros();
            for &(w_bone, w) in inf {
                acc += (deltas[w_bone as usize] * v).coords * w;
            }
            Point3::from(acc)
        })
        .collect();
    mesh.with_deformed_vertices(vertices)
        .map_err(|_| RigError::EmptyMesh)
}
