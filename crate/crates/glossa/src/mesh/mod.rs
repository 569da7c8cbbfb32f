//! Triangle meshes, Wavefront OBJ I/O, accelerated distance queries, and
//! mesh-to-mesh comparison metrics.
//!
//! Meshes are indexed triangle surfaces in millimeters with derived
//! per-triangle unit normals (counter-clockwise winding). They are immutable
//! after construction; [`Bvh`] queries are read-only and safe to share
//! across threads.

mod bvh;
mod obj;

pub use bvh::{build_bvh, Bvh};
pub use obj::{parse_obj, write_obj};

use nalgebra::{Point3, Vector3};
use thiserror::Error;

/// Triangles with area below this are rejected as degenerate on load.
pub const MIN_TRIANGLE_AREA_MM2: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("OBJ line {line}: {msg}")]
    Obj { line: usize, msg: String },
    #[error("triangle {triangle} references vertex {vertex}, but the mesh has {vertex_count} vertices")]
    IndexOutOfRange {
        triangle: usize,
        vertex: usize,
        vertex_count: usize,
    },
    #[error("triangle {triangle} repeats a vertex index")]
    RepeatedIndex { triangle: usize },
    #[error("triangle {triangle} is degenerate (area {area:.3e} mm^2)")]
    DegenerateTriangle { triangle: usize, area: f64 },
    #[error("mesh has no triangles")]
    Empty,
    #[error("samples_per_triangle must be >= 1")]
    NoSamples,
    #[error("vertex count mismatch: mesh has {expected}, got {got}")]
    VertexCount { expected: usize, got: usize },
}

/// Indexed triangle surface in millimeters.
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    vertices: Vec<Point3<f64>>,
    triangles: Vec<[u32; 3]>,
    normals: Vec<Vector3<f64>>,
}

impl TriMesh {
    /// Builds a mesh, validating indices and rejecting degenerate triangles.
    pub fn new(vertices: Vec<Point3<f64>>, triangles: Vec<[u32; 3]>) -> Result<Self, MeshError> {
        let mut normals = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            for &v in tri {
                if v as usize >= vertices.len() {
                    return Err(MeshError::IndexOutOfRange {
                        triangle: t,
                        vertex: v as usize,
                        vertex_count: vertices.len(),
                    });
                }
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(MeshError::RepeatedIndex { triangle: t });
            }
            let (normal, area) = triangle_normal_area(
                &vertices[tri[0] as usize],
                &vertices[tri[1] as usize],
                &vertices[tri[2] as usize],
            );
            if area < MIN_TRIANGLE_AREA_MM2 {
                return Err(MeshError::DegenerateTriangle { triangle: t, area });
            }
            normals.push(normal);
        }
        Ok(Self {
            vertices,
            triangles,
            normals,
        })
    }

    /// Same topology with replaced vertex positions (e.g. after skinning).
    ///
    /// Normals are recomputed; a triangle that became degenerate under the
    /// deformation keeps its previous normal direction so queries stay
    /// well-defined.
    pub fn with_deformed_vertices(&self, vertices: Vec<Point3<f64>>) -> Result<Self, MeshError> {
        if vertices.len() != self.vertices.len() {
            return Err(MeshError::VertexCount {
                expected: self.vertices.len(),
                got: vertices.len(),
            });
        }
        let mut normals = Vec::with_capacity(self.triangles.len());
        for (t, tri) in self.triangles.iter().enumerate() {
            let (normal, area) = triangle_normal_area(
                &vertices[tri[0] as usize],
                &vertices[tri[1] as usize],
                &vertices[tri[2] as usize],
            );
            if area < MIN_TRIANGLE_AREA_MM2 {
                normals.push(self.normals[t]);
            } else {
                normals.push(normal);
            }
        }
        Ok(Self {
            vertices,
            triangles: self.triangles.clone(),
            normals,
        })
    }

    pub fn vertices(&self) -> &[Point3<f64>] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    /// Per-triangle unit normals (counter-clockwise winding).
    pub fn normals(&self) -> &[Vector3<f64>] {
        &self.normals
    }

    pub fn triangle_points(&self, t: usize) -> [Point3<f64>; 3] {
        let tri = self.triangles[t];
        [
            self.vertices[tri[0] as usize],
            self.vertices[tri[1] as usize],
            self.vertices[tri[2] as usize],
        ]
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }
}

fn triangle_normal_area(a: &Point3<f64>, b: &Point3<f64>, c: &Point3<f64>) -> (Vector3<f64>, f64) {
    let cross = (b - a).cross(&(c - a));
    let norm = cross.norm();
    let area = 0.5 * norm;
    if norm > 0.0 {
        (cross / norm, area)
    } else {
        (Vector3::zeros(), 0.0)
    }
}

/// Which side of an oriented surface a query point falls on.
///
/// `Front` is the half-space the triangle normal points into; a point
/// exactly on the surface counts as `Front` (touching is contact, not
/// penetration).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Front,
    Back,
}

/// Result of a closest-point query against a triangle set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceQueryResult {
    /// Distance from the query to the closest point, mm.
    pub distance: f64,
    /// Closest point on the triangle set.
    pub closest_point: Point3<f64>,
    /// Index of the closest triangle (ties break to the lowest index).
    pub triangle_index: usize,
    /// Side of the closest triangle the query falls on.
    pub side: Side,
}

/// Directed or symmetric surface-distance summary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceDistanceStats {
    pub mean: f64,
    /// One-sided Hausdorff distance, mm.
    pub max: f64,
    pub rms: f64,
    pub sample_count: usize,
}

/// Van der Corput radical inverse; drives the low-discrepancy surface
/// sampling used by [`surface_distance_stats`].
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

/// Low-discrepancy interior point of triangle `t` for global sample `index`.
fn triangle_sample(mesh: &TriMesh, t: usize, index: u64) -> Point3<f64> {
    let mut u = halton(index + 1, 2);
    let mut v = halton(index + 1, 3);
    if u + v > 1.0 {
        u = 1.0 - u;
        v = 1.0 - v;
    }
    let [a, b, c] = mesh.triangle_points(t);
    a + (b - a) * u + (c - a) * v
}

/// Directed surface-distance statistics from `source` to `target`.
///
/// Samples the source surface at every vertex plus `samples_per_triangle`
/// low-discrepancy interior points per triangle; `sample_offset` shifts the
/// deterministic sample sequence and is recorded in evaluation reports.
pub fn surface_distance_stats(
    source: &TriMesh,
    target: &Bvh,
    samples_per_triangle: usize,
    sample_offset: u64,
) -> Result<SurfaceDistanceStats, MeshError> {
    if source.is_empty() {
        return Err(MeshError::Empty);
    }
    if samples_per_triangle == 0 {
        return Err(MeshError::NoSamples);
    }
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut max = 0.0_f64;
    let mut count = 0usize;
    let mut push = |d: f64| {
        sum += d;
        sum_sq += d * d;
        max = max.max(d);
        count += 1;
    };
    for v in source.vertices() {
        push(target.closest_point(v).distance);
    }
    for t in 0..source.triangles().len() {
        for j in 0..samples_per_triangle {
            let index = sample_offset + (t * samples_per_triangle + j) as u64;
            let p = triangle_sample(source, t, index);
            push(target.closest_point(&p).distance);
        }
    }
    Ok(SurfaceDistanceStats {
        mean: sum / count as f64,
        max,
        rms: (sum_sq / count as f64).sqrt(),
        sample_count: count,
    })
}

/// Symmetric variant: element-wise max of the two directed statistics.
pub fn symmetric_surface_distance(
    a: &TriMesh,
    b: &TriMesh,
    samples_per_triangle: usize,
    sample_offset: u64,
) -> Result<SurfaceDistanceStats, MeshError> {
    let bvh_a = build_bvh(a)?;
    let bvh_b = build_bvh(b)?;
    let ab = surface_distance_stats(a, &bvh_b, samples_per_triangle, sample_offset)?;
    let ba = surface_distance_stats(b, &bvh_a, samples_per_triangle, sample_offset)?;
    Ok(SurfaceDistanceStats {
        mean: ab.mean.max(ba.mean),
        max: ab.max.max(ba.max),
        rms: ab.rms.max(ba.rms),
        sample_count: ab.sample_count + ba.sample_count,
    })
}
