//! Wavefront OBJ subset: `v` and `f` records only.
//!
//! Faces with more than three vertices are fan-triangulated; negative
//! indices resolve relative to the vertex count at the face's line;
//! normals, texture coordinates, materials, and groups are ignored.

use std::fmt::Write as _;

use nalgebra::Point3;

use super::{MeshError, TriMesh, MIN_TRIANGLE_AREA_MM2};

pub fn parse_obj(bytes: &[u8]) -> Result<TriMesh, MeshError> {
    let text = std::str::from_utf8(bytes).map_err(|e| MeshError::Obj {
        line: 0,
        msg: format!("not UTF-8: {e}"),
    })?;
    let mut vertices: Vec<Point3<f64>> = Vec::new();
    let mut triangles: Vec<[u32; 3]> = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let mut tokens = raw.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let mut coord = [0.0f64; 3];
                for c in &mut coord {
                    let tok = tokens.next().ok_or(MeshError::Obj {
                        line,
                        msg: "vertex with fewer than 3 coordinates".into(),
                    })?;
                    *c = tok.parse().map_err(|_| MeshError::Obj {
                        line,
                        msg: format!("non-numeric coordinate `{tok}`"),
                    })?;
                }
                // Extra components (w, vertex colors) are ignored.
                vertices.push(Point3::new(coord[0], coord[1], coord[2]));
            }
            Some("f") => {
                let mut face: Vec<u32> = Vec::new();
                for tok in tokens {
                    // `v`, `v/vt`, `v/vt/vn`, `v//vn` — only the vertex index matters.
                    let first = tok.split('/').next().unwrap_or("");
                    let idx: i64 = first.parse().map_err(|_| MeshError::Obj {
                        line,
                        msg: format!("bad face index `{tok}`"),
                    })?;
                    let resolved = if idx > 0 {
                        idx - 1
                    } else if idx < 0 {
                        vertices.len() as i64 + idx
                    } else {
                        return Err(MeshError::Obj {
                            line,
                            msg: "face index 0 is not valid".into(),
                        });
                    };
                    if resolved < 0 || resolved as usize >= vertices.len() {
                        return Err(MeshError::Obj {
                            line,
                            msg: format!(
                                "face index {idx} out of range ({} vertices defined)",
                                vertices.len()
                            ),
                        });
                    }
                    face.push(resolved as u32);
                }
                if face.len() < 3 {
                    return Err(MeshError::Obj {
                        line,
                        msg: "face with fewer than 3 vertices".into(),
                    });
                }
                for k in 1..face.len() - 1 {
                    let tri = [face[0], face[k], face[k + 1]];
                    check_triangle(&vertices, tri, line)?;
                    triangles.push(tri);
                }
            }
            // Comments and all other record types are ignored.
            _ => {}
        }
    }
    TriMesh::new(vertices, triangles)
}

fn check_triangle(vertices: &[Point3<f64>], tri: [u32; 3], line: usize) -> Result<(), MeshError> {
    if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
        return Err(MeshError::Obj {
            line,
            msg: "degenerate face (repeated vertex index)".into(),
        });
    }
    let a = &vertices[tri[0] as usize];
    let b = &vertices[tri[1] as usize];
    let c = &vertices[tri[2] as usize];
    let area = 0.5 * (b - a).cross(&(c - a)).norm();
    if area < MIN_TRIANGLE_AREA_MM2 {
        return Err(MeshError::Obj {
            line,
            msg: format!("degenerate face (area {area:.3e} mm^2)"),
        });
    }
    Ok(())
}

/// Writes the mesh back as OBJ. Coordinates use the shortest decimal form
/// that round-trips the exact f64 value, so `parse_obj(write_obj(m))`
/// reproduces the mesh.
pub fn write_obj(mesh: &TriMesh) -> Vec<u8> {
    let mut out = String::new();
    for v in mesh.vertices() {
        writeln!(out, "v {} {} {}", v.x, v.y, v.z).unwrap();
    }
    for t in mesh.triangles() {
        writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1).unwrap();
    }
    out.into_bytes()
}
