//! Mesh geometry tour: OBJ parsing, BVH-accelerated closest-point queries,
//! the penetration sign convention, and surface-distance statistics.
//!
//! Run with `cargo run --example mesh_queries`.

use glossa::mesh::{build_bvh, parse_obj, symmetric_surface_distance, write_obj, Side};
use nalgebra::{Point3, Vector3};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // A quad split into two triangles, fan-triangulated from the OBJ face.
    let obj = "v 0 0 0\nv 10 0 0\nv 10 10 0\nv 0 10 0\nf 1 2 3 4\n";
    let mesh = parse_obj(obj.as_bytes())?;
    println!(
        "parsed {} vertices, {} triangles (quad fan-triangulated)",
        mesh.vertices().len(),
        mesh.triangles().len()
    );

    let bvh = build_bvh(&mesh)?;
    for query in [
        Point3::new(5.0, 5.0, 3.0),   // above the interior
        Point3::new(15.0, 5.0, 0.0),  // beyond an edge
        Point3::new(-2.0, -2.0, 1.0), // beyond a corner
    ] {
        let hit = bvh.closest_point(&query);
        println!(
            "query {query} -> distance {:.3} mm, closest {}, triangle {}, side {:?}",
            hit.distance, hit.closest_point, hit.triangle_index, hit.side
        );
    }

    // Penetration is one-sided: flip the winding so the normals point down
    // and the surface behaves like a palate with the cavity below it.
    let palate = parse_obj(obj.as_bytes())?;
    let flipped: Vec<[u32; 3]> = palate.triangles().iter().map(|t| [t[0], t[2], t[1]]).collect();
    let palate = glossa::mesh::TriMesh::new(palate.vertices().to_vec(), flipped)?;
    let palate_bvh = build_bvh(&palate)?;
    let below = Point3::new(5.0, 5.0, -1.0);
    let above = Point3::new(5.0, 5.0, 0.4);
    println!(
        "point below palate: side {:?}, penetration {:.2} mm, contact(0.5mm) {}",
        palate_bvh.closest_point(&below).side,
        palate_bvh.penetration_depth(&below),
        palate_bvh.contact(&below, 0.5),
    );
    println!(
        "point behind palate: side {:?}, penetration {:.2} mm",
        palate_bvh.closest_point(&above).side,
        palate_bvh.penetration_depth(&above),
    );
    assert_eq!(palate_bvh.closest_point(&above).side, Side::Back);

    // Symmetric surface distance between a mesh and a translated copy.
    let lifted = mesh.with_deformed_vertices(
        mesh.vertices().iter().map(|v| v + Vector3::new(0.0, 0.0, 2.5)).collect(),
    )?;
    let stats = symmetric_surface_distance(&mesh, &lifted, 8, 0)?;
    println!(
        "parallel planes 2.5 mm apart: mean {:.3}, max {:.3}, rms {:.3} over {} samples",
        stats.mean, stats.max, stats.rms, stats.sample_count
    );

    // Writing is the exact inverse of parsing.
    let round = parse_obj(&write_obj(&mesh))?;
    assert_eq!(round.triangles(), mesh.triangles());
    println!("OBJ round trip preserved the topology");
    Ok(())
}
