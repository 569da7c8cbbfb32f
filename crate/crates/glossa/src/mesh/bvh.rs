//! Axis-aligned bounding-box hierarchy for closest-point and penetration
//! queries over a triangle set.
//!
//! Queries return results identical to a brute-force scan over all
//! triangles, including the lowest-triangle-index tie-break: candidates are
//! compared lexicographically on (distance, index) and nodes are pruned only
//! when strictly farther than the current best, so traversal order cannot
//! change the outcome.

use nalgebra::{Point3, Vector3};

use super::{DistanceQueryResult, MeshError, Side, TriMesh};

const LEAF_SIZE: usize = 4;

#[derive(Debug, Clone, Copy)]
struct Aabb {
    min: Point3<f64>,
    max: Point3<f64>,
}

impl Aabb {
    fn empty() -> Self {
        Self {
            min: Point3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY),
            max: Point3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
        }
    }

    fn grow(&mut self, p: &Point3<f64>) {
        for k in 0..3 {
            self.min[k] = self.min[k].min(p[k]);
            self.max[k] = self.max[k].max(p[k]);
        }
    }

    /// Squared distance from a point to the box (0 inside).
    fn distance_sq(&self, p: &Point3<f64>) -> f64 {
        let mut d = 0.0;
        for k in 0..3 {
            let v = if p[k] < self.min[k] {
                self.min[k] - p[k]
            } else if p[k] > self.max[k] {
                p[k] - self.max[k]
            } else {
                0.0
            };
            d += v * v;
        }
        d
    }
}

#[derive(Debug)]
enum Node {
    Leaf { start: usize, count: usize },
    Inner { aabb_left: Aabb, aabb_right: Aabb, left: usize, right: usize },
}

/// Immutable acceleration structure; owns a copy of the triangle data so
/// queries never depend on the source mesh's lifetime.
#[derive(Debug)]
pub struct Bvh {
    nodes: Vec<Node>,
    root_aabb: Aabb,
    /// Triangle corner points in leaf-contiguous order.
    corners: Vec<[Point3<f64>; 3]>,
    normals: Vec<Vector3<f64>>,
    /// Original triangle index per leaf-contiguous slot.
    indices: Vec<usize>,
}

/// Builds the hierarchy; errors on an empty mesh.
pub fn build_bvh(mesh: &TriMesh) -> Result<Bvh, MeshError> {
    if mesh.is_empty() {
        return Err(MeshError::Empty);
    }
    let tri_count = mesh.triangles().len();
    let mut order: Vec<usize> = (0..tri_count).collect();
    let centroids: Vec<Point3<f64>> = (0..tri_count)
        .map(|t| {
            let [a, b, c] = mesh.triangle_points(t);
            Point3::from((a.coords + b.coords + c.coords) / 3.0)
        })
        .collect();
    let bounds: Vec<Aabb> = (0..tri_count)
        .map(|t| {
            let mut bb = Aabb::empty();
            for p in mesh.triangle_points(t) {
                bb.grow(&p);
            }
            bb
        })
        .collect();

    let mut nodes = Vec::new();
    let root_aabb = merge_bounds(&bounds, &order);
    build_node(&mut nodes, &mut order, 0, tri_count, &centroids, &bounds);

    let corners = order.iter().map(|&t| mesh.triangle_points(t)).collect();
    let normals = order.iter().map(|&t| mesh.normals()[t]).collect();
    Ok(Bvh {
        nodes,
        root_aabb,
        corners,
        normals,
        indices: order,
    })
}

fn merge_bounds(bounds: &[Aabb], order: &[usize]) -> Aabb {
    let mut bb = Aabb::empty();
    for &t in order {
        bb.grow(&bounds[t].min);
        bb.grow(&bounds[t].max);
    }
    bb
}

/// Recursive median split on the longest centroid axis; returns node index.
fn build_node(
    nodes: &mut Vec<Node>,
    order: &mut [usize],
    start: usize,
    count: usize,
    centroids: &[Point3<f64>],
    bounds: &[Aabb],
) -> usize {
    let slot = nodes.len();
    if count <= LEAF_SIZE {
        nodes.push(Node::Leaf { start, count });
        return slot;
    }
    let slice = &mut order[start..start + count];
    let mut cmin = Point3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
    let mut cmax = Point3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &t in slice.iter() {
        for k in 0..3 {
            cmin[k] = cmin[k].min(centroids[t][k]);
            cmax[k] = cmax[k].max(centroids[t][k]);
        }
    }
    let extent = cmax - cmin;
    let axis = if extent.x >= extent.y && extent.x >= extent.z {
        0
    } else if extent.y >= extent.z {
        1
    } else {
        2
    };
    let mid = count / 2;
    // Stable tie-break on the original index keeps construction deterministic.
    slice.sort_unstable_by(|&a, &b| {
        centroids[a][axis]
            .partial_cmp(&centroids[b][axis])
            .unwrap()
            .then(a.cmp(&b))
    });

    nodes.push(Node::Leaf { start: 0, count: 0 }); // placeholder
    let left = build_node(nodes, order, start, mid, centroids, bounds);
    let right = build_node(nodes, order, start + mid, count - mid, centroids, bounds);
    let aabb_left = merge_bounds(bounds, &order[start..start + mid]);
    let aabb_right = merge_bounds(bounds, &order[start + mid..start + count]);
    nodes[slot] = Node::Inner {
        aabb_left,
        aabb_right,
        left,
        right,
    };
    slot
}

struct Best {
    distance_sq: f64,
    point: Point3<f64>,
    triangle: usize,
    slot: usize,
}

impl Bvh {
    /// Exact closest point on the triangle set; vertex, edge, and interior
    /// cases all handled. Ties break to the lowest original triangle index.
    pub fn closest_point(&self, query: &Point3<f64>) -> DistanceQueryResult {
        let mut best = Best {
            distance_sq: f64::INFINITY,
            point: *query,
            triangle: usize::MAX,
            slot: 0,
        };
        self.visit(0, &self.root_aabb, query, &mut best);
        let distance = best.distance_sq.sqrt();
        let normal = self.normals[best.slot];
        let side = if (query - best.point).dot(&normal) < 0.0 {
            Side::Back
        } else {
            Side::Front
        };
        DistanceQueryResult {
            distance,
            closest_point: best.point,
            triangle_index: best.triangle,
            side,
        }
    }

    /// Depth behind the oriented surface: 0 on the front side or on the
    /// surface, otherwise the distance to the closest point.
    pub fn penetration_depth(&self, query: &Point3<f64>) -> f64 {
        let hit = self.closest_point(query);
        match hit.side {
            Side::Front => 0.0,
            Side::Back => hit.distance,
        }
    }

    /// Proximity contact on the permitted side: within `contact_eps_mm` of
    /// the surface with side = front. Mutually exclusive with penetration.
    pub fn contact(&self, query: &Point3<f64>, contact_eps_mm: f64) -> bool {
        let hit = self.closest_point(query);
        hit.side == Side::Front && hit.distance <= contact_eps_mm
    }

    fn visit(&self, node: usize, aabb: &Aabb, query: &Point3<f64>, best: &mut Best) {
        // Prune only when strictly farther; equal-distance nodes must still
        // be visited for the index tie-break to match brute force.
        if aabb.distance_sq(query) > best.distance_sq {
            return;
        }
        match &self.nodes[node] {
            Node::Leaf { start, count } => {
                for slot in *start..*start + *count {
                    let [a, b, c] = self.corners[slot];
                    let cp = closest_point_on_triangle(query, &a, &b, &c);
                    let d = (query - cp).norm_squared();
                    let idx = self.indices[slot];
                    if d < best.distance_sq || (d == best.distance_sq && idx < best.triangle) {
                        best.distance_sq = d;
                        best.point = cp;
                        best.triangle = idx;
                        best.slot = slot;
                    }
                }
            }
            Node::Inner {
                aabb_left,
                aabb_right,
                left,
                right,
            } => {
                let dl = aabb_left.distance_sq(query);
                let dr = aabb_right.distance_sq(query);
                if dl <= dr {
                    self.visit(*left, aabb_left, query, best);
                    self.visit(*right, aabb_right, query, best);
                } else {
                    self.visit(*right, aabb_right, query, best);
                    self.visit(*left, aabb_left, query, best);
                }
            }
        }
    }

    #[cfg(test)]
    fn node_count(&self) -> usize {
        self.nodes.len()
    }
}

/// Closest point on triangle (a, b, c) to p, by Voronoi-region
/// classification.
pub fn closest_point_on_triangle(
    p: &Point3<f64>,
    a: &Point3<f64>,
    b: &Point3<f64>,
    c: &Point3<f64>,
) -> Point3<f64> {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }

    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }

    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }

    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }

    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }

    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }

    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn p(x: f64, y: f64, z: f64) -> Point3<f64> {
        Point3::new(x, y, z)
    }

    fn one_triangle() -> TriMesh {
        TriMesh::new(
            vec![p(0.0, 0.0, 0.0), p(1.0, 0.0, 0.0), p(0.0, 1.0, 0.0)],
            vec![[0, 1, 2]],
        )
        .unwrap()
    }

    /// Independent of the BVH path: linear scan with the same tie-break.
    fn brute_force(mesh: &TriMesh, q: &Point3<f64>) -> (f64, Point3<f64>, usize) {
        let mut best = (f64::INFINITY, *q, usize::MAX);
        for t in 0..mesh.triangles().len() {
            let [a, b, c] = mesh.triangle_points(t);
            let cp = closest_point_on_triangle(q, &a, &b, &c);
            let d = (q - cp).norm_squared();
            if d < best.0 {
                best = (d, cp, t);
            }
        }
        (best.0.sqrt(), best.1, best.2)
    }

    fn random_mesh(rng: &mut ChaCha8Rng, tris: usize) -> TriMesh {
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        while triangles.len() < tris {
            let base = vertices.len() as u32;
            let corner: [Point3<f64>; 3] = std::array::from_fn(|_| {
                p(
                    rng.random_range(-50.0..50.0),
                    rng.random_range(-50.0..50.0),
                    rng.random_range(-50.0..50.0),
                )
            });
            let area = 0.5 * (corner[1] - corner[0]).cross(&(corner[2] - corner[0])).norm();
            if area < 1e-6 {
                continue;
            }
            vertices.extend_from_slice(&corner);
            triangles.push([base, base + 1, base + 2]);
        }
        TriMesh::new(vertices, triangles).unwrap()
    }

    #[test]
    fn single_triangle_is_one_leaf() {
        let bvh = build_bvh(&one_triangle()).unwrap();
        assert_eq!(bvh.node_count(), 1);
    }

    #[test]
    fn vertical_projection_onto_interior() {
        let bvh = build_bvh(&one_triangle()).unwrap();
        let hit = bvh.closest_point(&p(0.25, 0.25, 1.0));
        assert!((hit.distance - 1.0).abs() < 1e-12);
        assert!((hit.closest_point - p(0.25, 0.25, 0.0)).norm() < 1e-12);
        assert_eq!(hit.side, Side::Front);
        assert_eq!(hit.triangle_index, 0);
    }

    #[test]
    fn vertex_region_query() {
        let bvh = build_bvh(&one_triangle()).unwrap();
        let hit = bvh.closest_point(&p(-1.0, -1.0, 0.0));
        assert!((hit.closest_point - p(0.0, 0.0, 0.0)).norm() < 1e-12);
        assert!((hit.distance - 2.0_f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn penetration_sign_convention() {
        // Palate: unit square at z=0 with normals (0,0,-1), cavity below.
        let palate = TriMesh::new(
            vec![p(0.0, 0.0, 0.0), p(1.0, 0.0, 0.0), p(1.0, 1.0, 0.0), p(0.0, 1.0, 0.0)],
            vec![[0, 2, 1], [0, 3, 2]],
        )
        .unwrap();
        let bvh = build_bvh(&palate).unwrap();
        assert_eq!(bvh.penetration_depth(&p(0.5, 0.5, -0.2)), 0.0);
        assert!((bvh.penetration_depth(&p(0.5, 0.5, 0.2)) - 0.2).abs() < 1e-12);
        // Exactly on the surface: contact, not penetration.
        assert_eq!(bvh.penetration_depth(&p(0.5, 0.5, 0.0)), 0.0);
        assert!(bvh.contact(&p(0.5, 0.5, 0.0), 0.1));
        // Penetration and contact are mutually exclusive.
        assert!(!bvh.contact(&p(0.5, 0.5, 0.2), 0.5));
    }

    #[test]
    fn matches_brute_force_on_random_queries() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..6 {
            let mesh = random_mesh(&mut rng, 60);
            let bvh = build_bvh(&mesh).unwrap();
            for _ in 0..200 {
                let q = p(
                    rng.random_range(-80.0..80.0),
                    rng.random_range(-80.0..80.0),
                    rng.random_range(-80.0..80.0),
                );
                let hit = bvh.closest_point(&q);
                let (bd, bp, bt) = brute_force(&mesh, &q);
                assert!((hit.distance - bd).abs() < 1e-9);
                assert!((hit.closest_point - bp).norm() < 1e-9);
                assert_eq!(hit.triangle_index, bt);
                // Query result invariant: distance equals |query - closest|.
                assert!((hit.distance - (q - hit.closest_point).norm()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn far_query_still_correct() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mesh = random_mesh(&mut rng, 30);
        let bvh = build_bvh(&mesh).unwrap();
        let q = p(1e5, -2e5, 3e5);
        let hit = bvh.closest_point(&q);
        let (bd, _, bt) = brute_force(&mesh, &q);
        assert!(hit.distance.is_finite());
        assert!((hit.distance - bd).abs() < 1e-6);
        assert_eq!(hit.triangle_index, bt);
    }

    #[test]
    fn zero_distance_iff_on_triangle() {
        let mesh = one_triangle();
        let bvh = build_bvh(&mesh).unwrap();
        let on = bvh.closest_point(&p(0.3, 0.3, 0.0));
        assert!(on.distance < 1e-9);
        let off = bvh.closest_point(&p(0.3, 0.3, 1e-6));
        assert!(off.distance > 1e-9);
    }
}
