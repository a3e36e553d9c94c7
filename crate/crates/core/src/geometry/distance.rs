use nalgebra::{Point3, Vector3};

use super::{RigidTransform, TriangleMesh};

/// Closest point on triangle `abc` to `p` by Voronoi-region classification.
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

pub fn point_triangle_distance(p: &Point3<f64>, tri: &[Point3<f64>; 3]) -> f64 {
    (closest_point_on_triangle(p, &tri[0], &tri[1], &tri[2]) - p).norm()
}

/// Exact distance from `point` to the mesh placed at `mesh_pose`.
///
/// Linear in the face count; use [`MeshDistanceIndex`] for repeated queries.
pub fn point_mesh_distance(point: &Point3<f64>, mesh: &TriangleMesh, mesh_pose: &RigidTransform) -> f64 {
    let local = mesh_pose.inverse().apply(point);
    mesh.triangles()
        .map(|tri| point_triangle_distance(&local, &tri))
        .fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, Copy)]
struct Aabb {
    lo: Point3<f64>,
    hi: Point3<f64>,
}

impl Aabb {
    fn of(tri: &[Point3<f64>; 3]) -> Self {
        Aabb {
            lo: tri[0].inf(&tri[1]).inf(&tri[2]),
            hi: tri[0].sup(&tri[1]).sup(&tri[2]),
        }
    }

    fn merge(&self, o: &Aabb) -> Aabb {
        Aabb {
            lo: self.lo.inf(&o.lo),
            hi: self.hi.sup(&o.hi),
        }
    }

    fn distance_squared(&self, p: &Point3<f64>) -> f64 {
        let d = Vector3::from_fn(|i, _| (self.lo[i] - p[i]).max(0.0).max(p[i] - self.hi[i]));
        d.norm_squared()
    }
}

#[derive(Debug, Clone)]
struct BvhNode {
    bounds: Aabb,
    // Leaf when `count > 0`: faces `order[first..first + count]`; else children at `first`, `first + 1`.
    first: usize,
    count: usize,
}

/// Bounding-volume hierarchy over a mesh for fast exact distance queries.
#[derive(Debug, Clone)]
pub struct MeshDistanceIndex {
    triangles: Vec<[Point3<f64>; 3]>,
    order: Vec<usize>,
    nodes: Vec<BvhNode>,
    pose_inverse: RigidTransform,
}

impl MeshDistanceIndex {
    pub fn new(mesh: &TriangleMesh, mesh_pose: &RigidTransform) -> Self {
        let triangles: Vec<_> = mesh.triangles().collect();
        let boxes: Vec<Aabb> = triangles.iter().map(Aabb::of).collect();
        let centroids: Vec<Point3<f64>> = triangles
            .iter()
            .map(|t| Point3::from((t[0].coords + t[1].coords + t[2].coords) / 3.0))
            .collect();
        let mut index = MeshDistanceIndex {
            order: (0..triangles.len()).collect(),
            triangles,
            nodes: vec![BvhNode {
                bounds: boxes[0],
                first: 0,
                count: 0,
            }],
            pose_inverse: mesh_pose.inverse(),
        };
        index.split(0, 0, boxes.len(), &boxes, &centroids);
        index
    }

    fn split(&mut self, node: usize, start: usize, end: usize, boxes: &[Aabb], centroids: &[Point3<f64>]) {
        let bounds = self.order[start..end]
            .iter()
            .fold(boxes[self.order[start]], |acc, &i| acc.merge(&boxes[i]));
        self.nodes[node].bounds = bounds;
        if end - start <= 4 {
            self.nodes[node].first = start;
            self.nodes[node].count = end - start;
            return;
        }
        let axis = (bounds.hi - bounds.lo).imax();
        let mid = start + (end - start) / 2;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            centroids[a][axis].total_cmp(&centroids[b][axis]).then(a.cmp(&b))
        });
        let left = self.nodes.len();
        let placeholder = BvhNode {
            bounds,
            first: 0,
            count: 0,
        };
        self.nodes.push(placeholder.clone());
        self.nodes.push(placeholder);
        self.nodes[node].first = left;
        self.nodes[node].count = 0;
        self.split(left, start, mid, boxes, centroids);
        self.split(left + 1, mid, end, boxes, centroids);
    }

    /// Distance from a world-frame point to the posed mesh.
    pub fn distance(&self, point: &Point3<f64>) -> f64 {
        self.distance_within(point, f64::INFINITY)
    }

    /// Exact distance when it is at most `limit`; otherwise some value above `limit`.
    pub fn distance_within(&self, point: &Point3<f64>, limit: f64) -> f64 {
        let local = self.pose_inverse.apply(point);
        let mut best = if limit.is_finite() {
            // Nudge so that a surface exactly at `limit` is still reported.
            let l = limit * (1.0 + 1e-9) + 1e-12;
            l * l
        } else {
            f64::INFINITY
        };
        let mut found = f64::INFINITY;
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            if node.bounds.distance_squared(&local) > best {
                continue;
            }
            if node.count > 0 {
                for &f in &self.order[node.first..node.first + node.count] {
                    let t = &self.triangles[f];
                    let d2 = (closest_point_on_triangle(&local, &t[0], &t[1], &t[2]) - local).norm_squared();
                    if d2 < found {
                        found = d2;
                    }
                    if d2 < best {
                        best = d2;
                    }
                }
            } else {
                let (l, r) = (node.first, node.first + 1);
                let dl = self.nodes[l].bounds.distance_squared(&local);
                let dr = self.nodes[r].bounds.distance_squared(&local);
                if dl <= dr {
                    stack.push(r);
                    stack.push(l);
                } else {
                    stack.push(l);
                    stack.push(r);
                }
            }
        }
        found.sqrt()
    }
}
