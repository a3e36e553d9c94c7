use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{GeometryError, PointCloud, RigidTransform};

/// Indexed triangle mesh in the object's own frame, meters.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Point3<f64>>,
    faces: Vec<[u32; 3]>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Point3<f64>>, faces: Vec<[u32; 3]>) -> Result<Self, GeometryError> {
        if faces.is_empty() {
            return Err(GeometryError::InvalidMesh("mesh has no faces".into()));
        }
        if vertices.iter().any(|v| !v.coords.iter().all(|c| c.is_finite())) {
            return Err(GeometryError::InvalidMesh("non-finite vertex".into()));
        }
        let n = vertices.len() as u32;
        for (i, f) in faces.iter().enumerate() {
            if f.iter().any(|&idx| idx >= n) {
                return Err(GeometryError::InvalidMesh(format!(
                    "face {i} references a vertex beyond {n}"
                )));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(GeometryError::InvalidMesh(format!("face {i} is degenerate")));
            }
        }
        Ok(Self { vertices, faces })
    }

    pub fn vertices(&self) -> &[Point3<f64>] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[u32; 3]] {
        &self.faces
    }

    pub fn triangle(&self, face: usize) -> [Point3<f64>; 3] {
        let [a, b, c] = self.faces[face];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }

    pub fn triangles(&self) -> impl Iterator<Item = [Point3<f64>; 3]> + '_ {
        (0..self.faces.len()).map(|i| self.triangle(i))
    }

    pub fn face_area(&self, face: usize) -> f64 {
        let [a, b, c] = self.triangle(face);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.faces.len()).map(|i| self.face_area(i)).sum()
    }

    pub fn transformed(&self, t: &RigidTransform) -> TriangleMesh {
        TriangleMesh {
            vertices: self.vertices.iter().map(|v| t.apply(v)).collect(),
            faces: self.faces.clone(),
        }
    }

    pub fn bounds(&self) -> (Point3<f64>, Point3<f64>) {
        let first = self.vertices[self.faces[0][0] as usize];
        self.vertices
            .iter()
            .fold((first, first), |(lo, hi), p| (lo.inf(p), hi.sup(p)))
    }

    /// Uniform area-weighted surface sample, deterministic in `seed`.
    pub fn sample_surface(&self, count: usize, seed: u64) -> PointCloud {
        let mut cumulative = Vec::with_capacity(self.faces.len());
        let mut total = 0.0;
        for i in 0..self.faces.len() {
            total += self.face_area(i);
            cumulative.push(total);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut points = Vec::with_capacity(count);
        let mut normals = Vec::with_capacity(count);
        if total <= 0.0 {
            return PointCloud::default();
        }
        for _ in 0..count {
            let pick = rng.random::<f64>() * total;
            let face = cumulative.partition_point(|&c| c <= pick).min(self.faces.len() - 1);
            let [a, b, c] = self.triangle(face);
            let r1: f64 = rng.random::<f64>().sqrt();
            let r2: f64 = rng.random();
            let p = a.coords * (1.0 - r1) + b.coords * (r1 * (1.0 - r2)) + c.coords * (r1 * r2);
            points.push(Point3::from(p));
            let n = (b - a).cross(&(c - a));
            normals.push(n.try_normalize(0.0).unwrap_or_else(Vector3::z));
        }
        PointCloud {
            points,
            normals: Some(normals),
            colors: None,
        }
    }

    /// Sample at `per_square_meter` density, capped at `cap` points.
    pub fn sample_surface_density(&self, per_square_meter: f64, cap: usize, seed: u64) -> PointCloud {
        // Tolerate rounding in the area sum so exact products do not round up.
        let wanted = (self.surface_area() * per_square_meter - 1e-6).ceil() as usize;
        self.sample_surface(wanted.clamp(1, cap.max(1)), seed)
    }

    /// Axis-aligned box centered at the origin with outward-wound faces.
    pub fn cuboid(size_x: f64, size_y: f64, size_z: f64) -> TriangleMesh {
        let (hx, hy, hz) = (size_x / 2.0, size_y / 2.0, size_z / 2.0);
        let vertices = (0..8)
            .map(|i| {
                Point3::new(
                    if i & 1 == 0 { -hx } else { hx },
                    if i & 2 == 0 { -hy } else { hy },
                    if i & 4 == 0 { -hz } else { hz },
                )
            })
            .collect();
        let faces = vec![
            [0, 2, 1], [1, 2, 3], // -z
            [4, 5, 6], [5, 7, 6], // +z
            [0, 1, 4], [1, 5, 4], // -y
            [2, 6, 3], [3, 6, 7], // +y
            [0, 4, 2], [2, 4, 6], // -x
            [1, 3, 5], [3, 7, 5], // +x
        ];
        TriangleMesh { vertices, faces }
    }

    /// Latitude/longitude sphere with `step_deg` spacing in both angles.
    pub fn uv_sphere(radius: f64, step_deg: f64) -> TriangleMesh {
        let lon_steps = (360.0 / step_deg).round().max(3.0) as u32;
        let lat_steps = (180.0 / step_deg).round().max(2.0) as u32;
        let mut vertices = vec![Point3::new(0.0, 0.0, radius)];
        for i in 1..lat_steps {
            let theta = std::f64::consts::PI * i as f64 / lat_steps as f64;
            for j in 0..lon_steps {
                let phi = 2.0 * std::f64::consts::PI * j as f64 / lon_steps as f64;
                vertices.push(Point3::new(
                    radius * theta.sin() * phi.cos(),
                    radius * theta.sin() * phi.sin(),
                    radius * theta.cos(),
                ));
            }
        }
        let south = vertices.len() as u32;
        vertices.push(Point3::new(0.0, 0.0, -radius));
        let ring = |i: u32, j: u32| 1 + (i - 1) * lon_steps + (j % lon_steps);
        let mut faces = Vec::new();
        for j in 0..lon_steps {
            faces.push([0, ring(1, j), ring(1, j + 1)]);
        }
        for i in 1..lat_steps - 1 {
            for j in 0..lon_steps {
                let (a, b) = (ring(i, j), ring(i, j + 1));
                let (c, d) = (ring(i + 1, j), ring(i + 1, j + 1));
                faces.push([a, c, d]);
                faces.push([a, d, b]);
            }
        }
        for j in 0..lon_steps {
            faces.push([ring(lat_steps - 1, j), south, ring(lat_steps - 1, j + 1)]);
        }
        TriangleMesh { vertices, faces }
    }

    /// Rectangle in the z = 0 plane, centered at the origin, normal +z.
    pub fn plane(size_x: f64, size_y: f64) -> TriangleMesh {
        let (hx, hy) = (size_x / 2.0, size_y / 2.0);
        TriangleMesh {
            vertices: vec![
                Point3::new(-hx, -hy, 0.0),
                Point3::new(hx, -hy, 0.0),
                Point3::new(hx, hy, 0.0),
                Point3::new(-hx, hy, 0.0),
            ],
            faces: vec![[0, 1, 2], [0, 2, 3]],
        }
    }
}
