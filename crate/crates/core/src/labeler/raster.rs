use nalgebra::Point3;
use rayon::prelude::*;

use super::{object_pose_in_camera, LabelError, LabelImage, MeshLibrary, ObjectAnnotation};
use crate::geometry::{CameraIntrinsics, Image, RigidTransform, TriangleMesh};

/// Triangles are clipped against this camera-frame depth, meters.
pub const NEAR_PLANE: f64 = 0.01;
/// Depths closer than this count as a tie, resolved toward the lower object id.
pub const DEPTH_TIE_EPSILON: f64 = 1e-9;

const BAND_ROWS: usize = 8;

#[derive(Debug, Clone, Copy)]
struct ScreenTriangle {
    x: [f64; 3],
    y: [f64; 3],
    inv_z: [f64; 3],
    inv_area: f64,
    id: u8,
    cols: (usize, usize),
    rows: (usize, usize),
}

impl ScreenTriangle {
    #[inline]
    fn edge(&self, a: usize, b: usize, px: f64, py: f64) -> f64 {
        (self.x[b] - self.x[a]) * (py - self.y[a]) - (self.y[b] - self.y[a]) * (px - self.x[a])
    }
}

/// Z-buffered label renderer for one camera model.
///
/// Samples at pixel centers, interpolates depth perspective-correctly
/// (1/z is affine in screen space), draws both faces of every triangle and
/// clips against the near plane so triangles crossing it keep their visible
/// part. Output is independent of the rayon thread count.
#[derive(Debug, Clone)]
pub struct Rasterizer {
    intr: CameraIntrinsics,
}

impl Rasterizer {
    pub fn new(intr: CameraIntrinsics) -> Self {
        Self { intr }
    }

    pub fn intrinsics(&self) -> &CameraIntrinsics {
        &self.intr
    }

    /// Renders meshes already posed in the camera frame, each tagged with its id.
    /// Returns labels and per-pixel depth in meters (`f64::INFINITY` where empty).
    pub fn render(&self, objects: &[(u8, &TriangleMesh, RigidTransform)]) -> (LabelImage, Image<f64>) {
        let mut order: Vec<usize> = (0..objects.len()).collect();
        order.sort_by_key(|&i| objects[i].0);
        let prepared: Vec<Vec<ScreenTriangle>> = order
            .par_iter()
            .map(|&i| {
                let (id, mesh, pose) = objects[i];
                self.prepare(id, mesh, &pose)
            })
            .collect();
        let triangles: Vec<ScreenTriangle> = prepared.into_iter().flatten().collect();

        let (w, h) = (self.intr.width as usize, self.intr.height as usize);
        let band_count = h.div_ceil(BAND_ROWS);
        let mut bins: Vec<Vec<u32>> = vec![Vec::new(); band_count];
        for (i, t) in triangles.iter().enumerate() {
            for bin in &mut bins[t.rows.0 / BAND_ROWS..=t.rows.1 / BAND_ROWS] {
                bin.push(i as u32);
            }
        }

        let mut labels = vec![0u8; w * h];
        let mut depth = vec![f64::INFINITY; w * h];
        labels
            .par_chunks_mut(BAND_ROWS * w)
            .zip(depth.par_chunks_mut(BAND_ROWS * w))
            .zip(bins.par_iter())
            .enumerate()
            .for_each(|(band, ((labels, depth), bin))| {
                let first_row = band * BAND_ROWS;
                let last_row = first_row + labels.len() / w - 1;
                for &ti in bin {
                    let t = &triangles[ti as usize];
                    let rows = t.rows.0.max(first_row)..=t.rows.1.min(last_row);
                    for v in rows {
                        let py = v as f64 + 0.5;
                        let row = (v - first_row) * w;
                        for u in t.cols.0..=t.cols.1 {
                            let px = u as f64 + 0.5;
                            let l0 = t.edge(1, 2, px, py) * t.inv_area;
                            let l1 = t.edge(2, 0, px, py) * t.inv_area;
                            let l2 = t.edge(0, 1, px, py) * t.inv_area;
                            if l0 < 0.0 || l1 < 0.0 || l2 < 0.0 {
                                continue;
                            }
                            let z = 1.0 / (l0 * t.inv_z[0] + l1 * t.inv_z[1] + l2 * t.inv_z[2]);
                            let best = depth[row + u];
                            let best_id = labels[row + u];
                            let wins = z < best - DEPTH_TIE_EPSILON
                                || (z <= best + DEPTH_TIE_EPSILON && t.id < best_id)
                                || (t.id == best_id && z < best);
                            if wins {
                                depth[row + u] = z;
                                labels[row + u] = t.id;
                            }
                        }
                    }
                }
            });

        let w32 = self.intr.width;
        let h32 = self.intr.height;
        (
            Image::from_vec(w32, h32, labels).expect("sized buffer"),
            Image::from_vec(w32, h32, depth).expect("sized buffer"),
        )
    }

    fn prepare(&self, id: u8, mesh: &TriangleMesh, pose: &RigidTransform) -> Vec<ScreenTriangle> {
        let cam: Vec<Point3<f64>> = mesh.vertices().iter().map(|v| pose.apply(v)).collect();
        let mut out = Vec::new();
        for f in mesh.faces() {
            let tri = [cam[f[0] as usize], cam[f[1] as usize], cam[f[2] as usize]];
            if tri.iter().all(|p| p.z >= NEAR_PLANE) {
                self.push_screen(id, &tri, &mut out);
                continue;
            }
            let (poly, n) = clip_near(&tri);
            for k in 1..n.saturating_sub(1) {
                self.push_screen(id, &[poly[0], poly[k], poly[k + 1]], &mut out);
            }
        }
        out
    }

    fn push_screen(&self, id: u8, tri: &[Point3<f64>; 3], out: &mut Vec<ScreenTriangle>) {
        let i = &self.intr;
        let mut x = [0.0; 3];
        let mut y = [0.0; 3];
        let mut inv_z = [0.0; 3];
        for k in 0..3 {
            let z = tri[k].z.max(NEAR_PLANE);
            x[k] = i.fx * tri[k].x / z + i.cx;
            y[k] = i.fy * tri[k].y / z + i.cy;
            inv_z[k] = 1.0 / z;
        }
        let area = (x[1] - x[0]) * (y[2] - y[0]) - (y[1] - y[0]) * (x[2] - x[0]);
        if area.abs() < 1e-12 || !area.is_finite() {
            return;
        }
        let span = |lo: f64, hi: f64, size: u32| -> Option<(usize, usize)> {
            let first = (lo - 0.5).ceil().max(0.0);
            let last = (hi - 0.5).floor().min(size as f64 - 1.0);
            (first <= last).then_some((first as usize, last as usize))
        };
        let (xmin, xmax) = (x[0].min(x[1]).min(x[2]), x[0].max(x[1]).max(x[2]));
        let (ymin, ymax) = (y[0].min(y[1]).min(y[2]), y[0].max(y[1]).max(y[2]));
        let (Some(cols), Some(rows)) = (span(xmin, xmax, i.width), span(ymin, ymax, i.height)) else {
            return;
        };
        out.push(ScreenTriangle {
            x,
            y,
            inv_z,
            inv_area: 1.0 / area,
            id,
            cols,
            rows,
        });
    }
}

/// Sutherland–Hodgman against `z >= NEAR_PLANE`; returns up to four vertices.
fn clip_near(tri: &[Point3<f64>; 3]) -> ([Point3<f64>; 4], usize) {
    let mut out = [Point3::origin(); 4];
    let mut n = 0;
    for k in 0..3 {
        let a = tri[k];
        let b = tri[(k + 1) % 3];
        let a_in = a.z >= NEAR_PLANE;
        let b_in = b.z >= NEAR_PLANE;
        if a_in {
            out[n] = a;
            n += 1;
        }
        if a_in != b_in {
            let t = (NEAR_PLANE - a.z) / (b.z - a.z);
            let mut p = a + (b - a) * t;
            p.z = NEAR_PLANE;
            out[n] = p;
            n += 1;
        }
    }
    (out, n)
}

/// Label image and depth buffer for one camera pose.
pub fn rasterize_labels(
    annotations: &[ObjectAnnotation],
    meshes: &MeshLibrary,
    camera_pose: &RigidTransform,
    intr: &CameraIntrinsics,
) -> Result<(LabelImage, Image<f64>), LabelError> {
    let mut objects = Vec::with_capacity(annotations.len());
    for a in annotations {
        let mesh = meshes.get(&a.mesh).ok_or_else(|| LabelError::UnknownMesh(a.mesh.clone()))?;
        objects.push((a.object_id, mesh, object_pose_in_camera(&a.pose, camera_pose)));
    }
    Ok(Rasterizer::new(*intr).render(&objects))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    fn library() -> MeshLibrary {
        let mut lib = MeshLibrary::new();
        lib.insert("cube".into(), TriangleMesh::cuboid(1.0, 1.0, 1.0));
        lib
    }

    fn at(id: u8, mesh: &str, x: f64, y: f64, z: f64) -> ObjectAnnotation {
        ObjectAnnotation::new(id, mesh, RigidTransform::from_translation(Vector3::new(x, y, z)))
    }

    #[test]
    fn nothing_to_draw() {
        let intr = CameraIntrinsics::default();
        let (labels, depth) = rasterize_labels(&[], &library(), &RigidTransform::identity(), &intr).unwrap();
        assert!(labels.as_slice().iter().all(|&l| l == 0));
        assert!(depth.as_slice().iter().all(|d| d.is_infinite()));
    }

    #[test]
    fn unknown_mesh_is_an_error() {
        let intr = CameraIntrinsics::default();
        let err = rasterize_labels(&[at(1, "teapot", 0.0, 0.0, 2.0)], &library(), &RigidTransform::identity(), &intr);
        assert!(matches!(err, Err(LabelError::UnknownMesh(m)) if m == "teapot"));
    }

    #[test]
    fn unit_cube_projects_to_a_centered_square() {
        let intr = CameraIntrinsics::default();
        let count = |z_center: f64| {
            let (labels, _) = rasterize_labels(&[at(1, "cube", 0.0, 0.0, z_center)], &library(), &RigidTransform::identity(), &intr).unwrap();
            labels.as_slice().iter().filter(|&&l| l == 1).count() as f64
        };
        // Only the near face is visible: side fx / depth-of-near-face.
        let centered = (intr.fx / 1.5).powi(2);
        assert!((count(2.0) - centered).abs() / centered < 0.02);
        let near_face_at_two = (intr.fx / 2.0).powi(2);
        assert!((count(2.5) - near_face_at_two).abs() / near_face_at_two < 0.02);
    }

    #[test]
    fn cube_depth_at_center_is_near_face() {
        let intr = CameraIntrinsics::default();
        let (_, depth) = rasterize_labels(&[at(1, "cube", 0.0, 0.0, 2.0)], &library(), &RigidTransform::identity(), &intr).unwrap();
        assert!((depth.get(320, 240) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn nearer_object_occludes() {
        let intr = CameraIntrinsics::default();
        let mut lib = library();
        lib.insert("small".into(), TriangleMesh::cuboid(0.2, 0.2, 0.2));
        let anns = [at(5, "cube", 0.0, 0.0, 2.5), at(2, "small", 0.0, 0.0, 1.0)];
        let (labels, _) = rasterize_labels(&anns, &lib, &RigidTransform::identity(), &intr).unwrap();
        assert_eq!(labels.get(320, 240), 2);
        assert_eq!(labels.get(320 + 100, 240), 5);
        assert_eq!(labels.get(5, 5), 0);
    }

    #[test]
    fn equal_depth_goes_to_lower_id() {
        let intr = CameraIntrinsics::default();
        let anns = [at(9, "cube", 0.0, 0.0, 2.0), at(4, "cube", 0.0, 0.0, 2.0)];
        let (labels, _) = rasterize_labels(&anns, &library(), &RigidTransform::identity(), &intr).unwrap();
        assert!(labels.as_slice().iter().all(|&l| l == 0 || l == 4));
        assert_eq!(labels.get(320, 240), 4);
    }

    #[test]
    fn triangle_crossing_near_plane_keeps_visible_part() {
        let intr = CameraIntrinsics::new(100.0, 100.0, 50.0, 50.0, 100, 100, 0.001).unwrap();
        // Floor below the camera running from behind it to 5 m ahead.
        let floor = TriangleMesh::new(
            vec![
                Point3::new(-2.0, 0.5, -1.0),
                Point3::new(2.0, 0.5, -1.0),
                Point3::new(2.0, 0.5, 5.0),
                Point3::new(-2.0, 0.5, 5.0),
            ],
            vec![[0, 1, 2], [0, 2, 3]],
        )
        .unwrap();
        let (labels, depth) = Rasterizer::new(intr).render(&[(1, &floor, RigidTransform::identity())]);
        // Row v sees the floor at z = 0.5 * fy / (v + 0.5 - cy) when that is <= 5 m.
        for v in 0..100u32 {
            let dy = v as f64 + 0.5 - 50.0;
            let expected = if dy > 0.0 { 0.5 * 100.0 / dy } else { f64::INFINITY };
            let hit = labels.get(50, v) == 1;
            if expected <= 4.9 {
                assert!(hit, "row {v}");
                assert!((depth.get(50, v) - expected).abs() < 1e-9 * expected.max(1.0));
            } else if expected > 5.1 {
                assert!(!hit, "row {v}");
            }
        }
    }

    #[test]
    fn clip_polygon_counts() {
        let p = |z: f64| Point3::new(z, 1.0, z);
        assert_eq!(clip_near(&[p(1.0), p(2.0), p(3.0)]).1, 3);
        assert_eq!(clip_near(&[p(-1.0), p(2.0), p(3.0)]).1, 4);
        assert_eq!(clip_near(&[p(-1.0), p(-2.0), p(3.0)]).1, 3);
        assert_eq!(clip_near(&[p(-1.0), p(-2.0), p(-3.0)]).1, 0);
    }
}
