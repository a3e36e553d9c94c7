//! The rasterizer against an independent per-pixel ray caster.

use nalgebra::{Point3, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scenelabel::geometry::{CameraIntrinsics, RigidTransform, TriangleMesh};
use scenelabel::labeler::{Rasterizer, NEAR_PLANE};

/// Möller–Trumbore, both faces; returns the ray parameter.
fn ray_triangle(dir: &Vector3<f64>, tri: &[Point3<f64>; 3]) -> Option<f64> {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let p = dir.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < 1e-15 {
        return None;
    }
    let s = -tri[0].coords;
    let u = s.dot(&p) / det;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = dir.dot(&q) / det;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    Some(e2.dot(&q) / det)
}

fn random_scene(rng: &mut ChaCha8Rng) -> Vec<(u8, TriangleMesh, RigidTransform)> {
    let ids: [u8; 2] = [rng.random_range(1..=127), rng.random_range(128..=255)];
    ids.iter()
        .map(|&id| {
            let mesh = if rng.random_bool(0.5) {
                TriangleMesh::cuboid(rng.random_range(0.1..0.6), rng.random_range(0.1..0.6), rng.random_range(0.1..0.6))
            } else {
                TriangleMesh::uv_sphere(rng.random_range(0.1..0.4), 20.0)
            };
            let pose = RigidTransform::new(
                UnitQuaternion::from_euler_angles(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)),
                Vector3::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), rng.random_range(0.8..2.0)),
            );
            (id, mesh, pose)
        })
        .collect()
}

#[test]
fn rasterizer_matches_ray_caster_on_random_scenes() {
    let intr = CameraIntrinsics::new(60.0, 60.0, 32.0, 32.0, 64, 64, 0.001).unwrap();
    let rasterizer = Rasterizer::new(intr);
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for scene in 0..100 {
        let objects = random_scene(&mut rng);
        let posed: Vec<_> = objects.iter().map(|(id, m, p)| (*id, m, *p)).collect();
        let (labels, depth) = rasterizer.render(&posed);
        let world: Vec<Vec<[Point3<f64>; 3]>> = objects.iter().map(|(_, m, p)| m.transformed(p).triangles().collect()).collect();
        let mut compared = 0;
        for v in 0..64u32 {
            for u in 0..64u32 {
                let dir = Vector3::new((u as f64 + 0.5 - intr.cx) / intr.fx, (v as f64 + 0.5 - intr.cy) / intr.fy, 1.0);
                let hits: Vec<f64> = world
                    .iter()
                    .map(|tris| {
                        tris.iter()
                            .filter_map(|t| ray_triangle(&dir, t))
                            .filter(|&z| z >= NEAR_PLANE)
                            .fold(f64::INFINITY, f64::min)
                    })
                    .collect();
                if hits[0].is_finite() && hits[1].is_finite() && (hits[0] - hits[1]).abs() < 1e-6 {
                    continue;
                }
                let expected = match (hits[0].is_finite(), hits[1].is_finite()) {
                    (false, false) => 0,
                    _ if hits[0] < hits[1] => objects[0].0,
                    _ => objects[1].0,
                };
                assert_eq!(labels.get(u, v), expected, "scene {scene} pixel ({u},{v}) hits {hits:?}");
                if expected != 0 {
                    let z = hits[0].min(hits[1]);
                    assert!((depth.get(u, v) - z).abs() < 1e-9, "scene {scene} depth at ({u},{v})");
                }
                compared += 1;
            }
        }
        assert!(compared > 4000);
    }
}

#[test]
fn output_is_identical_across_thread_counts() {
    let intr = CameraIntrinsics::default();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let objects: Vec<_> = (0..4).flat_map(|_| random_scene(&mut rng)).enumerate().map(|(i, (_, m, p))| (i as u8 + 1, m, p)).collect();
    let posed: Vec<_> = objects.iter().map(|(id, m, p)| (*id, m, *p)).collect();
    let render = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| Rasterizer::new(intr).render(&posed))
    };
    let (l1, d1) = render(1);
    for threads in [2, 4, 7] {
        let (l, d) = render(threads);
        assert_eq!(l, l1);
        assert!(d.as_slice().iter().zip(d1.as_slice()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}
