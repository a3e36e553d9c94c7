//! Table removal on a fused synthetic scene, judged by where each
//! reconstructed point came from.

use nalgebra::Point3;
use scenelabel::fusion::reconstruct;
use scenelabel::geometry::point_mesh_distance;
use scenelabel::session::{segment_table, TableParams};
use scenelabel::synth::{generate, SynthSceneSpec, TrajectorySpec};

#[test]
fn plane_click_keeps_boxes_and_drops_the_table() {
    let mut spec = SynthSceneSpec::tabletop();
    if let TrajectorySpec::Orbit { frames, .. } = &mut spec.trajectory {
        *frames = 12;
    }
    let scene = generate(&spec).unwrap();
    let (_, cloud) = reconstruct(&scene.frames(), &scene.intrinsics, &scene.trajectory, 0.01, None).unwrap();

    // The table top is the cracker box's bottom face plane.
    let cracker = &scene.annotations[0];
    let to_table = cracker.pose.inverse();
    let height = |p: &Point3<f64>| to_table.apply(p).z + 0.105;
    let box_distance = |p: &Point3<f64>| {
        scene
            .annotations
            .iter()
            .map(|a| point_mesh_distance(p, &scene.meshes[&a.mesh], &a.pose))
            .fold(f64::INFINITY, f64::min)
    };
    let mut box_points = Vec::new();
    let mut plane_points = Vec::new();
    for (i, p) in cloud.points.iter().enumerate() {
        let d = box_distance(p);
        if d < 0.003 && height(p) > 0.015 {
            box_points.push(i);
        } else if height(p).abs() < 0.003 && d > 0.02 {
            plane_points.push(i);
        }
    }
    assert!(box_points.len() > 500 && plane_points.len() > 5000);

    let click = cracker.pose.apply(&Point3::new(0.3, 0.3, -0.105));
    let seg = segment_table(&cloud, &click, &TableParams::default()).unwrap();
    let kept: std::collections::HashSet<usize> = seg.kept.iter().copied().collect();
    let box_kept = box_points.iter().filter(|i| kept.contains(i)).count() as f64 / box_points.len() as f64;
    let plane_kept = plane_points.iter().filter(|i| kept.contains(i)).count() as f64 / plane_points.len() as f64;
    eprintln!("box kept {:.4}, plane kept {:.4}", box_kept, plane_kept);
    assert!(box_kept >= 0.99);
    assert!(plane_kept <= 0.01);
}
