use rayon::prelude::*;

use crate::geometry::{MeshDistanceIndex, PointCloud, RigidTransform, TriangleMesh};

/// Default crop band around the roughly posed model, meters.
pub const DEFAULT_CROP_RADIUS: f64 = 0.01;

/// Scene points within `radius` of the mesh placed at `rough_pose`, in input order.
///
/// Uses exact point-to-triangle distance. An empty result is valid and usually
/// means the rough pose is far off.
pub fn crop_near_model(
    scene: &PointCloud,
    mesh: &TriangleMesh,
    rough_pose: &RigidTransform,
    radius: f64,
) -> PointCloud {
    let index = MeshDistanceIndex::new(mesh, rough_pose);
    let keep: Vec<bool> = scene
        .points
        .par_iter()
        .map(|p| index.distance_within(p, radius) <= radius)
        .collect();
    let indices: Vec<usize> = keep
        .iter()
        .enumerate()
        .filter_map(|(i, k)| k.then_some(i))
        .collect();
    scene.select(&indices)
}
