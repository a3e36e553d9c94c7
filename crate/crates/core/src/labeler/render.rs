use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;

use super::{poses_in_camera, validate_annotations, LabelError, MeshLibrary, ObjectAnnotation, Rasterizer};
use crate::fusion::Trajectory;
use crate::geometry::CameraIntrinsics;
use crate::io::{png, write_json, SceneDir};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RenderSummary {
    pub frames: usize,
    pub objects: usize,
}

/// Writes a label image and an object-in-camera pose file for every
/// trajectory frame. Frames render in parallel; each file is replaced
/// atomically. `progress` receives the running count of finished frames.
pub fn render_frames(
    scene: &SceneDir,
    intr: &CameraIntrinsics,
    trajectory: &Trajectory,
    annotations: &[ObjectAnnotation],
    meshes: &MeshLibrary,
    progress: &(dyn Fn(usize) + Sync),
) -> Result<RenderSummary, LabelError> {
    if trajectory.is_empty() {
        return Err(LabelError::MissingTrajectory);
    }
    if annotations.is_empty() {
        return Err(LabelError::MissingAnnotations);
    }
    validate_annotations(annotations)?;
    let resolved = annotations
        .iter()
        .map(|a| meshes.get(&a.mesh).map(|m| (a, m)).ok_or_else(|| LabelError::UnknownMesh(a.mesh.clone())))
        .collect::<Result<Vec<_>, _>>()?;

    let rasterizer = Rasterizer::new(*intr);
    let done = AtomicUsize::new(0);
    trajectory.entries().par_iter().try_for_each(|entry| -> Result<(), LabelError> {
        let in_camera = poses_in_camera(annotations, &entry.pose);
        let objects: Vec<_> = resolved
            .iter()
            .zip(&in_camera)
            .map(|((a, mesh), cam)| (a.object_id, *mesh, cam.pose))
            .collect();
        let (labels, _) = rasterizer.render(&objects);
        png::write_gray8(&scene.label(entry.frame), &labels)?;
        write_json(&scene.pose(entry.frame), &in_camera)?;
        progress(done.fetch_add(1, Ordering::SeqCst) + 1);
        Ok(())
    })?;
    Ok(RenderSummary {
        frames: trajectory.len(),
        objects: annotations.len(),
    })
}
