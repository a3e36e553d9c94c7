//! Object poses per camera and z-buffered label rendering for every frame.

mod raster;
mod render;

pub use raster::{rasterize_labels, Rasterizer, DEPTH_TIE_EPSILON, NEAR_PLANE};
pub use render::{render_frames, RenderSummary};

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::geometry::{Image, RigidTransform, TriangleMesh};
use crate::io::IoError;

/// Per-pixel object ids, 0 for background.
pub type LabelImage = Image<u8>;

/// Mesh library keyed by name (file stem on disk).
pub type MeshLibrary = BTreeMap<String, TriangleMesh>;

#[derive(Debug, thiserror::Error)]
pub enum LabelError {
    #[error("object id 0 is reserved for background")]
    ReservedId,
    #[error("object id {0} is used more than once")]
    DuplicateId(u8),
    #[error("unknown mesh '{0}'")]
    UnknownMesh(String),
    #[error("scene has no trajectory")]
    MissingTrajectory,
    #[error("scene has no annotations")]
    MissingAnnotations,
    #[error(transparent)]
    Io(#[from] IoError),
}

impl LabelError {
    pub fn class(&self) -> &'static str {
        match self {
            LabelError::ReservedId | LabelError::DuplicateId(_) => "invalid-annotation",
            LabelError::UnknownMesh(_) => "unknown-mesh",
            LabelError::MissingTrajectory => "missing-trajectory",
            LabelError::MissingAnnotations => "missing-annotations",
            LabelError::Io(_) => "io-error",
        }
    }
}

/// One object placed in the scene. Serialized as `{object_id, mesh, q, t}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectAnnotation {
    pub object_id: u8,
    pub mesh: String,
    #[serde(flatten)]
    pub pose: RigidTransform,
}

impl ObjectAnnotation {
    pub fn new(object_id: u8, mesh: impl Into<String>, pose: RigidTransform) -> Self {
        Self {
            object_id,
            mesh: mesh.into(),
            pose,
        }
    }
}

/// Checks ids are nonzero and unique.
pub fn validate_annotations(annotations: &[ObjectAnnotation]) -> Result<(), LabelError> {
    let mut seen = BTreeSet::new();
    for a in annotations {
        if a.object_id == 0 {
            return Err(LabelError::ReservedId);
        }
        if !seen.insert(a.object_id) {
            return Err(LabelError::DuplicateId(a.object_id));
        }
    }
    Ok(())
}

/// Object pose expressed in the camera frame: `inverse(camera) ∘ object`.
pub fn object_pose_in_camera(object_pose_world: &RigidTransform, camera_pose_world: &RigidTransform) -> RigidTransform {
    camera_pose_world.inverse() * *object_pose_world
}

/// Every annotation re-expressed in the given camera's frame.
pub fn poses_in_camera(annotations: &[ObjectAnnotation], camera_pose_world: &RigidTransform) -> Vec<ObjectAnnotation> {
    annotations
        .iter()
        .map(|a| ObjectAnnotation {
            object_id: a.object_id,
            mesh: a.mesh.clone(),
            pose: object_pose_in_camera(&a.pose, camera_pose_world),
        })
        .collect()
}
