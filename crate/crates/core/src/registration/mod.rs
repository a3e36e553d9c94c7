//! Rigid alignment of object meshes to the scene reconstruction: closed-form
//! fit from clicked landmarks, cropping of the scene around the rough pose,
//! and ICP refinement.

mod align;
mod crop;
mod icp;
mod landmark;

pub use align::{align_object, AlignError, AlignOptions, AlignStage, Alignment, ClickSet};
pub use crop::{crop_near_model, DEFAULT_CROP_RADIUS};
pub use icp::{icp_point_to_plane, icp_refine, IcpParams, IcpResult};
pub use landmark::landmark_transform;

use crate::geometry::RigidTransform;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RegistrationError {
    #[error("need at least 3 correspondences, got {got}")]
    TooFewPoints { got: usize },
    #[error("{model} model points but {scene} scene points")]
    MismatchedCorrespondences { model: usize, scene: usize },
    #[error("degenerate point configuration (collinear or coincident points)")]
    Degenerate,
    #[error("only {found} correspondences at iteration {iteration}, need {required}")]
    CorrespondenceStarvation {
        iteration: usize,
        found: usize,
        required: usize,
        last: RigidTransform,
    },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

impl RegistrationError {
    pub fn class(&self) -> &'static str {
        match self {
            RegistrationError::TooFewPoints { .. } | RegistrationError::MismatchedCorrespondences { .. } => {
                "too-few-points"
            }
            RegistrationError::Degenerate => "degenerate-input",
            RegistrationError::CorrespondenceStarvation { .. } => "correspondence-starvation",
            RegistrationError::InvalidParams(_) => "invalid-params",
        }
    }
}
