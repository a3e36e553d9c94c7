use std::fmt;

use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use super::{crop_near_model, icp_refine, landmark_transform, IcpParams, IcpResult, RegistrationError, DEFAULT_CROP_RADIUS};
use crate::geometry::{PointCloud, RigidTransform, TriangleMesh};

/// Three clicked correspondences: `model_points[i]` on the mesh pairs with `scene_points[i]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClickSet {
    pub model_points: [[f64; 3]; 3],
    pub scene_points: [[f64; 3]; 3],
}

impl ClickSet {
    pub fn new(model: [Point3<f64>; 3], scene: [Point3<f64>; 3]) -> Self {
        let arr = |p: &Point3<f64>| [p.x, p.y, p.z];
        Self {
            model_points: model.each_ref().map(arr),
            scene_points: scene.each_ref().map(arr),
        }
    }

    pub fn model(&self) -> [Point3<f64>; 3] {
        self.model_points.map(Point3::from)
    }

    pub fn scene(&self) -> [Point3<f64>; 3] {
        self.scene_points.map(Point3::from)
    }

    pub fn is_finite(&self) -> bool {
        self.model_points
            .iter()
            .chain(self.scene_points.iter())
            .flatten()
            .all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlignOptions {
    pub icp: IcpParams,
    pub crop_radius: f64,
    /// Mesh surface samples per square meter (1 per mm²).
    pub sample_density: f64,
    pub sample_cap: usize,
    pub seed: u64,
    /// Crop-and-refine passes; later passes re-crop around the refined pose.
    pub crop_rounds: usize,
}

impl Default for AlignOptions {
    fn default() -> Self {
        Self {
            icp: IcpParams::default(),
            crop_radius: DEFAULT_CROP_RADIUS,
            sample_density: 1e6,
            sample_cap: 20_000,
            seed: 0,
            crop_rounds: 5,
        }
    }
}

/// Which part of the alignment procedure failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlignStage {
    Landmark,
    Crop,
    Icp,
}

impl fmt::Display for AlignStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AlignStage::Landmark => "landmark",
            AlignStage::Crop => "crop",
            AlignStage::Icp => "icp",
        })
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("alignment failed at {stage} stage: {source}")]
pub struct AlignError {
    pub stage: AlignStage,
    #[source]
    pub source: RegistrationError,
}

impl AlignError {
    /// Machine-readable failure class for clients.
    pub fn class(&self) -> &'static str {
        match (&self.stage, &self.source) {
            (AlignStage::Landmark, _) => "degenerate-clicks",
            (_, RegistrationError::CorrespondenceStarvation { .. }) => "correspondence-starvation",
            (_, e) => e.class(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    pub rough_pose: RigidTransform,
    /// Object-to-reconstruction pose after refinement.
    pub pose: RigidTransform,
    pub icp: IcpResult,
    pub cropped_points: usize,
}

/// Three-click initialization, model-proximity crop and ICP refinement.
///
/// The mesh surface sample is the ICP source and the cropped scene the
/// target, so the refined transform is directly the object's pose in the
/// reconstruction frame. A rough pose that is a few degrees off leaves the
/// far ends of the object outside the crop band, which biases ICP toward the
/// truncated target; the crop is therefore retaken around each refined pose
/// until it stops changing or `crop_rounds` passes have run.
pub fn align_object(
    scene: &PointCloud,
    mesh: &TriangleMesh,
    clicks: &ClickSet,
    options: &AlignOptions,
) -> Result<Alignment, AlignError> {
    let rough_pose = landmark_transform(&clicks.model(), &clicks.scene()).map_err(|source| AlignError {
        stage: AlignStage::Landmark,
        source,
    })?;
    let model = mesh.sample_surface_density(options.sample_density, options.sample_cap, options.seed);
    let mut cropped = crop_near_model(scene, mesh, &rough_pose, options.crop_radius);
    let mut start = rough_pose;
    let mut round = 0;
    loop {
        if cropped.len() < options.icp.min_correspondences {
            return Err(AlignError {
                stage: AlignStage::Crop,
                source: RegistrationError::CorrespondenceStarvation {
                    iteration: 0,
                    found: cropped.len(),
                    required: options.icp.min_correspondences,
                    last: rough_pose,
                },
            });
        }
        let icp = icp_refine(&model, &cropped, &start, &options.icp).map_err(|source| AlignError {
            stage: AlignStage::Icp,
            source,
        })?;
        round += 1;
        let recropped = crop_near_model(scene, mesh, &icp.transform, options.crop_radius);
        if round >= options.crop_rounds.max(1) || recropped == cropped {
            return Ok(Alignment {
                rough_pose,
                pose: icp.transform,
                icp,
                cropped_points: cropped.len(),
            });
        }
        cropped = recropped;
        start = icp.transform;
    }
}
