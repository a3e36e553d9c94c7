use log::warn;
use serde::{Deserialize, Serialize};

use super::{FusionError, Trajectory};
use crate::geometry::{CameraIntrinsics, RgbdFrame, RigidTransform};
use crate::registration::{icp_point_to_plane, IcpParams};

/// Frames with less valid depth than this fraction are skipped.
pub const MIN_VALID_DEPTH_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OdometryParams {
    pub icp: IcpParams,
    /// Use every n-th frame.
    pub keyframe_stride: usize,
    /// Backproject every n-th pixel in both image axes.
    pub pixel_stride: u32,
    /// Normals are fit over this many neighbouring samples in each direction.
    pub normal_radius: u32,
}

impl Default for OdometryParams {
    fn default() -> Self {
        Self {
            icp: IcpParams {
                correspondence_max_distance: 0.05,
                ..IcpParams::default()
            },
            keyframe_stride: 1,
            pixel_stride: 4,
            normal_radius: 3,
        }
    }
}

/// Frame-to-frame ICP camera tracking.
///
/// The first retained frame defines the reconstruction frame. Each new frame
/// is registered onto the previous one with point-to-plane ICP starting
/// from identity, and its pose is the previous pose composed with that
/// camera-to-previous-camera motion.
pub fn icp_odometry(
    frames: &[RgbdFrame],
    intr: &CameraIntrinsics,
    params: &OdometryParams,
) -> Result<Trajectory, FusionError> {
    let mut trajectory = Trajectory::default();
    let mut previous: Option<(crate::geometry::PointCloud, RigidTransform)> = None;
    for frame in frames.iter().step_by(params.keyframe_stride.max(1)) {
        frame.check_against(intr)?;
        let valid = frame.valid_depth_fraction();
        if valid < MIN_VALID_DEPTH_FRACTION {
            warn!(
                "skipping frame {}: only {:.1}% valid depth",
                frame.index,
                100.0 * valid
            );
            continue;
        }
        let cloud = frame.backproject_with_normals(intr, params.pixel_stride, params.normal_radius);
        let pose = match &previous {
            None => RigidTransform::identity(),
            Some((prev_cloud, prev_pose)) => {
                let step = icp_point_to_plane(&cloud, prev_cloud, &RigidTransform::identity(), &params.icp)
                    .map_err(|source| FusionError::OdometryBreak {
                        frame: frame.index,
                        source,
                    })?;
                *prev_pose * step.transform
            }
        };
        trajectory.push(frame.index, pose)?;
        previous = Some((cloud, pose));
    }
    if trajectory.is_empty() {
        return Err(FusionError::NoValidFrames);
    }
    Ok(trajectory)
}
