//! Scene reconstruction from posed depth: TSDF integration, zero-crossing
//! surface extraction, and frame-to-frame ICP odometry for sequences that
//! arrive without a trajectory.

mod odometry;
mod trajectory;
mod tsdf;

pub use odometry::{icp_odometry, OdometryParams, MIN_VALID_DEPTH_FRACTION};
pub use trajectory::{Trajectory, TrajectoryEntry};
pub use tsdf::{extract_surface, integrate_frame, TsdfVolume, DEFAULT_MAX_WEIGHT};

use log::{info, warn};
use nalgebra::{Point3, Vector3};

use crate::geometry::{CameraIntrinsics, GeometryError, PointCloud, RgbdFrame, RigidTransform};
use crate::registration::RegistrationError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FusionError {
    #[error("invalid volume: {0}")]
    InvalidVolume(String),
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),
    #[error("no frame has usable depth")]
    NoValidFrames,
    #[error("odometry lost track at frame {frame}: {source}")]
    OdometryBreak {
        frame: usize,
        #[source]
        source: RegistrationError,
    },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

impl FusionError {
    pub fn class(&self) -> &'static str {
        match self {
            FusionError::InvalidVolume(_) => "invalid-volume",
            FusionError::InvalidTrajectory(_) => "invalid-trajectory",
            FusionError::NoValidFrames => "no-valid-frames",
            FusionError::OdometryBreak { .. } => "odometry-break",
            FusionError::Geometry(_) => "invalid-input",
        }
    }
}

/// Margin added around the first frame's points when sizing a volume.
pub const DEFAULT_BOUNDS_MARGIN: f64 = 0.5;

/// Axis-aligned bounds of a posed frame's valid points, inflated by `margin`.
pub fn frame_bounds(
    frame: &RgbdFrame,
    intr: &CameraIntrinsics,
    camera_pose: &RigidTransform,
    margin: f64,
) -> Option<(Point3<f64>, Point3<f64>)> {
    let cloud = frame.backproject(intr, 1).transformed(camera_pose);
    let (lo, hi) = cloud.bounds()?;
    let m = Vector3::repeat(margin);
    Some((lo - m, hi + m))
}

/// Integrates every frame that has a trajectory pose, in trajectory order.
///
/// Frames with too little valid depth are skipped with a warning.
pub fn fuse_sequence(
    volume: &mut TsdfVolume,
    frames: &[RgbdFrame],
    intr: &CameraIntrinsics,
    trajectory: &Trajectory,
) -> Result<usize, FusionError> {
    let mut fused = 0;
    for entry in trajectory.entries() {
        let Some(frame) = frames.iter().find(|f| f.index == entry.frame) else {
            return Err(FusionError::InvalidTrajectory(format!(
                "trajectory references missing frame {}",
                entry.frame
            )));
        };
        frame.check_against(intr)?;
        let valid = frame.valid_depth_fraction();
        if valid < MIN_VALID_DEPTH_FRACTION {
            warn!("skipping frame {}: only {:.1}% valid depth", frame.index, 100.0 * valid);
            continue;
        }
        volume.integrate(frame, intr, &entry.pose);
        fused += 1;
    }
    info!("fused {fused} of {} trajectory frames", trajectory.len());
    Ok(fused)
}

/// Builds a volume sized from the first usable frame and fuses the sequence.
pub fn reconstruct(
    frames: &[RgbdFrame],
    intr: &CameraIntrinsics,
    trajectory: &Trajectory,
    voxel_size: f64,
    bounds: Option<(Point3<f64>, Point3<f64>)>,
) -> Result<(TsdfVolume, PointCloud), FusionError> {
    let bounds = match bounds {
        Some(b) => b,
        None => trajectory
            .entries()
            .iter()
            .filter_map(|e| {
                let frame = frames.iter().find(|f| f.index == e.frame)?;
                if frame.valid_depth_fraction() < MIN_VALID_DEPTH_FRACTION {
                    return None;
                }
                frame_bounds(frame, intr, &e.pose, DEFAULT_BOUNDS_MARGIN)
            })
            .next()
            .ok_or(FusionError::NoValidFrames)?,
    };
    let mut volume = TsdfVolume::from_bounds(bounds.0, bounds.1, voxel_size)?;
    fuse_sequence(&mut volume, frames, intr, trajectory)?;
    let surface = volume.extract_surface();
    Ok((volume, surface))
}
