use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::fusion::{Trajectory, TrajectoryEntry};
use crate::io::{self, atomic_write, IoError, SceneDir};

/// Frame indices kept when resampling `frame_count` frames from `native_hz`
/// to `target_hz`: every `round(native / target)`-th frame from 0.
pub fn downsample_indices(frame_count: usize, target_hz: f64, native_hz: f64) -> Result<Vec<usize>, EvalError> {
    if !(target_hz > 0.0 && native_hz.is_finite() && target_hz <= native_hz) {
        return Err(EvalError::InvalidRate {
            target: target_hz,
            native: native_hz,
        });
    }
    let stride = (native_hz / target_hz).round().max(1.0) as usize;
    Ok((0..frame_count).step_by(stride).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DownsampleSummary {
    pub native_hz: f64,
    pub target_hz: f64,
    pub stride: usize,
    /// `source_frames[i]` is the original index of output frame `i`.
    pub source_frames: Vec<usize>,
}

fn copy_if_exists(from: &Path, to: &Path) -> Result<(), IoError> {
    match std::fs::read(from) {
        Ok(bytes) => atomic_write(to, &bytes),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(()),
        Err(e) => Err(IoError::at(from, e)),
    }
}

fn filter_trajectory(path_in: &Path, path_out: &Path, kept: &[usize]) -> Result<(), IoError> {
    if !path_in.is_file() {
        return Ok(());
    }
    let traj: Trajectory = io::read_json(path_in)?;
    let entries = kept
        .iter()
        .enumerate()
        .filter_map(|(new, old)| {
            traj.pose_of(*old).map(|pose| TrajectoryEntry { frame: new, pose })
        })
        .collect();
    let out = Trajectory::new(entries).map_err(|e| IoError::Format(path_in.to_path_buf(), e.to_string()))?;
    io::write_json(path_out, &out)
}

/// Per-frame outputs (labels, poses) and the trajectory filtered to `kept`,
/// renumbered from 0; scene-level documents copied as-is.
fn copy_filtered(src: &SceneDir, dst: &SceneDir, kept: &[usize], with_frames: bool) -> Result<(), IoError> {
    kept.par_iter().enumerate().try_for_each(|(new, &old)| -> Result<(), IoError> {
        if with_frames {
            copy_if_exists(&src.rgb(old), &dst.rgb(new))?;
            copy_if_exists(&src.depth(old), &dst.depth(new))?;
        }
        copy_if_exists(&src.label(old), &dst.label(new))?;
        copy_if_exists(&src.pose(old), &dst.pose(new))
    })?;
    filter_trajectory(&src.trajectory(), &dst.trajectory(), kept)?;
    copy_if_exists(&src.camera(), &dst.camera())?;
    copy_if_exists(&src.annotations(), &dst.annotations())?;
    copy_if_exists(&src.reconstruction(), &dst.reconstruction())?;
    copy_if_exists(&src.root().join("clicks.json"), &dst.root().join("clicks.json"))
}

/// Writes a frame-rate-reduced copy of a scene directory into `dst`.
///
/// Frames, trajectory, rendered labels and poses, and any ground truth under
/// `truth/` are filtered consistently and renumbered contiguously;
/// `downsample.json` records the original index of every kept frame.
pub fn downsample_scene(src: &SceneDir, dst: &SceneDir, target_hz: f64, native_hz: f64) -> Result<DownsampleSummary, EvalError> {
    let kept = downsample_indices(src.frame_count(), target_hz, native_hz)?;
    copy_filtered(src, dst, &kept, true)?;
    let truth = SceneDir::new(src.truth_dir());
    if truth.root().is_dir() {
        copy_filtered(&truth, &SceneDir::new(dst.truth_dir()), &kept, false)?;
    }
    if src.meshes_dir().is_dir() {
        let entries = std::fs::read_dir(src.meshes_dir()).map_err(|e| IoError::at(&src.meshes_dir(), e))?;
        for entry in entries.filter_map(Result::ok) {
            if entry.path().is_file() {
                copy_if_exists(&entry.path(), &dst.meshes_dir().join(entry.file_name()))?;
            }
        }
    }
    let summary = DownsampleSummary {
        native_hz,
        target_hz,
        stride: (native_hz / target_hz).round().max(1.0) as usize,
        source_frames: kept,
    };
    io::write_json(&dst.root().join("downsample.json"), &summary)?;
    Ok(summary)
}
