use std::path::{Path, PathBuf};

use super::{png, read_json, write_json, IoError};
use crate::geometry::{CameraIntrinsics, RgbdFrame};

/// Sensor rate assumed when a scene directory carries no timestamps.
pub const NATIVE_HZ: f64 = 30.0;

/// Paths and readers for the on-disk scene layout:
///
/// ```text
/// camera.json
/// frames/000000_rgb.png, frames/000000_depth.png, ...
/// trajectory.json
/// reconstruction.ply
/// annotations.json
/// labels/000000_label.png, ...
/// poses/000000.json, ...
/// ```
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SceneDir {
    root: PathBuf,
}

impl SceneDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn camera(&self) -> PathBuf {
        self.root.join("camera.json")
    }

    pub fn frames_dir(&self) -> PathBuf {
        self.root.join("frames")
    }

    pub fn rgb(&self, index: usize) -> PathBuf {
        self.frames_dir().join(format!("{index:06}_rgb.png"))
    }

    pub fn depth(&self, index: usize) -> PathBuf {
        self.frames_dir().join(format!("{index:06}_depth.png"))
    }

    pub fn trajectory(&self) -> PathBuf {
        self.root.join("trajectory.json")
    }

    pub fn reconstruction(&self) -> PathBuf {
        self.root.join("reconstruction.ply")
    }

    pub fn annotations(&self) -> PathBuf {
        self.root.join("annotations.json")
    }

    pub fn labels_dir(&self) -> PathBuf {
        self.root.join("labels")
    }

    pub fn label(&self, index: usize) -> PathBuf {
        self.labels_dir().join(format!("{index:06}_label.png"))
    }

    pub fn poses_dir(&self) -> PathBuf {
        self.root.join("poses")
    }

    pub fn pose(&self, index: usize) -> PathBuf {
        self.poses_dir().join(format!("{index:06}.json"))
    }

    pub fn session(&self) -> PathBuf {
        self.root.join("session.json")
    }

    pub fn meshes_dir(&self) -> PathBuf {
        self.root.join("meshes")
    }

    pub fn truth_dir(&self) -> PathBuf {
        self.root.join("truth")
    }

    pub fn timing_log(&self) -> PathBuf {
        self.root.join("logs").join("timing.json")
    }

    pub fn read_camera(&self) -> Result<CameraIntrinsics, IoError> {
        let path = self.camera();
        let intr: CameraIntrinsics = read_json(&path)?;
        intr.validate().map_err(|e| IoError::Format(path, e.to_string()))?;
        Ok(intr)
    }

    pub fn write_camera(&self, intr: &CameraIntrinsics) -> Result<(), IoError> {
        write_json(&self.camera(), intr)
    }

    /// Number of frames, counting contiguous indices from 0 with both images present.
    pub fn frame_count(&self) -> usize {
        (0..)
            .take_while(|&i| self.rgb(i).is_file() && self.depth(i).is_file())
            .count()
    }

    pub fn read_frame(&self, index: usize, intr: &CameraIntrinsics) -> Result<RgbdFrame, IoError> {
        let rgb = png::read_rgb(&self.rgb(index))?;
        let depth = png::read_depth(&self.depth(index))?;
        RgbdFrame::new(index, index as f64 / NATIVE_HZ, rgb, depth, intr)
            .map_err(|e| IoError::Format(self.depth(index), e.to_string()))
    }

    pub fn read_frames(&self, intr: &CameraIntrinsics) -> Result<Vec<RgbdFrame>, IoError> {
        (0..self.frame_count()).map(|i| self.read_frame(i, intr)).collect()
    }

    pub fn write_frame(&self, frame: &RgbdFrame) -> Result<(), IoError> {
        png::write_rgb(&self.rgb(frame.index), &frame.rgb)?;
        png::write_depth(&self.depth(frame.index), &frame.depth)
    }
}
