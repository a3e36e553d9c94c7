//! Per-scene annotation state and its on-disk persistence.

mod table;

pub use table::{segment_table, TableParams, TablePlane, TableSegmentation};

use std::path::Path;

use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use crate::fusion::Trajectory;
use crate::geometry::PointCloud;
use crate::io::{self, IoError, SceneDir};
use crate::labeler::{validate_annotations, LabelError, ObjectAnnotation};

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error("no planar neighbourhood at the clicked point: {0}")]
    NoPlane(String),
    #[error("cannot {action} while the scene is {status}")]
    InvalidState { action: &'static str, status: SessionStatus },
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error(transparent)]
    Io(#[from] IoError),
}

impl SessionError {
    pub fn class(&self) -> &'static str {
        match self {
            SessionError::NoPlane(_) => "no-planar-neighborhood",
            SessionError::InvalidState { .. } => "invalid-state",
            SessionError::Label(e) => e.class(),
            SessionError::Io(_) => "io-error",
        }
    }
}

/// Pipeline progress; only ever moves forward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionStatus {
    Ingested,
    Fused,
    Annotated,
    Rendered,
}

impl std::fmt::Display for SessionStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SessionStatus::Ingested => "ingested",
            SessionStatus::Fused => "fused",
            SessionStatus::Annotated => "annotated",
            SessionStatus::Rendered => "rendered",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameInfo {
    pub index: usize,
    pub timestamp: f64,
}

/// Everything the annotation workflow knows about one scene.
///
/// Persisted as `session.json` (id, status, frames, table filter) next to
/// the scene's `trajectory.json`, `reconstruction.ply` and
/// `annotations.json`. The filtered cloud is not stored; it is recomputed
/// from the stored table click, which is deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSession {
    pub scene_id: String,
    pub dir: SceneDir,
    pub frames: Vec<FrameInfo>,
    pub trajectory: Trajectory,
    pub reconstruction: PointCloud,
    pub table: Option<TablePlane>,
    pub table_params: TableParams,
    annotations: Vec<ObjectAnnotation>,
    status: SessionStatus,
    filtered: Option<PointCloud>,
    cloud_version: u64,
}

#[derive(Serialize, Deserialize)]
struct SessionRecord {
    scene_id: String,
    status: SessionStatus,
    frames: Vec<FrameInfo>,
    #[serde(default)]
    table: Option<TablePlane>,
    #[serde(default)]
    table_params: TableParams,
    #[serde(default)]
    cloud_version: u64,
}

fn read_optional<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Option<T>, IoError> {
    match io::read_json(path) {
        Ok(v) => Ok(Some(v)),
        Err(e) if e.is_not_found() => Ok(None),
        Err(e) => Err(e),
    }
}

impl SceneSession {
    /// Loads a scene directory, deriving the status from the files present
    /// when no `session.json` exists yet.
    pub fn load(dir: &SceneDir) -> Result<Self, SessionError> {
        let scene_id = dir
            .root()
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let trajectory: Trajectory = read_optional(&dir.trajectory())?.unwrap_or_default();
        let annotations: Vec<ObjectAnnotation> = read_optional(&dir.annotations())?.unwrap_or_default();
        validate_annotations(&annotations)?;
        let reconstruction = if dir.reconstruction().is_file() {
            Some(io::ply::read_cloud(&dir.reconstruction())?)
        } else {
            None
        };
        let record: Option<SessionRecord> = read_optional(&dir.session())?;
        let derived = if !annotations.is_empty() {
            SessionStatus::Annotated
        } else if reconstruction.is_some() {
            SessionStatus::Fused
        } else {
            SessionStatus::Ingested
        };
        let frames = match &record {
            Some(r) => r.frames.clone(),
            None => (0..dir.frame_count())
                .map(|i| FrameInfo {
                    index: i,
                    timestamp: i as f64 / io::NATIVE_HZ,
                })
                .collect(),
        };
        let mut session = SceneSession {
            scene_id: record.as_ref().map_or(scene_id, |r| r.scene_id.clone()),
            dir: dir.clone(),
            frames,
            trajectory,
            reconstruction: reconstruction.unwrap_or_default(),
            table: None,
            table_params: record.as_ref().map_or_else(TableParams::default, |r| r.table_params),
            annotations,
            status: record.as_ref().map_or(derived, |r| r.status.max(derived)),
            filtered: None,
            cloud_version: record.as_ref().map_or(0, |r| r.cloud_version),
        };
        if let Some(plane) = record.and_then(|r| r.table) {
            session.apply_table(&Point3::from(plane.click))?;
        }
        Ok(session)
    }

    /// Writes `session.json`, and `annotations.json` unless there are no
    /// annotations and never were.
    pub fn save(&self) -> Result<(), SessionError> {
        let record = SessionRecord {
            scene_id: self.scene_id.clone(),
            status: self.status,
            frames: self.frames.clone(),
            table: self.table,
            table_params: self.table_params,
            cloud_version: self.cloud_version,
        };
        io::write_json(&self.dir.session(), &record)?;
        if !self.annotations.is_empty() || self.dir.annotations().exists() {
            io::write_json(&self.dir.annotations(), &self.annotations)?;
        }
        Ok(())
    }

    pub fn status(&self) -> SessionStatus {
        self.status
    }

    /// Moves the status forward; moving backward is an error, staying put is not.
    pub fn advance(&mut self, to: SessionStatus) -> Result<(), SessionError> {
        if to < self.status {
            return Err(SessionError::InvalidState {
                action: "move back",
                status: self.status,
            });
        }
        self.status = to;
        Ok(())
    }

    pub fn annotations(&self) -> &[ObjectAnnotation] {
        &self.annotations
    }

    /// Inserts or replaces the annotation with the same object id.
    /// Returns `false` when an identical annotation was already stored.
    pub fn upsert_annotation(&mut self, annotation: ObjectAnnotation) -> Result<bool, SessionError> {
        if self.status < SessionStatus::Fused {
            return Err(SessionError::InvalidState {
                action: "annotate",
                status: self.status,
            });
        }
        validate_annotations(std::slice::from_ref(&annotation))?;
        let changed = match self.annotations.iter_mut().find(|a| a.object_id == annotation.object_id) {
            Some(existing) if *existing == annotation => false,
            Some(existing) => {
                *existing = annotation;
                true
            }
            None => {
                self.annotations.push(annotation);
                self.annotations.sort_by_key(|a| a.object_id);
                true
            }
        };
        self.advance(self.status.max(SessionStatus::Annotated))?;
        Ok(changed)
    }

    pub fn remove_annotation(&mut self, object_id: u8) -> Option<ObjectAnnotation> {
        let idx = self.annotations.iter().position(|a| a.object_id == object_id)?;
        Some(self.annotations.remove(idx))
    }

    /// The cloud alignment works against: table-filtered when a table was segmented.
    pub fn active_cloud(&self) -> &PointCloud {
        self.filtered.as_ref().unwrap_or(&self.reconstruction)
    }

    /// Bumped whenever the active cloud changes.
    pub fn cloud_version(&self) -> u64 {
        self.cloud_version
    }

    pub fn segment_table(&mut self, click: &Point3<f64>) -> Result<&TablePlane, SessionError> {
        if self.status < SessionStatus::Fused {
            return Err(SessionError::InvalidState {
                action: "segment the table",
                status: self.status,
            });
        }
        self.apply_table(click)?;
        self.cloud_version += 1;
        Ok(self.table.as_ref().expect("just set"))
    }

    fn apply_table(&mut self, click: &Point3<f64>) -> Result<(), SessionError> {
        let seg = segment_table(&self.reconstruction, click, &self.table_params)?;
        self.filtered = Some(self.reconstruction.select(&seg.kept));
        self.table = Some(seg.plane);
        Ok(())
    }

    /// Restores the unfiltered reconstruction. Returns whether a filter was active.
    pub fn undo_table(&mut self) -> bool {
        let had = self.table.take().is_some();
        self.filtered = None;
        if had {
            self.cloud_version += 1;
        }
        had
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{RigidTransform, TriangleMesh};
    use nalgebra::Vector3;

    fn scene_with_cloud(dir: &Path) -> SceneDir {
        let scene = SceneDir::new(dir.join("scene_a"));
        let mut cloud = TriangleMesh::plane(1.0, 1.0).sample_surface(20_000, 1);
        let boxed = TriangleMesh::cuboid(0.2, 0.2, 0.2)
            .transformed(&RigidTransform::from_translation(Vector3::new(0.0, 0.0, 0.1)))
            .sample_surface(5_000, 2);
        cloud.extend(&boxed);
        io::ply::write_cloud(&scene.reconstruction(), &cloud).unwrap();
        io::write_json(&scene.trajectory(), &Trajectory::from_poses([RigidTransform::identity()])).unwrap();
        scene
    }

    #[test]
    fn status_moves_forward_only() {
        let tmp = tempfile::tempdir().unwrap();
        let mut s = SceneSession::load(&scene_with_cloud(tmp.path())).unwrap();
        assert_eq!(s.status(), SessionStatus::Fused);
        s.advance(SessionStatus::Rendered).unwrap();
        assert!(matches!(s.advance(SessionStatus::Annotated), Err(SessionError::InvalidState { .. })));
        s.advance(SessionStatus::Rendered).unwrap();
    }

    #[test]
    fn round_trip_is_lossless() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = scene_with_cloud(tmp.path());
        let mut s = SceneSession::load(&dir).unwrap();
        let pose = RigidTransform::new(
            nalgebra::UnitQuaternion::from_euler_angles(0.1234567891234, -0.7, 2.9),
            Vector3::new(0.1 / 3.0, 1e-17, -2.0 / 7.0),
        );
        assert!(s.upsert_annotation(ObjectAnnotation::new(7, "box", pose)).unwrap());
        assert!(!s.upsert_annotation(ObjectAnnotation::new(7, "box", pose)).unwrap());
        s.segment_table(&Point3::new(0.3, 0.3, 0.0)).unwrap();
        s.save().unwrap();
        let back = SceneSession::load(&dir).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.status(), SessionStatus::Annotated);
        assert_eq!(back.annotations().len(), 1);
    }

    #[test]
    fn table_click_removes_plane_and_undo_restores() {
        let tmp = tempfile::tempdir().unwrap();
        let mut s = SceneSession::load(&scene_with_cloud(tmp.path())).unwrap();
        let original = s.active_cloud().clone();
        let plane = *s.segment_table(&Point3::new(0.3, -0.3, 0.0)).unwrap();
        assert!((plane.normal[2] - 1.0).abs() < 1e-6);
        assert!(plane.offset.abs() < 1e-6);
        let left = s.active_cloud();
        let on_box = left.points.iter().filter(|p| p.z > 0.005).count();
        let on_plane = left.points.iter().filter(|p| p.z.abs() < 1e-9 && (p.x.abs() > 0.1 || p.y.abs() > 0.1)).count();
        assert!(on_box as f64 >= 0.99 * original.points.iter().filter(|p| p.z > 0.005).count() as f64);
        assert_eq!(on_plane, 0);
        assert!(s.undo_table());
        assert_eq!(s.active_cloud(), &original);
        assert_eq!(s.cloud_version(), 2);
    }

    #[test]
    fn clicking_a_small_object_finds_no_plane() {
        let tmp = tempfile::tempdir().unwrap();
        let mut s = SceneSession::load(&scene_with_cloud(tmp.path())).unwrap();
        s.table_params.min_inliers = 3000;
        let err = s.segment_table(&Point3::new(0.1, 0.0, 0.1)).unwrap_err();
        assert_eq!(err.class(), "no-planar-neighborhood");
        assert!(s.table.is_none());
    }
}
