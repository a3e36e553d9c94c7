use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::FusionError;
use crate::geometry::RigidTransform;

/// Camera-to-reconstruction pose of one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryEntry {
    pub frame: usize,
    pub pose: RigidTransform,
}

/// Ordered camera poses, strictly increasing in frame index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    entries: Vec<TrajectoryEntry>,
}

impl Trajectory {
    pub fn new(entries: Vec<TrajectoryEntry>) -> Result<Self, FusionError> {
        if entries.windows(2).any(|w| w[1].frame <= w[0].frame) {
            return Err(FusionError::InvalidTrajectory(
                "frame indices must be strictly increasing".into(),
            ));
        }
        Ok(Self { entries })
    }

    pub fn from_poses(poses: impl IntoIterator<Item = RigidTransform>) -> Self {
        Self {
            entries: poses
                .into_iter()
                .enumerate()
                .map(|(frame, pose)| TrajectoryEntry { frame, pose })
                .collect(),
        }
    }

    pub fn entries(&self) -> &[TrajectoryEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn pose_of(&self, frame: usize) -> Option<RigidTransform> {
        self.entries
            .binary_search_by_key(&frame, |e| e.frame)
            .ok()
            .map(|i| self.entries[i].pose)
    }

    pub fn push(&mut self, frame: usize, pose: RigidTransform) -> Result<(), FusionError> {
        if self.entries.last().is_some_and(|e| e.frame >= frame) {
            return Err(FusionError::InvalidTrajectory(format!(
                "frame {frame} is not after the last trajectory entry"
            )));
        }
        self.entries.push(TrajectoryEntry { frame, pose });
        Ok(())
    }

    /// Re-expresses every pose relative to `origin`: `origin⁻¹ · pose`.
    pub fn relative_to(&self, origin: &RigidTransform) -> Trajectory {
        let inv = origin.inverse();
        Trajectory {
            entries: self
                .entries
                .iter()
                .map(|e| TrajectoryEntry {
                    frame: e.frame,
                    pose: inv * e.pose,
                })
                .collect(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct EntryRecord {
    frame: usize,
    q: [f64; 4],
    t: [f64; 3],
}

impl Serialize for Trajectory {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.entries.iter().map(|e| EntryRecord {
            frame: e.frame,
            q: e.pose.wxyz(),
            t: e.pose.xyz(),
        }))
    }
}

impl<'de> Deserialize<'de> for Trajectory {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let records = Vec::<EntryRecord>::deserialize(d)?;
        let entries = records
            .into_iter()
            .map(|r| TrajectoryEntry {
                frame: r.frame,
                pose: RigidTransform::from_wxyz(r.q, r.t),
            })
            .collect();
        Trajectory::new(entries).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_layout_and_ordering() {
        let traj = Trajectory::from_poses([RigidTransform::identity(); 2]);
        let json = serde_json::to_string(&traj).unwrap();
        assert_eq!(
            json,
            r#"[{"frame":0,"q":[1.0,0.0,0.0,0.0],"t":[0.0,0.0,0.0]},{"frame":1,"q":[1.0,0.0,0.0,0.0],"t":[0.0,0.0,0.0]}]"#
        );
        assert_eq!(serde_json::from_str::<Trajectory>(&json).unwrap(), traj);
        let unordered = r#"[{"frame":1,"q":[1,0,0,0],"t":[0,0,0]},{"frame":1,"q":[1,0,0,0],"t":[0,0,0]}]"#;
        assert!(serde_json::from_str::<Trajectory>(unordered).is_err());
        assert_eq!(traj.pose_of(1), Some(RigidTransform::identity()));
        assert_eq!(traj.pose_of(2), None);
    }
}
