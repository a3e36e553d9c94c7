//! Segmentation and pose metrics, frame-rate downsampling and stage timing.

mod downsample;
mod timing;

pub use downsample::{downsample_indices, downsample_scene, DownsampleSummary};
pub use timing::{timing_report, StageTiming, TimingLog, TimingReport, TimingRow};

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{quaternion_angle, RigidTransform};
use crate::io::IoError;
use crate::labeler::{LabelImage, ObjectAnnotation};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("label images differ in size: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(u32, u32, u32, u32),
    #[error("target rate must satisfy 0 < target <= native ({target} Hz vs {native} Hz)")]
    InvalidRate { target: f64, native: f64 },
    #[error("frame {0} is missing from the {1} set")]
    MissingFrame(usize, &'static str),
    #[error(transparent)]
    Io(#[from] IoError),
}

impl EvalError {
    pub fn class(&self) -> &'static str {
        match self {
            EvalError::DimensionMismatch(..) => "dimension-mismatch",
            EvalError::InvalidRate { .. } => "invalid-rate",
            EvalError::MissingFrame(..) => "missing-frame",
            EvalError::Io(_) => "io-error",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelCounts {
    pub predicted: u64,
    pub truth: u64,
    pub intersection: u64,
    pub union: u64,
}

impl PixelCounts {
    /// 1.0 when both masks are empty.
    pub fn iou(&self) -> f64 {
        if self.union == 0 {
            1.0
        } else {
            self.intersection as f64 / self.union as f64
        }
    }

    fn add(&mut self, o: &PixelCounts) {
        self.predicted += o.predicted;
        self.truth += o.truth;
        self.intersection += o.intersection;
        self.union += o.union;
    }
}

fn check_dims(a: &LabelImage, b: &LabelImage) -> Result<(), EvalError> {
    if a.same_size(b) {
        Ok(())
    } else {
        Err(EvalError::DimensionMismatch(a.width(), a.height(), b.width(), b.height()))
    }
}

pub fn pixel_counts(predicted: &LabelImage, truth: &LabelImage, object_id: u8) -> Result<PixelCounts, EvalError> {
    check_dims(predicted, truth)?;
    let mut c = PixelCounts::default();
    for (&p, &t) in predicted.as_slice().iter().zip(truth.as_slice()) {
        let (p, t) = (p == object_id, t == object_id);
        c.predicted += p as u64;
        c.truth += t as u64;
        c.intersection += (p && t) as u64;
        c.union += (p || t) as u64;
    }
    Ok(c)
}

/// Intersection over union of the pixels labeled `object_id`.
pub fn iou(predicted: &LabelImage, truth: &LabelImage, object_id: u8) -> Result<f64, EvalError> {
    Ok(pixel_counts(predicted, truth, object_id)?.iou())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameSegmentation {
    pub frame: usize,
    /// Objects visible in the ground truth of this frame.
    pub per_object: BTreeMap<u8, f64>,
    pub mean_iou: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationReport {
    /// Mean over the frames in which each object is visible in ground truth.
    pub per_object: BTreeMap<u8, f64>,
    /// Mean of `per_object`.
    pub mean_iou: f64,
    pub frames: Vec<FrameSegmentation>,
    /// Pixel totals over all frames.
    pub pixel_counts: BTreeMap<u8, PixelCounts>,
}

/// Scores predicted label images against ground truth, frame by frame.
///
/// Objects are those appearing in either image set. An object absent from a
/// frame's ground truth is left out of that frame's mean.
pub fn segmentation_report(pairs: &[(usize, LabelImage, LabelImage)]) -> Result<SegmentationReport, EvalError> {
    let per_frame: Vec<(FrameSegmentation, BTreeMap<u8, PixelCounts>)> = pairs
        .par_iter()
        .map(|(frame, pred, truth)| {
            check_dims(pred, truth)?;
            let ids: BTreeSet<u8> = pred.as_slice().iter().chain(truth.as_slice()).copied().filter(|&l| l != 0).collect();
            let mut counts = BTreeMap::new();
            let mut per_object = BTreeMap::new();
            for id in ids {
                let c = pixel_counts(pred, truth, id)?;
                if c.truth > 0 {
                    per_object.insert(id, c.iou());
                }
                counts.insert(id, c);
            }
            let mean_iou = mean(per_object.values().copied());
            Ok((FrameSegmentation { frame: *frame, per_object, mean_iou }, counts))
        })
        .collect::<Result<_, EvalError>>()?;

    let mut sums: BTreeMap<u8, (f64, usize)> = BTreeMap::new();
    let mut totals: BTreeMap<u8, PixelCounts> = BTreeMap::new();
    for (f, counts) in &per_frame {
        for (&id, &v) in &f.per_object {
            let e = sums.entry(id).or_default();
            e.0 += v;
            e.1 += 1;
        }
        for (&id, c) in counts {
            totals.entry(id).or_default().add(c);
        }
    }
    let per_object: BTreeMap<u8, f64> = sums.into_iter().map(|(id, (s, n))| (id, s / n as f64)).collect();
    Ok(SegmentationReport {
        mean_iou: mean(per_object.values().copied()).unwrap_or(1.0),
        per_object,
        frames: per_frame.into_iter().map(|(f, _)| f).collect(),
        pixel_counts: totals,
    })
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Geodesic rotation angle (radians) and translation distance (meters).
pub fn pose_error(predicted: &RigidTransform, truth: &RigidTransform) -> (f64, f64) {
    let rotation = quaternion_angle(&(truth.rotation().inverse() * predicted.rotation()));
    let translation = (predicted.translation() - truth.translation()).norm();
    (rotation, translation)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseError {
    pub rotation_rad: f64,
    pub translation_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseErrorReport {
    pub per_object: BTreeMap<u8, PoseError>,
    /// Ground-truth objects with no predicted annotation.
    pub missing: Vec<u8>,
    pub mean_rotation_rad: f64,
    pub mean_translation_m: f64,
}

pub fn pose_error_report(predicted: &[ObjectAnnotation], truth: &[ObjectAnnotation]) -> PoseErrorReport {
    let mut per_object = BTreeMap::new();
    let mut missing = Vec::new();
    for t in truth {
        match predicted.iter().find(|p| p.object_id == t.object_id) {
            Some(p) => {
                let (r, d) = pose_error(&p.pose, &t.pose);
                per_object.insert(t.object_id, PoseError { rotation_rad: r, translation_m: d });
            }
            None => missing.push(t.object_id),
        }
    }
    missing.sort_unstable();
    PoseErrorReport {
        mean_rotation_rad: mean(per_object.values().map(|e: &PoseError| e.rotation_rad)).unwrap_or(0.0),
        mean_translation_m: mean(per_object.values().map(|e: &PoseError| e.translation_m)).unwrap_or(0.0),
        per_object,
        missing,
    }
}

/// Per-object pose error averaged over frames, each frame comparing
/// object-in-camera poses. An object counts as missing if any frame lacks
/// its prediction.
pub fn pose_error_over_frames(frames: &[(Vec<ObjectAnnotation>, Vec<ObjectAnnotation>)]) -> PoseErrorReport {
    let mut sums: BTreeMap<u8, (f64, f64, usize)> = BTreeMap::new();
    let mut missing = Vec::new();
    for (predicted, truth) in frames {
        let report = pose_error_report(predicted, truth);
        for (id, e) in report.per_object {
            let s = sums.entry(id).or_default();
            *s = (s.0 + e.rotation_rad, s.1 + e.translation_m, s.2 + 1);
        }
        missing.extend(report.missing);
    }
    missing.sort_unstable();
    missing.dedup();
    let per_object: BTreeMap<u8, PoseError> = sums
        .into_iter()
        .map(|(id, (r, t, n))| {
            let n = n as f64;
            (id, PoseError { rotation_rad: r / n, translation_m: t / n })
        })
        .collect();
    PoseErrorReport {
        mean_rotation_rad: mean(per_object.values().map(|e| e.rotation_rad)).unwrap_or(0.0),
        mean_translation_m: mean(per_object.values().map(|e| e.translation_m)).unwrap_or(0.0),
        per_object,
        missing,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{UnitQuaternion, Vector3};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn mask(w: u32, h: u32, f: impl Fn(u32, u32) -> bool) -> LabelImage {
        let mut img = LabelImage::filled(w, h, 0);
        for v in 0..h {
            for u in 0..w {
                if f(u, v) {
                    img.set(u, v, 1);
                }
            }
        }
        img
    }

    #[test]
    fn iou_examples() {
        let full = mask(8, 8, |_, _| true);
        let left = mask(8, 8, |u, _| u < 4);
        let top = mask(8, 8, |_, v| v < 4);
        let right = mask(8, 8, |u, _| u >= 4);
        let empty = mask(8, 8, |_, _| false);
        assert_eq!(iou(&full, &full, 1).unwrap(), 1.0);
        assert_eq!(iou(&left, &right, 1).unwrap(), 0.0);
        assert_eq!(iou(&left, &full, 1).unwrap(), 0.5);
        assert!((iou(&left, &top, 1).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(iou(&empty, &empty, 1).unwrap(), 1.0);
        assert!(matches!(iou(&full, &mask(4, 8, |_, _| true), 1), Err(EvalError::DimensionMismatch(..))));
    }

    #[test]
    fn iou_matches_pixel_counting_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let a = LabelImage::from_vec(32, 32, (0..1024).map(|_| rng.random_range(0..4)).collect()).unwrap();
            let b = LabelImage::from_vec(32, 32, (0..1024).map(|_| rng.random_range(0..4)).collect()).unwrap();
            for id in 1..4u8 {
                let mut inter = 0;
                let mut uni = 0;
                for i in 0..1024 {
                    let (x, y) = (a.as_slice()[i] == id, b.as_slice()[i] == id);
                    if x && y {
                        inter += 1;
                    }
                    if x || y {
                        uni += 1;
                    }
                }
                assert_eq!(iou(&a, &b, id).unwrap(), inter as f64 / uni as f64);
                assert_eq!(iou(&a, &b, id).unwrap(), iou(&b, &a, id).unwrap());
            }
        }
    }

    #[test]
    fn report_excludes_absent_objects_from_frame_means() {
        let truth0 = mask(4, 4, |u, _| u < 2);
        let mut pred0 = truth0.clone();
        pred0.set(3, 3, 2); // object 2 predicted but absent from truth
        let truth1 = mask(4, 4, |_, _| false);
        let report = segmentation_report(&[(0, pred0, truth0), (1, truth1.clone(), truth1)]).unwrap();
        assert_eq!(report.per_object.get(&1), Some(&1.0));
        assert!(!report.per_object.contains_key(&2));
        assert_eq!(report.mean_iou, 1.0);
        assert_eq!(report.frames[1].mean_iou, None);
        assert_eq!(report.pixel_counts[&2].predicted, 1);
    }

    #[test]
    fn pose_error_examples() {
        let a = RigidTransform::new(UnitQuaternion::from_euler_angles(0.3, -0.2, 1.0), Vector3::new(1.0, 2.0, 3.0));
        assert_eq!(pose_error(&a, &a), (0.0, 0.0));
        let rz = RigidTransform::from_rotation(UnitQuaternion::from_axis_angle(&Vector3::z_axis(), FRAC_PI_2));
        let (r, t) = pose_error(&rz, &RigidTransform::identity());
        assert!((r - FRAC_PI_2).abs() < 1e-12 && t == 0.0);
        let shifted = RigidTransform::from_translation(Vector3::new(3.0, 4.0, 0.0));
        assert_eq!(pose_error(&shifted, &RigidTransform::identity()), (0.0, 5.0));
    }

    proptest! {
        #[test]
        fn pose_error_invariances(
            a in prop::array::uniform3(-PI..PI), b in prop::array::uniform3(-PI..PI), g in prop::array::uniform3(-PI..PI),
            ta in prop::array::uniform3(-2.0f64..2.0), tb in prop::array::uniform3(-2.0f64..2.0), tg in prop::array::uniform3(-2.0f64..2.0),
        ) {
            let p = RigidTransform::new(UnitQuaternion::from_euler_angles(a[0], a[1], a[2]), Vector3::from(ta));
            let t = RigidTransform::new(UnitQuaternion::from_euler_angles(b[0], b[1], b[2]), Vector3::from(tb));
            let (r0, d0) = pose_error(&p, &t);
            prop_assert!((0.0..=PI + 1e-12).contains(&r0));
            let g_rot = RigidTransform::from_rotation(UnitQuaternion::from_euler_angles(g[0], g[1], g[2]));
            let (r1, d1) = pose_error(&(p * g_rot), &(t * g_rot));
            prop_assert!((r1 - r0).abs() < 1e-9);
            prop_assert!((d1 - d0).abs() < 1e-9);
            let shift = RigidTransform::from_translation(Vector3::from(tg));
            let (r2, d2) = pose_error(&(shift * p), &(shift * t));
            prop_assert!((r2 - r0).abs() < 1e-9);
            prop_assert!((d2 - d0).abs() < 1e-9);
        }
    }

    #[test]
    fn frame_average_of_pose_errors() {
        let truth = vec![ObjectAnnotation::new(1, "a", RigidTransform::identity())];
        let shifted = |d: f64| vec![ObjectAnnotation::new(1, "a", RigidTransform::from_translation(Vector3::new(d, 0.0, 0.0)))];
        let report = pose_error_over_frames(&[(shifted(0.01), truth.clone()), (shifted(0.03), truth.clone()), (vec![], truth)]);
        assert!((report.per_object[&1].translation_m - 0.02).abs() < 1e-15);
        assert_eq!(report.missing, vec![1]);
    }
}
