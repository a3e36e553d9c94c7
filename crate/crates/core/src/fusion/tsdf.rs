use nalgebra::{Point3, Vector3};
use rayon::prelude::*;

use super::FusionError;
use crate::geometry::{CameraIntrinsics, PointCloud, RgbdFrame, RigidTransform};

/// Weight cap so late observations can still correct early ones.
pub const DEFAULT_MAX_WEIGHT: f32 = 100.0;

/// Truncated signed distance volume over an axis-aligned voxel grid.
///
/// Values are signed distances along the camera ray divided by the
/// truncation band and clamped to `[-1, 1]`; positive is free space. A zero
/// weight means the voxel has never been observed.
#[derive(Debug, Clone, PartialEq)]
pub struct TsdfVolume {
    origin: Point3<f64>,
    voxel_size: f64,
    dims: [usize; 3],
    truncation: f64,
    max_weight: f32,
    tsdf: Vec<f32>,
    weights: Vec<f32>,
}

type SurfaceSlice = (Vec<Point3<f64>>, Vec<Vector3<f64>>);

impl TsdfVolume {
    /// `origin` is the minimum corner of the grid; voxel centers sit at
    /// `origin + (index + 0.5) * voxel_size`.
    pub fn new(origin: Point3<f64>, voxel_size: f64, dims: [usize; 3], truncation: f64) -> Result<Self, FusionError> {
        if !voxel_size.is_finite() || voxel_size <= 0.0 {
            return Err(FusionError::InvalidVolume("voxel size must be positive".into()));
        }
        if !truncation.is_finite() || truncation < voxel_size {
            return Err(FusionError::InvalidVolume("truncation must be at least one voxel".into()));
        }
        if dims.contains(&0) {
            return Err(FusionError::InvalidVolume("volume has a zero dimension".into()));
        }
        let count = dims[0]
            .checked_mul(dims[1])
            .and_then(|v| v.checked_mul(dims[2]))
            .filter(|&c| c <= 1 << 31)
            .ok_or_else(|| FusionError::InvalidVolume(format!("volume {dims:?} is too large")))?;
        Ok(Self {
            origin,
            voxel_size,
            dims,
            truncation,
            max_weight: DEFAULT_MAX_WEIGHT,
            tsdf: vec![1.0; count],
            weights: vec![0.0; count],
        })
    }

    /// Grid covering `[min, max]` with truncation of four voxels.
    pub fn from_bounds(min: Point3<f64>, max: Point3<f64>, voxel_size: f64) -> Result<Self, FusionError> {
        let extent = max - min;
        if extent.iter().any(|e| e.is_nan() || *e <= 0.0) {
            return Err(FusionError::InvalidVolume("empty bounds".into()));
        }
        let dims = [0, 1, 2].map(|i| (extent[i] / voxel_size).ceil().max(1.0) as usize);
        Self::new(min, voxel_size, dims, 4.0 * voxel_size)
    }

    pub fn with_max_weight(mut self, max_weight: f32) -> Self {
        self.max_weight = max_weight;
        self
    }

    pub fn origin(&self) -> Point3<f64> {
        self.origin
    }

    pub fn voxel_size(&self) -> f64 {
        self.voxel_size
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn truncation(&self) -> f64 {
        self.truncation
    }

    pub fn max_weight(&self) -> f32 {
        self.max_weight
    }

    pub fn tsdf_values(&self) -> &[f32] {
        &self.tsdf
    }

    pub fn weight_values(&self) -> &[f32] {
        &self.weights
    }

    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    pub fn tsdf_at(&self, x: usize, y: usize, z: usize) -> f32 {
        self.tsdf[self.index(x, y, z)]
    }

    pub fn weight_at(&self, x: usize, y: usize, z: usize) -> f32 {
        self.weights[self.index(x, y, z)]
    }

    pub fn voxel_center(&self, x: usize, y: usize, z: usize) -> Point3<f64> {
        self.origin + Vector3::new(x as f64 + 0.5, y as f64 + 0.5, z as f64 + 0.5) * self.voxel_size
    }

    pub fn observed_voxels(&self) -> usize {
        self.weights.iter().filter(|w| **w > 0.0).count()
    }

    /// Projective TSDF update of every voxel from one posed depth image.
    ///
    /// `camera_pose` maps camera coordinates into the volume frame. Depth is
    /// looked up in the pixel containing the voxel's projection.
    pub fn integrate(&mut self, frame: &RgbdFrame, intr: &CameraIntrinsics, camera_pose: &RigidTransform) {
        let world_to_cam = camera_pose.inverse();
        let rot = world_to_cam.rotation_matrix();
        let step_x = rot * Vector3::new(self.voxel_size, 0.0, 0.0);
        let [nx, ny, _] = self.dims;
        let slice = nx * ny;
        let truncation = self.truncation;
        let max_weight = self.max_weight;
        let width = intr.width as f64;
        let height = intr.height as f64;
        let depth = frame.depth.as_slice();
        let row_stride = frame.depth.width() as usize;
        let mut tsdf = std::mem::take(&mut self.tsdf);
        let mut weights = std::mem::take(&mut self.weights);
        let this = &*self;
        let updates = |z: usize, tsdf: &mut [f32], weights: &mut [f32]| {
            for y in 0..ny {
                let mut p = world_to_cam.apply(&this.voxel_center(0, y, z));
                for x in 0..nx {
                    if x > 0 {
                        p += step_x;
                    }
                    if p.z <= 0.0 {
                        continue;
                    }
                    let u = intr.fx * p.x / p.z + intr.cx;
                    let v = intr.fy * p.y / p.z + intr.cy;
                    if !(u >= 0.0 && u < width && v >= 0.0 && v < height) {
                        continue;
                    }
                    let raw = depth[v as usize * row_stride + u as usize];
                    if raw == 0 {
                        continue;
                    }
                    let sdf = raw as f64 * intr.depth_scale - p.z;
                    if sdf < -truncation {
                        continue;
                    }
                    let d = (sdf / truncation).min(1.0) as f32;
                    let i = x + nx * y;
                    let w = weights[i];
                    tsdf[i] = (tsdf[i] * w + d) / (w + 1.0);
                    weights[i] = (w + 1.0).min(max_weight);
                }
            }
        };
        tsdf.par_chunks_mut(slice)
            .zip(weights.par_chunks_mut(slice))
            .enumerate()
            .for_each(|(z, (t, w))| updates(z, t, w));
        self.tsdf = tsdf;
        self.weights = weights;
    }

    fn gradient(&self, x: usize, y: usize, z: usize) -> Vector3<f64> {
        let c = [x, y, z];
        let mut g = Vector3::zeros();
        for axis in 0..3 {
            let sample = |offset: isize| -> Option<f64> {
                let mut q = c;
                let v = q[axis] as isize + offset;
                if v < 0 || v as usize >= self.dims[axis] {
                    return None;
                }
                q[axis] = v as usize;
                let i = self.index(q[0], q[1], q[2]);
                (self.weights[i] > 0.0).then(|| self.tsdf[i] as f64)
            };
            let here = self.tsdf[self.index(x, y, z)] as f64;
            g[axis] = match (sample(-1), sample(1)) {
                (Some(a), Some(b)) => (b - a) / (2.0 * self.voxel_size),
                (None, Some(b)) => (b - here) / self.voxel_size,
                (Some(a), None) => (here - a) / self.voxel_size,
                (None, None) => 0.0,
            };
        }
        g
    }

    /// Zero crossings along voxel edges whose two endpoints are both observed.
    ///
    /// Each crossing is linearly interpolated between the voxel centers; its
    /// normal is the interpolated central-difference TSDF gradient, pointing
    /// towards free space.
    pub fn extract_surface(&self) -> PointCloud {
        let [nx, ny, nz] = self.dims;
        let per_slice: Vec<SurfaceSlice> = (0..nz)
            .into_par_iter()
            .map(|z| {
                let mut points = Vec::new();
                let mut normals = Vec::new();
                for y in 0..ny {
                    for x in 0..nx {
                        let i = self.index(x, y, z);
                        if self.weights[i] <= 0.0 {
                            continue;
                        }
                        let t0 = self.tsdf[i];
                        for axis in 0..3 {
                            let mut n = [x, y, z];
                            n[axis] += 1;
                            if n[axis] >= self.dims[axis] {
                                continue;
                            }
                            let j = self.index(n[0], n[1], n[2]);
                            if self.weights[j] <= 0.0 {
                                continue;
                            }
                            let t1 = self.tsdf[j];
                            if (t0 >= 0.0) == (t1 >= 0.0) {
                                continue;
                            }
                            let frac = t0 as f64 / (t0 as f64 - t1 as f64);
                            let a = self.voxel_center(x, y, z);
                            let b = self.voxel_center(n[0], n[1], n[2]);
                            points.push(a + (b - a) * frac);
                            let g = self.gradient(x, y, z) * (1.0 - frac) + self.gradient(n[0], n[1], n[2]) * frac;
                            let fallback = {
                                let mut e = Vector3::zeros();
                                e[axis] = if t1 > t0 { 1.0 } else { -1.0 };
                                e
                            };
                            normals.push(g.try_normalize(1e-12).unwrap_or(fallback));
                        }
                    }
                }
                (points, normals)
            })
            .collect();
        let mut cloud = PointCloud {
            points: Vec::new(),
            normals: Some(Vec::new()),
            colors: None,
        };
        for (p, n) in per_slice {
            cloud.points.extend(p);
            cloud.normals.as_mut().unwrap().extend(n);
        }
        cloud
    }
}

/// Extracts the zero-crossing surface of `volume`.
pub fn extract_surface(volume: &TsdfVolume) -> PointCloud {
    volume.extract_surface()
}

/// Updates `volume` with one posed frame.
pub fn integrate_frame(volume: &mut TsdfVolume, frame: &RgbdFrame, intr: &CameraIntrinsics, camera_pose: &RigidTransform) {
    volume.integrate(frame, intr, camera_pose);
}
