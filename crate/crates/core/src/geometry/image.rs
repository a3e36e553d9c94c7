use nalgebra::{Matrix3, Point3, Vector3};

use super::{CameraIntrinsics, GeometryError, PointCloud};

/// Dense row-major image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image<T> {
    width: u32,
    height: u32,
    data: Vec<T>,
}

pub type RgbImage = Image<[u8; 3]>;
pub type DepthImage = Image<u16>;

impl<T: Copy> Image<T> {
    pub fn filled(width: u32, height: u32, value: T) -> Self {
        Self {
            width,
            height,
            data: vec![value; width as usize * height as usize],
        }
    }

    pub fn from_vec(width: u32, height: u32, data: Vec<T>) -> Result<Self, GeometryError> {
        if data.len() != width as usize * height as usize {
            return Err(GeometryError::DimensionMismatch(format!(
                "{} values for a {width}x{height} image",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn get(&self, u: u32, v: u32) -> T {
        self.data[v as usize * self.width as usize + u as usize]
    }

    pub fn set(&mut self, u: u32, v: u32, value: T) {
        self.data[v as usize * self.width as usize + u as usize] = value;
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn same_size<U>(&self, other: &Image<U>) -> bool {
        self.width == other.width && self.height == other.height
    }
}

/// One timestamped, registered color/depth pair.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbdFrame {
    pub index: usize,
    pub timestamp: f64,
    pub rgb: RgbImage,
    pub depth: DepthImage,
}

impl RgbdFrame {
    pub fn new(
        index: usize,
        timestamp: f64,
        rgb: RgbImage,
        depth: DepthImage,
        intr: &CameraIntrinsics,
    ) -> Result<Self, GeometryError> {
        let frame = Self {
            index,
            timestamp,
            rgb,
            depth,
        };
        frame.check_against(intr)?;
        Ok(frame)
    }

    pub fn check_against(&self, intr: &CameraIntrinsics) -> Result<(), GeometryError> {
        let dims = (intr.width, intr.height);
        if (self.rgb.width(), self.rgb.height()) != dims || (self.depth.width(), self.depth.height()) != dims {
            return Err(GeometryError::DimensionMismatch(format!(
                "frame {} images do not match {}x{} intrinsics",
                self.index, intr.width, intr.height
            )));
        }
        Ok(())
    }

    /// Fraction of pixels carrying a valid (nonzero) depth.
    pub fn valid_depth_fraction(&self) -> f64 {
        let valid = self.depth.as_slice().iter().filter(|d| **d != 0).count();
        valid as f64 / self.depth.as_slice().len().max(1) as f64
    }

    /// Backprojects every `stride`-th pixel in both axes with valid depth.
    pub fn backproject(&self, intr: &CameraIntrinsics, stride: u32) -> PointCloud {
        let stride = stride.max(1);
        let mut points = Vec::new();
        let mut colors = Vec::new();
        for v in (0..self.depth.height()).step_by(stride as usize) {
            for u in (0..self.depth.width()).step_by(stride as usize) {
                if let Some(p) = intr.backproject(u, v, self.depth.get(u, v)) {
                    points.push(p);
                    colors.push(self.rgb.get(u, v));
                }
            }
        }
        PointCloud::from_points(points).with_colors_unchecked(colors)
    }

    /// Strided backprojection with normals from a local plane fit over the
    /// pixels within `±radius` of each sample, oriented toward the camera.
    /// Samples with too few neighbours on the same surface are dropped.
    pub fn backproject_with_normals(&self, intr: &CameraIntrinsics, stride: u32, radius: u32) -> PointCloud {
        let (w, h) = (self.depth.width() as usize, self.depth.height() as usize);
        let grid: Vec<Option<Point3<f64>>> = (0..w * h)
            .map(|i| intr.backproject((i % w) as u32, (i / w) as u32, self.depth.as_slice()[i]))
            .collect();
        let r = radius.max(1) as isize;
        // Neighbours farther than this along the ray belong to another surface.
        let max_gap = |z: f64| 0.01 + 0.05 * z * r as f64 / intr.fx;
        let mut points = Vec::new();
        let mut normals = Vec::new();
        for v in (0..h as isize).step_by(stride.max(1) as usize) {
            for u in (0..w as isize).step_by(stride.max(1) as usize) {
                let Some(p) = grid[v as usize * w + u as usize] else {
                    continue;
                };
                let gap = max_gap(p.z);
                let mut n = 0usize;
                let mut sum = Vector3::zeros();
                let mut outer = Matrix3::zeros();
                for y in (v - r).max(0)..=(v + r).min(h as isize - 1) {
                    for x in (u - r).max(0)..=(u + r).min(w as isize - 1) {
                        if let Some(q) = grid[y as usize * w + x as usize] {
                            if (q.z - p.z).abs() <= gap {
                                let d = q.coords - p.coords;
                                sum += d;
                                outer += d * d.transpose();
                                n += 1;
                            }
                        }
                    }
                }
                if n < 6 {
                    continue;
                }
                let mean = sum / n as f64;
                let cov = outer / n as f64 - mean * mean.transpose();
                let eig = cov.symmetric_eigen();
                let k = eig.eigenvalues.imin();
                let mut normal: Vector3<f64> = eig.eigenvectors.column(k).into_owned();
                if normal.dot(&p.coords) > 0.0 {
                    normal = -normal;
                }
                points.push(p);
                normals.push(normal.normalize());
            }
        }
        PointCloud {
            points,
            normals: Some(normals),
            colors: None,
        }
    }

    /// Camera-frame points of all valid pixels, without colors.
    pub fn points(&self, intr: &CameraIntrinsics, stride: u32) -> Vec<Point3<f64>> {
        self.backproject(intr, stride).points
    }
}
