use nalgebra::{Point2, Point3};
use serde::{Deserialize, Serialize};

use super::GeometryError;

/// Pinhole camera model for pre-rectified images.
///
/// Continuous pixel coordinates follow `u = fx * x / z + cx`. `depth_scale`
/// converts the raw 16-bit depth units into meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    #[serde(default = "default_depth_scale")]
    pub depth_scale: f64,
}

fn default_depth_scale() -> f64 {
    0.001
}

impl Default for CameraIntrinsics {
    /// 640×480 placeholder model; not calibrated against any real sensor.
    fn default() -> Self {
        Self {
            fx: 570.0,
            fy: 570.0,
            cx: 320.0,
            cy: 240.0,
            width: 640,
            height: 480,
            depth_scale: default_depth_scale(),
        }
    }
}

impl CameraIntrinsics {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
        depth_scale: f64,
    ) -> Result<Self, GeometryError> {
        let intr = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            depth_scale,
        };
        intr.validate()?;
        Ok(intr)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let finite = [self.fx, self.fy, self.cx, self.cy, self.depth_scale]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(GeometryError::InvalidIntrinsics("non-finite parameter".into()));
        }
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(GeometryError::InvalidIntrinsics("focal lengths must be positive".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(GeometryError::InvalidIntrinsics("image size must be nonzero".into()));
        }
        if !(0.0..self.width as f64).contains(&self.cx) || !(0.0..self.height as f64).contains(&self.cy) {
            return Err(GeometryError::InvalidIntrinsics(
                "principal point must lie inside the image".into(),
            ));
        }
        if self.depth_scale <= 0.0 {
            return Err(GeometryError::InvalidIntrinsics("depth_scale must be positive".into()));
        }
        Ok(())
    }

    /// Same camera with the image resized by an integer factor.
    pub fn scaled(&self, width: u32, height: u32) -> Self {
        let sx = width as f64 / self.width as f64;
        let sy = height as f64 / self.height as f64;
        Self {
            fx: self.fx * sx,
            fy: self.fy * sy,
            cx: self.cx * sx,
            cy: self.cy * sy,
            width,
            height,
            depth_scale: self.depth_scale,
        }
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    /// Unbounded pinhole projection; `None` only for points not in front of the camera.
    pub fn project_unbounded(&self, p: &Point3<f64>) -> Option<Point2<f64>> {
        if p.z <= 0.0 {
            return None;
        }
        Some(Point2::new(
            self.fx * p.x / p.z + self.cx,
            self.fy * p.y / p.z + self.cy,
        ))
    }

    /// Projects a camera-frame point to continuous pixel coordinates.
    /// Returns `None` behind the camera or outside `[0,width)×[0,height)`.
    pub fn project(&self, p: &Point3<f64>) -> Option<Point2<f64>> {
        let uv = self.project_unbounded(p)?;
        let inside = uv.x >= 0.0
            && uv.x < self.width as f64
            && uv.y >= 0.0
            && uv.y < self.height as f64;
        inside.then_some(uv)
    }

    /// Lifts an integer pixel with raw depth into the camera frame.
    ///
    /// Panics if the pixel is outside the image.
    pub fn backproject(&self, u: u32, v: u32, depth_value: u16) -> Option<Point3<f64>> {
        assert!(
            u < self.width && v < self.height,
            "pixel ({u},{v}) outside {}x{} image",
            self.width,
            self.height
        );
        if depth_value == 0 {
            return None;
        }
        let z = depth_value as f64 * self.depth_scale;
        Some(Point3::new(
            (u as f64 - self.cx) * z / self.fx,
            (v as f64 - self.cy) * z / self.fy,
            z,
        ))
    }
}
