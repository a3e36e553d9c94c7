use nalgebra::{Point3, Vector3};

use super::{GeometryError, RigidTransform};

/// Unordered 3D points with optional per-point normals and colors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point3<f64>>,
    pub normals: Option<Vec<Vector3<f64>>>,
    pub colors: Option<Vec<[u8; 3]>>,
}

impl PointCloud {
    pub fn from_points(points: Vec<Point3<f64>>) -> Self {
        Self {
            points,
            normals: None,
            colors: None,
        }
    }

    pub fn with_normals(points: Vec<Point3<f64>>, normals: Vec<Vector3<f64>>) -> Result<Self, GeometryError> {
        let cloud = Self {
            points,
            normals: Some(normals),
            colors: None,
        };
        cloud.validate()?;
        Ok(cloud)
    }

    pub(crate) fn with_colors_unchecked(mut self, colors: Vec<[u8; 3]>) -> Self {
        self.colors = Some(colors);
        self
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.points.iter().any(|p| !p.coords.iter().all(|c| c.is_finite())) {
            return Err(GeometryError::InvalidCloud("non-finite coordinate".into()));
        }
        if let Some(normals) = &self.normals {
            if normals.len() != self.points.len() {
                return Err(GeometryError::InvalidCloud(format!(
                    "{} normals for {} points",
                    normals.len(),
                    self.points.len()
                )));
            }
            if normals.iter().any(|n| (n.norm() - 1.0).abs() > 1e-6) {
                return Err(GeometryError::InvalidCloud("normal is not unit length".into()));
            }
        }
        if let Some(colors) = &self.colors {
            if colors.len() != self.points.len() {
                return Err(GeometryError::InvalidCloud(format!(
                    "{} colors for {} points",
                    colors.len(),
                    self.points.len()
                )));
            }
        }
        Ok(())
    }

    /// Keeps the points whose index satisfies `keep`, carrying attributes along.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            normals: self
                .normals
                .as_ref()
                .map(|n| indices.iter().map(|&i| n[i]).collect()),
            colors: self
                .colors
                .as_ref()
                .map(|c| indices.iter().map(|&i| c[i]).collect()),
        }
    }

    pub fn transformed(&self, t: &RigidTransform) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(|p| t.apply(p)).collect(),
            normals: self
                .normals
                .as_ref()
                .map(|n| n.iter().map(|v| t.apply_vector(v)).collect()),
            colors: self.colors.clone(),
        }
    }

    /// Every `stride`-th point, starting from the first.
    pub fn decimated(&self, stride: usize) -> PointCloud {
        let idx: Vec<usize> = (0..self.len()).step_by(stride.max(1)).collect();
        self.select(&idx)
    }

    /// Axis-aligned bounds `(min, max)`, or `None` for an empty cloud.
    pub fn bounds(&self) -> Option<(Point3<f64>, Point3<f64>)> {
        let first = *self.points.first()?;
        Some(self.points.iter().fold((first, first), |(lo, hi), p| {
            (lo.inf(p), hi.sup(p))
        }))
    }

    pub fn extend(&mut self, other: &PointCloud) {
        self.points.extend_from_slice(&other.points);
        self.normals = match (self.normals.take(), &other.normals) {
            (Some(mut a), Some(b)) => {
                a.extend_from_slice(b);
                Some(a)
            }
            _ => None,
        };
        self.colors = match (self.colors.take(), &other.colors) {
            (Some(mut a), Some(b)) => {
                a.extend_from_slice(b);
                Some(a)
            }
            _ => None,
        };
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation_catches_bad_normals() {
        let pts = vec![Point3::origin(), Point3::new(1.0, 0.0, 0.0)];
        assert!(PointCloud::with_normals(pts.clone(), vec![Vector3::z()]).is_err());
        assert!(PointCloud::with_normals(pts.clone(), vec![Vector3::z(), Vector3::new(0.0, 0.0, 2.0)]).is_err());
        assert!(PointCloud::with_normals(pts, vec![Vector3::z(), Vector3::x()]).is_ok());
        let bad = PointCloud::from_points(vec![Point3::new(f64::NAN, 0.0, 0.0)]);
        assert!(bad.validate().is_err());
    }

    #[test]
    fn bounds_and_decimation() {
        let cloud = PointCloud::from_points(
            (0..10).map(|i| Point3::new(i as f64, -(i as f64), 1.0)).collect(),
        );
        let (lo, hi) = cloud.bounds().unwrap();
        assert_eq!(lo, Point3::new(0.0, -9.0, 1.0));
        assert_eq!(hi, Point3::new(9.0, 0.0, 1.0));
        assert_eq!(cloud.decimated(3).len(), 4);
        assert!(PointCloud::default().bounds().is_none());
    }
}
