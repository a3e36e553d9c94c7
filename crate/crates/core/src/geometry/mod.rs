//! Rigid transforms, the pinhole camera, point clouds, meshes and the spatial
//! queries shared by every stage of the pipeline.

mod camera;
mod cloud;
mod distance;
mod image;
mod kdtree;
mod mesh;
mod transform;

pub use camera::CameraIntrinsics;
pub use cloud::PointCloud;
pub use distance::{closest_point_on_triangle, point_mesh_distance, point_triangle_distance, MeshDistanceIndex};
pub use image::{DepthImage, Image, RgbImage, RgbdFrame};
pub use kdtree::KdTree;
pub use mesh::TriangleMesh;
pub use transform::RigidTransform;

pub(crate) use transform::quaternion_angle;

use nalgebra::Point3;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("invalid point cloud: {0}")]
    InvalidCloud(String),
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Nearest point of `cloud` to `query` with its distance.
///
/// Builds a throwaway index; hold a [`KdTree`] when querying repeatedly.
pub fn nearest_neighbor(query: &Point3<f64>, cloud: &PointCloud) -> Result<(usize, f64), GeometryError> {
    Ok(KdTree::build(&cloud.points)?.nearest(query))
}
