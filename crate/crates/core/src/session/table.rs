use std::collections::VecDeque;

use nalgebra::{Matrix3, Point3, Vector3};
use serde::{Deserialize, Serialize};

use super::SessionError;
use crate::geometry::{KdTree, PointCloud};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TableParams {
    /// Neighbourhood radius for region growing, meters.
    pub neighbor_radius: f64,
    pub max_normal_angle_deg: f64,
    /// Maximum distance of a grown point from the seed plane, meters.
    pub max_plane_distance: f64,
    pub min_inliers: usize,
}

impl Default for TableParams {
    fn default() -> Self {
        Self {
            neighbor_radius: 0.02,
            max_normal_angle_deg: 10.0,
            max_plane_distance: 0.01,
            min_inliers: 100,
        }
    }
}

/// A fitted support plane `normal · x + offset = 0`, normal pointing up
/// (toward the observed side).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TablePlane {
    pub click: [f64; 3],
    pub normal: [f64; 3],
    pub offset: f64,
    pub inliers: usize,
}

impl TablePlane {
    pub fn signed_distance(&self, p: &Point3<f64>) -> f64 {
        Vector3::from(self.normal).dot(&p.coords) + self.offset
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableSegmentation {
    pub plane: TablePlane,
    /// Indices into the input cloud that survive the filter, ascending.
    pub kept: Vec<usize>,
}

/// Grows a planar region from the point nearest `click` and removes it
/// together with everything below the fitted plane.
///
/// A neighbour joins the region when its normal is within the angle limit
/// of the plane normal and it lies within the distance limit of the plane.
/// The plane starts as the seed's tangent plane and is refit to the region
/// until membership settles. Points more than the distance limit below the
/// final plane are dropped as well.
pub fn segment_table(cloud: &PointCloud, click: &Point3<f64>, params: &TableParams) -> Result<TableSegmentation, SessionError> {
    let normals = cloud
        .normals
        .as_ref()
        .ok_or_else(|| SessionError::NoPlane("reconstruction has no normals".into()))?;
    let tree = KdTree::build(&cloud.points).map_err(|_| SessionError::NoPlane("reconstruction is empty".into()))?;
    let (seed, _) = tree.nearest(click);
    let cos_limit = params.max_normal_angle_deg.to_radians().cos();

    // Grow against the seed's tangent plane, then refit and regrow until
    // the region stops changing; a single noisy seed normal tilts the
    // 1 cm slab enough to stop growth well short of a large table.
    let mut plane_n = normals[seed];
    let mut plane_p = cloud.points[seed].coords;
    let mut inlier = Vec::new();
    let mut count = 0;
    for _ in 0..MAX_REFITS {
        let grown = grow_region(cloud, normals, &tree, seed, &plane_n, &plane_p, cos_limit, params);
        let grown_count = grown.iter().filter(|&&b| b).count();
        let converged = grown_count == count;
        count = grown_count;
        inlier = grown;
        if count < params.min_inliers || converged {
            break;
        }
        (plane_n, plane_p) = fit_plane(cloud, &inlier, &plane_n);
    }
    if count < params.min_inliers {
        return Err(SessionError::NoPlane(format!(
            "only {count} planar points around the click, need {}",
            params.min_inliers
        )));
    }
    let (normal, centroid) = fit_plane(cloud, &inlier, &plane_n);
    let plane = TablePlane {
        click: [click.x, click.y, click.z],
        normal: [normal.x, normal.y, normal.z],
        offset: -normal.dot(&centroid),
        inliers: count,
    };
    let kept = (0..cloud.len())
        .filter(|&i| !inlier[i] && plane.signed_distance(&cloud.points[i]) > -params.max_plane_distance)
        .collect();
    Ok(TableSegmentation { plane, kept })
}

const MAX_REFITS: usize = 8;

#[allow(clippy::too_many_arguments)]
fn grow_region(
    cloud: &PointCloud,
    normals: &[Vector3<f64>],
    tree: &KdTree,
    seed: usize,
    plane_n: &Vector3<f64>,
    plane_p: &Vector3<f64>,
    cos_limit: f64,
    params: &TableParams,
) -> Vec<bool> {
    let accept = |j: usize| {
        normals[j].dot(plane_n) >= cos_limit && (cloud.points[j].coords - plane_p).dot(plane_n).abs() <= params.max_plane_distance
    };
    let mut inlier = vec![false; cloud.len()];
    inlier[seed] = true;
    let mut queue = VecDeque::from([seed]);
    while let Some(i) = queue.pop_front() {
        for j in tree.within_radius(&cloud.points[i], params.neighbor_radius) {
            if !inlier[j] && accept(j) {
                inlier[j] = true;
                queue.push_back(j);
            }
        }
    }
    inlier
}

/// Least-squares plane through the flagged points, normal on the side of `hint`.
fn fit_plane(cloud: &PointCloud, inlier: &[bool], hint: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let members = || cloud.points.iter().zip(inlier).filter(|(_, &b)| b).map(|(p, _)| p.coords);
    let n = members().count() as f64;
    let centroid = members().sum::<Vector3<f64>>() / n;
    let scatter = members().fold(Matrix3::zeros(), |acc, p| {
        let d = p - centroid;
        acc + d * d.transpose()
    });
    let eig = scatter.symmetric_eigen();
    let normal: Vector3<f64> = eig.eigenvectors.column(eig.eigenvalues.imin()).into_owned();
    (if normal.dot(hint) < 0.0 { -normal } else { normal }, centroid)
}
