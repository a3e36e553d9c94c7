use nalgebra::{Matrix6, Point3, UnitQuaternion, Vector3, Vector6};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{landmark_transform, RegistrationError};
use crate::geometry::{KdTree, PointCloud, RigidTransform};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IcpParams {
    pub max_iterations: usize,
    /// Pairs farther apart than this are dropped; `f64::INFINITY` disables the gate.
    pub correspondence_max_distance: f64,
    pub convergence_translation_eps: f64,
    pub convergence_rotation_eps: f64,
    pub min_correspondences: usize,
}

impl Default for IcpParams {
    fn default() -> Self {
        Self {
            max_iterations: 60,
            correspondence_max_distance: 0.02,
            convergence_translation_eps: 1e-5,
            convergence_rotation_eps: 1e-5,
            min_correspondences: 10,
        }
    }
}

impl IcpParams {
    pub fn validate(&self) -> Result<(), RegistrationError> {
        let ok = self.max_iterations > 0
            && self.min_correspondences > 0
            && self.correspondence_max_distance > 0.0
            && self.convergence_translation_eps > 0.0
            && self.convergence_rotation_eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(RegistrationError::InvalidParams(
                "ICP parameters must all be positive".into(),
            ))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcpResult {
    /// Maps the source frame into the target frame.
    pub transform: RigidTransform,
    /// Fraction of source points whose nearest target lies within the gate.
    pub fitness: f64,
    /// RMS distance over the gated pairs at the final transform.
    pub rmse: f64,
    pub iterations_used: usize,
    pub converged: bool,
    /// RMS over the gated pairs at the start of each iteration.
    pub rmse_history: Vec<f64>,
}

struct Matches {
    source: Vec<Point3<f64>>,
    target: Vec<Point3<f64>>,
    sum_sq: f64,
}

fn match_points(
    source: &[Point3<f64>],
    tree: &KdTree,
    transform: &RigidTransform,
    gate: f64,
) -> Matches {
    let nearest: Vec<(usize, f64)> = source
        .par_iter()
        .map(|p| tree.nearest(&transform.apply(p)))
        .collect();
    let mut m = Matches {
        source: Vec::with_capacity(source.len()),
        target: Vec::with_capacity(source.len()),
        sum_sq: 0.0,
    };
    for (p, (idx, dist)) in source.iter().zip(nearest) {
        if dist <= gate {
            m.source.push(*p);
            m.target.push(tree.points()[idx]);
            m.sum_sq += dist * dist;
        }
    }
    m
}

/// Point-to-point ICP from `initial`, returning the source-to-target transform.
///
/// Each iteration matches every transformed source point to its nearest
/// target point, drops pairs beyond the gate and re-solves the closed-form
/// fit on the survivors. Non-convergence is reported in the result rather
/// than as an error; running out of correspondences is an error that carries
/// the last iterate.
pub fn icp_refine(
    source: &PointCloud,
    target: &PointCloud,
    initial: &RigidTransform,
    params: &IcpParams,
) -> Result<IcpResult, RegistrationError> {
    params.validate()?;
    let required = params.min_correspondences;
    if source.len() < required || target.len() < required {
        return Err(RegistrationError::CorrespondenceStarvation {
            iteration: 0,
            found: source.len().min(target.len()),
            required,
            last: *initial,
        });
    }
    let tree = KdTree::build(&target.points).map_err(|_| RegistrationError::TooFewPoints { got: 0 })?;
    let gate = params.correspondence_max_distance;

    let mut transform = *initial;
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations_used = 0;
    for iteration in 0..params.max_iterations {
        let m = match_points(&source.points, &tree, &transform, gate);
        if m.source.len() < required {
            return Err(RegistrationError::CorrespondenceStarvation {
                iteration,
                found: m.source.len(),
                required,
                last: transform,
            });
        }
        history.push((m.sum_sq / m.source.len() as f64).sqrt());
        let next = landmark_transform(&m.source, &m.target)?;
        let delta = next * transform.inverse();
        transform = next;
        iterations_used = iteration + 1;
        if delta.translation().norm() < params.convergence_translation_eps
            && delta.rotation_angle() < params.convergence_rotation_eps
        {
            converged = true;
            break;
        }
    }

    let m = match_points(&source.points, &tree, &transform, gate);
    let rmse = if m.source.is_empty() {
        0.0
    } else {
        (m.sum_sq / m.source.len() as f64).sqrt()
    };
    Ok(IcpResult {
        transform,
        fitness: m.source.len() as f64 / source.len() as f64,
        rmse,
        iterations_used,
        converged,
        rmse_history: history,
    })
}

/// Pairs whose normals differ by more than 30° are rejected when the source has normals.
const NORMAL_AGREEMENT_COS: f64 = 0.866;

/// Point-to-plane ICP: minimizes the distance of each transformed source
/// point to the tangent plane of its nearest target point.
///
/// Each iteration solves the 6×6 normal equations of the small-angle
/// linearization and applies the increment on the left. Requires target
/// normals; source normals, when present, filter incompatible pairs. `rmse` and `rmse_history` report plane residuals.
pub fn icp_point_to_plane(
    source: &PointCloud,
    target: &PointCloud,
    initial: &RigidTransform,
    params: &IcpParams,
) -> Result<IcpResult, RegistrationError> {
    params.validate()?;
    let normals = target
        .normals
        .as_ref()
        .ok_or_else(|| RegistrationError::InvalidParams("point-to-plane ICP needs target normals".into()))?;
    let required = params.min_correspondences.max(6);
    if source.len() < required || target.len() < required {
        return Err(RegistrationError::CorrespondenceStarvation {
            iteration: 0,
            found: source.len().min(target.len()),
            required,
            last: *initial,
        });
    }
    let tree = KdTree::build(&target.points).map_err(|_| RegistrationError::TooFewPoints { got: 0 })?;
    let gate = params.correspondence_max_distance;

    // Per pair: moved source point, target point, target normal.
    let pairs = |t: &RigidTransform| -> Vec<(Point3<f64>, Point3<f64>, Vector3<f64>)> {
        let nearest: Vec<(usize, f64)> = source.points.par_iter().map(|p| tree.nearest(&t.apply(p))).collect();
        source
            .points
            .iter()
            .enumerate()
            .zip(nearest)
            .filter(|((k, _), (i, d))| {
                *d <= gate
                    && source
                        .normals
                        .as_ref()
                        .is_none_or(|sn| t.apply_vector(&sn[*k]).dot(&normals[*i]) >= NORMAL_AGREEMENT_COS)
            })
            .map(|((_, p), (i, _))| (t.apply(p), tree.points()[i], normals[i]))
            .collect()
    };
    let plane_rmse = |m: &[(Point3<f64>, Point3<f64>, Vector3<f64>)]| {
        (m.iter().map(|(p, q, n)| (p - q).dot(n).powi(2)).sum::<f64>() / m.len().max(1) as f64).sqrt()
    };

    let mut transform = *initial;
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations_used = 0;
    for iteration in 0..params.max_iterations {
        let m = pairs(&transform);
        if m.len() < required {
            return Err(RegistrationError::CorrespondenceStarvation {
                iteration,
                found: m.len(),
                required,
                last: transform,
            });
        }
        history.push(plane_rmse(&m));
        let mut ata = Matrix6::zeros();
        let mut atb = Vector6::zeros();
        for (p, q, n) in &m {
            let j = Vector6::from_iterator(p.coords.cross(n).iter().chain(n.iter()).copied());
            let r = (p - q).dot(n);
            ata += j * j.transpose();
            atb -= j * r;
        }
        let x = ata.cholesky().ok_or(RegistrationError::Degenerate)?.solve(&atb);
        let omega = Vector3::new(x[0], x[1], x[2]);
        let v = Vector3::new(x[3], x[4], x[5]);
        let delta = RigidTransform::new(UnitQuaternion::from_scaled_axis(omega), v);
        transform = delta * transform;
        iterations_used = iteration + 1;
        if v.norm() < params.convergence_translation_eps && omega.norm() < params.convergence_rotation_eps {
            converged = true;
            break;
        }
    }

    let m = pairs(&transform);
    Ok(IcpResult {
        transform,
        fitness: m.len() as f64 / source.len() as f64,
        rmse: plane_rmse(&m),
        iterations_used,
        converged,
        rmse_history: history,
    })
}
