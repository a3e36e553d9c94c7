use nalgebra::{Matrix3, Point3, Rotation3, UnitQuaternion, Vector3, SVD};

use super::RegistrationError;
use crate::geometry::RigidTransform;

/// Relative singular-value floor below which a point configuration is treated as collinear.
const RANK_TOLERANCE: f64 = 1e-9;

/// Least-squares rigid transform taking `model[i]` onto `scene[i]`.
///
/// Kabsch: SVD of the cross-covariance of the centered sets, with the sign of
/// the last singular direction flipped when needed so the result is a proper
/// rotation. Fails for fewer than three pairs or when either set is (nearly)
/// collinear, since the rotation about that line is then unconstrained.
pub fn landmark_transform(
    model: &[Point3<f64>],
    scene: &[Point3<f64>],
) -> Result<RigidTransform, RegistrationError> {
    if model.len() != scene.len() {
        return Err(RegistrationError::MismatchedCorrespondences {
            model: model.len(),
            scene: scene.len(),
        });
    }
    if model.len() < 3 {
        return Err(RegistrationError::TooFewPoints { got: model.len() });
    }
    let n = model.len() as f64;
    let model_centroid = model.iter().fold(Vector3::zeros(), |acc, p| acc + p.coords) / n;
    let scene_centroid = scene.iter().fold(Vector3::zeros(), |acc, p| acc + p.coords) / n;

    let mut cross = Matrix3::zeros();
    let mut model_scatter = Matrix3::zeros();
    let mut scene_scatter = Matrix3::zeros();
    for (m, s) in model.iter().zip(scene) {
        let mc = m.coords - model_centroid;
        let sc = s.coords - scene_centroid;
        cross += sc * mc.transpose();
        model_scatter += mc * mc.transpose();
        scene_scatter += sc * sc.transpose();
    }
    if !has_rank_two(&model_scatter) || !has_rank_two(&scene_scatter) {
        return Err(RegistrationError::Degenerate);
    }

    let svd = SVD::new(cross, true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(RegistrationError::Degenerate),
    };
    let mut correction = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        // nalgebra orders singular values descending, so the last column is the weakest.
        correction[(2, 2)] = -1.0;
    }
    let rotation = u * correction * v_t;
    // U·Vᵀ is orthonormal to machine precision; convert without re-projection.
    let rotation = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(rotation));
    let translation = scene_centroid - rotation * model_centroid;
    Ok(RigidTransform::new(rotation, translation))
}

fn has_rank_two(scatter: &Matrix3<f64>) -> bool {
    let mut sv = scatter.symmetric_eigenvalues();
    sv.as_mut_slice().sort_by(|a, b| b.total_cmp(a));
    sv[0] > 0.0 && sv[1] > RANK_TOLERANCE * sv[0]
}
