//! Least-squares rigid alignment of corresponding point sets (Kabsch).

use nalgebra::{Isometry3, Matrix3, Point3, Translation3, UnitQuaternion};

use super::RigError;

/// Proper rigid transform minimizing `sum |R p + t - q|^2`, with the
/// residual RMS of the fit.
#[derive(Debug, Clone, PartialEq)]
pub struct RigidFit {
    pub transform: Isometry3<f64>,
    pub rms: f64,
}

/// Kabsch fit mapping `bind_points` onto `observed_points`.
///
/// Requires at least 3 correspondences that are not collinear: collinearity
/// leaves a free rotation about the line, detected as the covariance's
/// second singular value dropping below 1e-9. Planar sets are fine — the
/// determinant correction picks the proper rotation.
pub fn fit_rigid(
    bind_points: &[Point3<f64>],
    observed_points: &[Point3<f64>],
) -> Result<RigidFit, RigError> {
    if bind_points.len() != observed_points.len() {
        return Err(RigError::CountMismatch {
            a: bind_points.len(),
            b: observed_points.len(),
        });
    }
    let n = bind_points.len();
    if n < 3 {
        return Err(RigError::TooFewPoints(n));
    }

    let centroid = |pts: &[Point3<f64>]| {
        Point3::from(pts.iter().map(|p| p.coords).sum::<nalgebra::Vector3<f64>>() / n as f64)
    };
    let bind_c = centroid(bind_points);
    let obs_c = centroid(observed_points);

    // Cross-covariance H = sum (p - p̄)(q - q̄)^T.
    let mut h = Matrix3::zeros();
    for (p, q) in bind_points.iter().zip(observed_points) {
        h += (p - bind_c) * (q - obs_c).transpose();
    }

    let svd = h.svd(true, true);
    // Collinear bind points make the problem underdetermined.
    let bind_cov = {
        let mut c = Matrix3::zeros();
        for p in bind_points {
            c += (p - bind_c) * (p - bind_c).transpose();
        }
        c
    };
    let bind_singular = bind_cov.svd(false, false).singular_values;
    if bind_singular[1] < 1e-9 {
        return Err(RigError::DegeneratePoints);
    }

    let u = svd.u.ok_or(RigError::DegeneratePoints)?;
    let v_t = svd.v_t.ok_or(RigError::DegeneratePoints)?;
    let d = (v_t.transpose() * u.transpose()).determinant();
    let correction = Matrix3::from_diagonal(&nalgebra::Vector3::new(1.0, 1.0, d.signum()));
    let r = v_t.transpose() * correction * u.transpose();

    let rotation = UnitQuaternion::from_matrix(&r);
    let translation = obs_c.coords - rotation * bind_c.coords;
    let transform = Isometry3::from_parts(Translation3::from(translation), rotation);

    let residual_sq: f64 = bind_points
        .iter()
        .zip(observed_points)
        .map(|(p, q)| (transform * p - q).norm_squared())
        .sum();
    Ok(RigidFit {
        transform,
        rms: (residual_sq / n as f64).sqrt(),
    })
}
