//! Limit variance of the ball-measure fluctuations from the covariance of
//! `(phi_1, phi_2)` and the two Lyapunov time scales.

use nalgebra::{Matrix2, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigendecomposition form: with `Q = U diag(s1^2, s2^2) U^T`,
/// `((u11+u21) s1)^2 t1 + ((u12+u22) s2)^2 t1 + (u21 s1)^2 (t2-t1) + (u22 s2)^2 (t2-t1)`.
pub fn variance_eigen_form(q: [[f64; 2]; 2], theta1: f64, theta2: f64) -> f64 {
    let m = Matrix2::new(q[0][0], q[0][1], q[1][0], q[1][1]);
    let eig = SymmetricEigen::new(m);
    let u = eig.eigenvectors;
    let s1 = eig.eigenvalues[0].max(0.0);
    let s2 = eig.eigenvalues[1].max(0.0);
    let (u11, u12, u21, u22) = (u[(0, 0)], u[(0, 1)], u[(1, 0)], u[(1, 1)]);
    (u11 + u21).powi(2) * s1 * theta1
        + (u12 + u22).powi(2) * s2 * theta1
        + u21 * u21 * s1 * (theta2 - theta1)
        + u22 * u22 * s2 * (theta2 - theta1)
}

/// Expanded form `t1 Q11 + t2 Q22 + 2 t1 Q12`.
pub fn variance_closed_form(q: [[f64; 2]; 2], theta1: f64, theta2: f64) -> f64 {
    theta1 * q[0][0] + theta2 * q[1][1] + 2.0 * theta1 * q[0][1]
}

/// `sigma^2` for `theta1 = 1/lambda_uu`, `theta2 = 1/lambda_u`, checked both ways.
pub fn limit_variance(q: [[f64; 2]; 2], lambda_u: f64, lambda_uu: f64) -> Result<f64> {
    if !(lambda_u > 0.0 && lambda_u < lambda_uu) {
        return Err(Error::ExponentOrdering { lambda_u, lambda_uu });
    }
    let (t1, t2) = (1.0 / lambda_uu, 1.0 / lambda_u);
    let a = variance_eigen_form(q, t1, t2);
    let b = variance_closed_form(q, t1, t2);
    let scale = q[0][0].abs().max(q[1][1].abs()).max(1.0) * t2;
    if (a - b).abs() > 1e-8 * scale {
        return Err(Error::Inconsistent(format!("variance forms disagree: {a} vs {b}")));
    }
    Ok(b.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn zero_and_diagonal() {
        assert_eq!(limit_variance([[0.0; 2]; 2], 2f64.ln(), 3f64.ln()).unwrap(), 0.0);
        let (lu, luu) = (0.5, 1.5);
        let v = limit_variance([[0.3, 0.0], [0.0, 0.7]], lu, luu).unwrap();
        assert_abs_diff_eq!(v, 0.3 / luu + 0.7 / lu, epsilon = 1e-14);
    }

    #[test]
    fn ordering_is_enforced() {
        assert!(limit_variance([[1.0, 0.0], [0.0, 1.0]], 3f64.ln(), 2f64.ln()).is_err());
    }

    proptest! {
        #[test]
        fn forms_agree_on_random_psd(a in -2.0f64..2.0, b in -2.0f64..2.0, c in -2.0f64..2.0, d in -2.0f64..2.0,
                                     t1 in 0.01f64..5.0, gap in 0.0f64..5.0) {
            // Q = A A^T is PSD
            let q = [[a * a + b * b, a * c + b * d], [a * c + b * d, c * c + d * d]];
            let t2 = t1 + gap;
            let x = variance_eigen_form(q, t1, t2);
            let y = variance_closed_form(q, t1, t2);
            prop_assert!((x - y).abs() <= 1e-10 * (1.0 + y.abs()));
        }
    }
}
