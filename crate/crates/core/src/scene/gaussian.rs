use crate::{Error, Mat3, Result, Vec3};

use super::sigmoid;

/// Anisotropic 3D Gaussian with covariance `R diag(exp(log_scale))^2 R^T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gaussian {
    pub position: Vec3,
    pub log_scale: Vec3,
    /// Unit quaternion, `(w, x, y, z)`.
    pub rotation: [f64; 4],
    pub opacity_logit: f64,
    /// Degree-0 RGB in `[0, 1]`.
    pub color: Vec3,
}

impl Gaussian {
    /// Normalizes `rotation`; a zero quaternion becomes the identity.
    pub fn new(position: Vec3, log_scale: Vec3, rotation: [f64; 4], opacity_logit: f64, color: Vec3) -> Self {
        Self {
            position,
            log_scale,
            rotation: normalize_quaternion(rotation),
            opacity_logit,
            color,
        }
    }

    pub fn opacity(&self) -> f64 {
        sigmoid(self.opacity_logit)
    }

    pub fn scale(&self) -> Vec3 {
        self.log_scale.map(f64::exp)
    }

    pub fn rotation_matrix(&self) -> Mat3 {
        quaternion_to_matrix(self.rotation)
    }

    pub fn covariance(&self) -> Mat3 {
        let m = self.rotation_matrix() * Mat3::from_diagonal(&self.scale());
        m * m.transpose()
    }

    pub fn check_finite(&self, index: usize) -> Result<()> {
        let bad = |what: &str| Error::NonFinite {
            index,
            what: what.to_string(),
        };
        if !self.position.iter().all(|v| v.is_finite()) {
            return Err(bad("position"));
        }
        if !self.scale().iter().all(|v| v.is_finite() && *v > 0.0) {
            return Err(bad("log_scale"));
        }
        if !self.rotation.iter().all(|v| v.is_finite()) {
            return Err(bad("rotation"));
        }
        if !self.opacity_logit.is_finite() {
            return Err(bad("opacity_logit"));
        }
        if !self.color.iter().all(|v| v.is_finite()) {
            return Err(bad("color"));
        }
        Ok(())
    }
}

pub(crate) fn normalize_quaternion(q: [f64; 4]) -> [f64; 4] {
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n > 0.0 && n.is_finite() {
        [q[0] / n, q[1] / n, q[2] / n, q[3] / n]
    } else {
        [1.0, 0.0, 0.0, 0.0]
    }
}

/// Rotation matrix of a unit quaternion `(w, x, y, z)`.
pub fn quaternion_to_matrix(q: [f64; 4]) -> Mat3 {
    let [w, x, y, z] = q;
    Mat3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rotation_is_renormalized() {
        let g = Gaussian::new(Vec3::zeros(), Vec3::zeros(), [2.0, 0.0, 0.0, 0.0], 0.0, Vec3::zeros());
        assert_eq!(g.rotation, [1.0, 0.0, 0.0, 0.0]);
        let g = Gaussian::new(Vec3::zeros(), Vec3::zeros(), [1.0, 2.0, 3.0, 4.0], 0.0, Vec3::zeros());
        let n: f64 = g.rotation.iter().map(|v| v * v).sum();
        assert!((n - 1.0).abs() < 1e-12);
    }

    #[test]
    fn covariance_is_symmetric_positive_definite() {
        let g = Gaussian::new(
            Vec3::zeros(),
            Vec3::new(-1.0, 0.2, -0.5),
            [0.3, -0.4, 0.8, 0.1],
            0.0,
            Vec3::zeros(),
        );
        let c = g.covariance();
        assert!((c - c.transpose()).norm() < 1e-14);
        let eig = c.symmetric_eigenvalues();
        assert!(eig.iter().all(|&e| e > 0.0));
        let r = g.rotation_matrix();
        assert!((r.transpose() * r - Mat3::identity()).norm() < 1e-12);
    }

    #[test]
    fn non_finite_fields_are_reported() {
        let mut g = Gaussian::new(Vec3::zeros(), Vec3::zeros(), [1.0, 0.0, 0.0, 0.0], 0.0, Vec3::zeros());
        assert!(g.check_finite(0).is_ok());
        g.opacity_logit = f64::NAN;
        assert!(matches!(g.check_finite(4), Err(Error::NonFinite { index: 4, .. })));
    }
}
