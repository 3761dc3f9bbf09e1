//! Per-Gaussian screen-space projection and its adjoint.

use nalgebra::{Matrix2, Matrix2x3};

use super::{Camera, GaussianGrad, RenderConfig};
use crate::scene::Gaussian;
use crate::{Mat3, Result, Vec2, Vec3};

#[derive(Debug, Clone)]
pub(crate) struct Splat {
    /// Index into the rendered Gaussian slice.
    pub index: usize,
    pub depth: f64,
    pub mean: Vec2,
    /// Inverse 2D covariance `[a, b, c]` for `a dx^2 + 2 b dx dy + c dy^2`.
    pub conic: [f64; 3],
    pub opacity: f64,
    pub color: Vec3,
    /// Inclusive pixel bounds `[x0, y0, x1, y1]` of the binning ellipse.
    pub bounds: [i64; 4],
    p_cam: Vec3,
    jac: Matrix2x3<f64>,
    cov_cam: Mat3,
    rot: Mat3,
    scale: Vec3,
}

/// Projects every Gaussian in front of the near plane; the rest are culled.
pub(crate) fn project(gaussians: &[Gaussian], camera: &Camera, cfg: &RenderConfig) -> Result<Vec<Splat>> {
    let mut out = Vec::with_capacity(gaussians.len());
    for (index, g) in gaussians.iter().enumerate() {
        g.check_finite(index)?;
        let p_cam = camera.to_camera(&g.position);
        if p_cam.z <= cfg.near {
            continue;
        }
        let (x, y, z) = (p_cam.x, p_cam.y, p_cam.z);
        let jac = Matrix2x3::new(
            camera.fx / z,
            0.0,
            -camera.fx * x / (z * z),
            0.0,
            camera.fy / z,
            -camera.fy * y / (z * z),
        );
        let rot = g.rotation_matrix();
        let scale = g.scale();
        let m = rot * Mat3::from_diagonal(&scale);
        let cov_world = m * m.transpose();
        let cov_cam = camera.rotation * cov_world * camera.rotation.transpose();
        let cov2 = jac * cov_cam * jac.transpose() + Matrix2::identity() * cfg.lowpass;
        let det = cov2[(0, 0)] * cov2[(1, 1)] - cov2[(0, 1)] * cov2[(1, 0)];
        if !(det > 0.0) {
            continue;
        }
        let conic = [cov2[(1, 1)] / det, -cov2[(0, 1)] / det, cov2[(0, 0)] / det];
        let mean = Vec2::new(camera.fx * x / z + camera.cx, camera.fy * y / z + camera.cy);
        let opacity = g.opacity();

        // Binning extent: the ellipse on which opacity * G falls to the
        // support threshold.
        let ratio = opacity / cfg.support_alpha;
        if ratio <= 1.0 {
            continue;
        }
        let m2 = 2.0 * ratio.ln();
        let hx = (m2 * cov2[(0, 0)]).sqrt();
        let hy = (m2 * cov2[(1, 1)]).sqrt();
        let bounds = [
            (mean.x - hx).ceil() as i64,
            (mean.y - hy).ceil() as i64,
            (mean.x + hx).floor() as i64,
            (mean.y + hy).floor() as i64,
        ];
        if bounds[2] < 0 || bounds[3] < 0 || bounds[0] >= camera.width as i64 || bounds[1] >= camera.height as i64 {
            continue;
        }
        if bounds[0] > bounds[2] || bounds[1] > bounds[3] {
            continue;
        }
        out.push(Splat {
            index,
            depth: z,
            mean,
            conic,
            opacity,
            color: g.color,
            bounds,
            p_cam,
            jac,
            cov_cam,
            rot,
            scale,
        });
    }
    // Front to back; equal depths keep input order.
    out.sort_by(|a, b| a.depth.total_cmp(&b.depth).then(a.index.cmp(&b.index)));
    Ok(out)
}

/// Screen-space partials accumulated during the backward raster pass.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct SplatGrad {
    pub color: Vec3,
    pub opacity_logit: f64,
    pub mean: Vec2,
    /// With respect to `[a, b, c]` of the conic as independent scalars.
    pub conic: [f64; 3],
}

impl SplatGrad {
    pub fn add(&mut self, other: &SplatGrad) {
        self.color += other.color;
        self.opacity_logit += other.opacity_logit;
        self.mean += other.mean;
        for k in 0..3 {
            self.conic[k] += other.conic[k];
        }
    }
}

/// Chains screen-space partials back to the Gaussian parameters.
pub(crate) fn chain_to_gaussian(s: &Splat, sg: &SplatGrad, g: &Gaussian, camera: &Camera) -> GaussianGrad {
    let conic = Matrix2::new(s.conic[0], s.conic[1], s.conic[1], s.conic[2]);
    // q = d^T A d with the off-diagonal counted twice.
    let grad_conic = Matrix2::new(sg.conic[0], 0.5 * sg.conic[1], 0.5 * sg.conic[1], sg.conic[2]);
    let grad_cov2 = -(conic * grad_conic * conic);

    let grad_cov_cam = s.jac.transpose() * grad_cov2 * s.jac;
    let grad_jac = 2.0 * grad_cov2 * s.jac * s.cov_cam;

    let (x, y, z) = (s.p_cam.x, s.p_cam.y, s.p_cam.z);
    let (fx, fy) = (camera.fx, camera.fy);
    let z2 = z * z;
    let z3 = z2 * z;
    let mut grad_p = Vec3::new(
        sg.mean.x * fx / z,
        sg.mean.y * fy / z,
        -sg.mean.x * fx * x / z2 - sg.mean.y * fy * y / z2,
    );
    grad_p.x += grad_jac[(0, 2)] * (-fx / z2);
    grad_p.y += grad_jac[(1, 2)] * (-fy / z2);
    grad_p.z += grad_jac[(0, 0)] * (-fx / z2)
        + grad_jac[(0, 2)] * (2.0 * fx * x / z3)
        + grad_jac[(1, 1)] * (-fy / z2)
        + grad_jac[(1, 2)] * (2.0 * fy * y / z3);
    let position = camera.rotation.transpose() * grad_p;

    let grad_cov_world = camera.rotation.transpose() * grad_cov_cam * camera.rotation;
    let m = s.rot * Mat3::from_diagonal(&s.scale);
    let grad_m = 2.0 * grad_cov_world * m;
    let mut log_scale = Vec3::zeros();
    let mut grad_rot = Mat3::zeros();
    for j in 0..3 {
        let mut ds = 0.0;
        for i in 0..3 {
            ds += grad_m[(i, j)] * s.rot[(i, j)];
            grad_rot[(i, j)] = grad_m[(i, j)] * s.scale[j];
        }
        log_scale[j] = ds * s.scale[j];
    }

    GaussianGrad {
        position,
        log_scale,
        rotation: quaternion_tangent_grad(g.rotation, &grad_rot),
        opacity_logit: sg.opacity_logit,
        color: sg.color,
    }
}

/// Gradient of `R(q)` contracted with `grad_r`, projected orthogonal to `q`.
fn quaternion_tangent_grad(q: [f64; 4], gr: &Mat3) -> [f64; 4] {
    let [w, x, y, z] = q;
    let g = |i: usize, j: usize| gr[(i, j)];
    let dw = 2.0 * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) + x * g(2, 1));
    let dx = 2.0 * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2.0 * x * g(1, 1) - w * g(1, 2) + z * g(2, 0)
        + w * g(2, 1)
        - 2.0 * x * g(2, 2));
    let dy = 2.0 * (-2.0 * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2) - w * g(2, 0)
        + z * g(2, 1)
        - 2.0 * y * g(2, 2));
    let dz = 2.0 * (-2.0 * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) - 2.0 * z * g(1, 1)
        + y * g(1, 2)
        + x * g(2, 0)
        + y * g(2, 1));
    let full = [dw, dx, dy, dz];
    let dot: f64 = full.iter().zip(&q).map(|(a, b)| a * b).sum();
    [full[0] - dot * w, full[1] - dot * x, full[2] - dot * y, full[3] - dot * z]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::quaternion_to_matrix;

    #[test]
    fn quaternion_gradient_matches_finite_differences() {
        let q = {
            let raw = [0.4, -0.3, 0.7, 0.2];
            let n = raw.iter().map(|v: &f64| v * v).sum::<f64>().sqrt();
            [raw[0] / n, raw[1] / n, raw[2] / n, raw[3] / n]
        };
        let weights = Mat3::new(0.3, -1.2, 0.5, 0.9, 0.1, -0.4, -0.7, 0.6, 1.1);
        let f = |q: [f64; 4]| {
            let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
            let r = quaternion_to_matrix([q[0] / n, q[1] / n, q[2] / n, q[3] / n]);
            r.component_mul(&weights).sum()
        };
        let analytic = quaternion_tangent_grad(q, &weights);
        let h = 1e-6;
        for k in 0..4 {
            let mut qp = q;
            let mut qm = q;
            qp[k] += h;
            qm[k] -= h;
            let numeric = (f(qp) - f(qm)) / (2.0 * h);
            assert!((numeric - analytic[k]).abs() < 1e-7, "k={k} {numeric} vs {}", analytic[k]);
        }
    }
}
