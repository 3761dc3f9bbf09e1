//! Reference implementations used by the test suites: a per-pixel
//! brute-force splatting evaluator, a finite-difference harness and an
//! exhaustive DBSCAN closure.

use std::collections::BTreeSet;

use nalgebra::{Matrix2, Matrix2x3};

use crate::renderer::{Camera, Intrinsics, RenderConfig};
use crate::rng::SeededRng;
use crate::scene::Gaussian;
use crate::Vec3;

/// Sampling ranges for [`random_scene`].
#[derive(Debug, Clone, Copy)]
pub struct SceneSpec {
    pub count: usize,
    pub width: usize,
    pub height: usize,
    /// Gaussians lie within this radius of the origin.
    pub spread: f64,
    pub scale: (f64, f64),
    pub opacity_logit: (f64, f64),
}

impl SceneSpec {
    pub fn new(count: usize, width: usize, height: usize) -> Self {
        Self {
            count,
            width,
            height,
            spread: 0.7,
            scale: (0.03, 0.15),
            opacity_logit: (-2.0, 2.0),
        }
    }
}

/// Seeded Gaussians around the origin, a background colour and a camera on
/// a sphere of radius 3 looking at the origin.
pub fn random_scene(seed: u64, spec: &SceneSpec) -> (Vec<Gaussian>, Vec3, Camera) {
    let mut rng = SeededRng::new(seed);
    let gaussians = (0..spec.count)
        .map(|_| {
            let position = Vec3::new(
                rng.uniform(-spec.spread, spec.spread),
                rng.uniform(-spec.spread, spec.spread),
                rng.uniform(-spec.spread, spec.spread),
            );
            let log_scale = Vec3::new(
                rng.uniform(spec.scale.0, spec.scale.1).ln(),
                rng.uniform(spec.scale.0, spec.scale.1).ln(),
                rng.uniform(spec.scale.0, spec.scale.1).ln(),
            );
            let rotation = [rng.normal(), rng.normal(), rng.normal(), rng.normal()];
            let opacity = rng.uniform(spec.opacity_logit.0, spec.opacity_logit.1);
            let color = Vec3::new(rng.next_f64(), rng.next_f64(), rng.next_f64());
            Gaussian::new(position, log_scale, rotation, opacity, color)
        })
        .collect();
    let background = Vec3::new(rng.next_f64(), rng.next_f64(), rng.next_f64());
    let azimuth = rng.uniform(0.0, std::f64::consts::TAU);
    let elevation = rng.uniform(-1.0, 1.0);
    let eye = Vec3::new(
        3.0 * elevation.cos() * azimuth.cos(),
        3.0 * elevation.cos() * azimuth.sin(),
        3.0 * elevation.sin(),
    );
    let intr = Intrinsics::centered(1.2 * spec.width as f64, spec.width, spec.height);
    let camera = Camera::look_at(eye, Vec3::zeros(), Vec3::z(), intr, spec.width, spec.height)
        .expect("elevation below 60 degrees keeps the view off the up axis");
    (gaussians, background, camera)
}

/// Evaluates the compositing sum at every pixel over every Gaussian, without
/// tiles, bounds or early termination. Returns interleaved rgb and alpha.
pub fn brute_force_render(
    gaussians: &[Gaussian],
    background: Vec3,
    camera: &Camera,
    cfg: &RenderConfig,
) -> (Vec<f64>, Vec<f64>) {
    struct P {
        depth: f64,
        index: usize,
        u: f64,
        v: f64,
        inv: Matrix2<f64>,
        opacity: f64,
        color: Vec3,
    }
    let mut ps = Vec::new();
    for (index, g) in gaussians.iter().enumerate() {
        let pc = camera.rotation * g.position + camera.translation;
        if pc.z <= cfg.near {
            continue;
        }
        let jac = Matrix2x3::new(
            camera.fx / pc.z,
            0.0,
            -camera.fx * pc.x / (pc.z * pc.z),
            0.0,
            camera.fy / pc.z,
            -camera.fy * pc.y / (pc.z * pc.z),
        );
        let cov = jac * camera.rotation * g.covariance() * camera.rotation.transpose() * jac.transpose()
            + Matrix2::identity() * cfg.lowpass;
        let Some(inv) = cov.try_inverse() else { continue };
        ps.push(P {
            depth: pc.z,
            index,
            u: camera.fx * pc.x / pc.z + camera.cx,
            v: camera.fy * pc.y / pc.z + camera.cy,
            inv,
            opacity: 1.0 / (1.0 + (-g.opacity_logit).exp()),
            color: g.color,
        });
    }
    ps.sort_by(|a, b| a.depth.partial_cmp(&b.depth).unwrap().then(a.index.cmp(&b.index)));

    let (w, h) = (camera.width, camera.height);
    let mut rgb = vec![0.0; w * h * 3];
    let mut alpha = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut c = Vec3::zeros();
            let mut t = 1.0;
            for p in &ps {
                let d = nalgebra::Vector2::new(x as f64 - p.u, y as f64 - p.v);
                let a = (p.opacity * (-0.5 * d.dot(&(p.inv * d))).exp()).min(cfg.alpha_clamp);
                c += p.color * (a * t);
                t *= 1.0 - a;
            }
            c += background * t;
            let i = y * w + x;
            rgb[3 * i..3 * i + 3].copy_from_slice(c.as_slice());
            alpha[i] = 1.0 - t;
        }
    }
    (rgb, alpha)
}

/// Central difference of `f` at `x` along coordinate `k`.
pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], k: usize, h: f64) -> f64 {
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    xp[k] += h;
    xm[k] -= h;
    (f(&xp) - f(&xm)) / (2.0 * h)
}

/// `|a - b| <= max(rel * max(|a|, |b|), abs)`.
pub fn close(a: f64, b: f64, rel: f64, abs: f64) -> bool {
    (a - b).abs() <= (rel * a.abs().max(b.abs())).max(abs)
}

/// DBSCAN by explicit closure: clusters are the connected components of the
/// core-core neighbour graph, computed by repeated relaxation; border points
/// join the admissible cluster containing the smallest core index.
pub fn dbscan_closure(points: &[Vec3], eps: f64, min_pts: usize) -> (Vec<BTreeSet<usize>>, BTreeSet<usize>) {
    let n = points.len();
    let near = |i: usize, j: usize| (points[i] - points[j]).norm_squared() <= eps * eps;
    let core: Vec<bool> = (0..n).map(|i| (0..n).filter(|&j| near(i, j)).count() >= min_pts).collect();

    // Component label = smallest core index reachable.
    let mut label: Vec<usize> = (0..n).collect();
    loop {
        let mut changed = false;
        for i in 0..n {
            for j in 0..n {
                if core[i] && core[j] && near(i, j) && label[j] < label[i] {
                    label[i] = label[j];
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }

    let mut clusters: std::collections::BTreeMap<usize, BTreeSet<usize>> = Default::default();
    let mut noise = BTreeSet::new();
    for i in 0..n {
        if core[i] {
            clusters.entry(label[i]).or_default().insert(i);
        }
    }
    for i in 0..n {
        if core[i] {
            continue;
        }
        let best = (0..n).filter(|&j| core[j] && near(i, j)).map(|j| label[j]).min();
        match best {
            Some(l) => {
                clusters.get_mut(&l).unwrap().insert(i);
            }
            None => {
                noise.insert(i);
            }
        }
    }
    let mut out: Vec<BTreeSet<usize>> = clusters.into_values().collect();
    out.sort_by_key(|c| *c.iter().next().unwrap());
    (out, noise)
}
