//! Differentiable tile-based Gaussian splatting, normal-map rasterization
//! and camera rigs.

mod camera;
mod normal_map;
mod rig;
mod splat;

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::image::{ImageBuffer, ImageRole};
use crate::scene::{CrowdScene, Gaussian, PersonId};
use crate::{Error, Result, Vec3};

pub use camera::{Camera, CameraRecord, Intrinsics};
pub use normal_map::{encode_normal, render_normal_map};
pub use rig::{hemisphere_rig, orbit_rig, CameraRig, RigKind, RigRecord, HEMISPHERE_MAX_ELEVATION_DEG};

use splat::{Splat, SplatGrad};

pub const DEFAULT_RESOLUTION: usize = 512;
pub const DEFAULT_FOCAL: f64 = 500.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderConfig {
    /// Upper bound on per-splat alpha.
    pub alpha_clamp: f64,
    /// Compositing stops once transmittance drops below this. Colors lie in
    /// `[0, 1]`, so the dropped tail changes a pixel by less than this value.
    pub min_transmittance: f64,
    /// Added to the diagonal of every 2D covariance, in px².
    pub lowpass: f64,
    pub tile_size: usize,
    /// Gaussians with camera depth at or below this are culled.
    pub near: f64,
    /// Alpha level whose contour bounds a splat for tile binning.
    pub support_alpha: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            alpha_clamp: 0.999,
            min_transmittance: 1e-5,
            lowpass: 0.3,
            tile_size: 16,
            near: 0.01,
            support_alpha: 1e-12,
        }
    }
}

impl RenderConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.alpha_clamp > 0.0
            && self.alpha_clamp < 1.0
            && self.min_transmittance >= 0.0
            && self.min_transmittance < 1.0
            && self.lowpass >= 0.0
            && self.tile_size > 0
            && self.near >= 0.0
            && self.support_alpha > 0.0
            && self.support_alpha < 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid render config {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderOutput {
    pub rgb: ImageBuffer,
    pub alpha: ImageBuffer,
    /// Number of splats composited at each pixel, row-major.
    pub contributing_count: Vec<u32>,
}

/// Partials of a scalar loss with respect to one Gaussian.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct GaussianGrad {
    pub position: Vec3,
    pub log_scale: Vec3,
    /// Tangent-space gradient, orthogonal to the unit quaternion.
    pub rotation: [f64; 4],
    pub opacity_logit: f64,
    pub color: Vec3,
}

impl GaussianGrad {
    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite())
            && self.log_scale.iter().all(|v| v.is_finite())
            && self.rotation.iter().all(|v| v.is_finite())
            && self.opacity_logit.is_finite()
            && self.color.iter().all(|v| v.is_finite())
    }

    pub fn is_zero(&self) -> bool {
        *self == GaussianGrad::default()
    }

    pub fn add_assign(&mut self, other: &GaussianGrad) {
        self.position += other.position;
        self.log_scale += other.log_scale;
        for k in 0..4 {
            self.rotation[k] += other.rotation[k];
        }
        self.opacity_logit += other.opacity_logit;
        self.color += other.color;
    }
}

/// Gradients for every Gaussian of a scene, in scene order.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneGradients {
    pub gaussians: Vec<GaussianGrad>,
    /// Slice of `gaussians` owned by each person.
    pub persons: Vec<(PersonId, Range<usize>)>,
}

impl SceneGradients {
    pub fn zeros_like(scene: &CrowdScene) -> Self {
        let mut persons = Vec::with_capacity(scene.persons.len());
        let mut start = 0;
        for p in &scene.persons {
            persons.push((p.person_id, start..start + p.gaussians.len()));
            start += p.gaussians.len();
        }
        Self {
            gaussians: vec![GaussianGrad::default(); start],
            persons,
        }
    }

    pub fn person(&self, id: PersonId) -> Option<&[GaussianGrad]> {
        self.persons
            .iter()
            .find(|(p, _)| *p == id)
            .map(|(_, r)| &self.gaussians[r.clone()])
    }

    pub fn is_finite(&self) -> bool {
        self.gaussians.iter().all(GaussianGrad::is_finite)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Renderer {
    pub config: RenderConfig,
}

struct Binning {
    splats: Vec<Splat>,
    tiles_x: usize,
    tiles_y: usize,
    /// Per tile, positions into `splats` in front-to-back order.
    lists: Vec<Vec<u32>>,
}

/// Per-pixel record of one composited splat, kept for the reverse sweep.
#[derive(Clone, Copy)]
struct Hit {
    splat: u32,
    alpha: f64,
    transmittance: f64,
    clamped: bool,
    dx: f64,
    dy: f64,
}

impl Renderer {
    pub fn new(config: RenderConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn render(&self, scene: &CrowdScene, camera: &Camera) -> Result<RenderOutput> {
        self.render_gaussians(&scene.world_gaussians(), scene.background, camera)
    }

    pub fn render_backward(&self, scene: &CrowdScene, camera: &Camera, loss_grad: &ImageBuffer) -> Result<SceneGradients> {
        let flat = self.backward_gaussians(&scene.world_gaussians(), scene.background, camera, loss_grad)?;
        let mut out = SceneGradients::zeros_like(scene);
        out.gaussians = flat;
        Ok(out)
    }

    fn bin(&self, gaussians: &[Gaussian], camera: &Camera) -> Result<Binning> {
        let ts = self.config.tile_size;
        let tiles_x = camera.width.div_ceil(ts);
        let tiles_y = camera.height.div_ceil(ts);
        let splats = splat::project(gaussians, camera, &self.config)?;
        let mut lists = vec![Vec::new(); tiles_x * tiles_y];
        let (w, h) = (camera.width as i64, camera.height as i64);
        for (k, s) in splats.iter().enumerate() {
            let x0 = s.bounds[0].clamp(0, w - 1) as usize / ts;
            let y0 = s.bounds[1].clamp(0, h - 1) as usize / ts;
            let x1 = s.bounds[2].clamp(0, w - 1) as usize / ts;
            let y1 = s.bounds[3].clamp(0, h - 1) as usize / ts;
            for ty in y0..=y1 {
                for tx in x0..=x1 {
                    lists[ty * tiles_x + tx].push(k as u32);
                }
            }
        }
        Ok(Binning {
            splats,
            tiles_x,
            tiles_y,
            lists,
        })
    }

    fn tile_pixels(&self, camera: &Camera, tile: usize, tiles_x: usize) -> (Range<usize>, Range<usize>) {
        let ts = self.config.tile_size;
        let (tx, ty) = (tile % tiles_x, tile / tiles_x);
        (
            tx * ts..((tx + 1) * ts).min(camera.width),
            ty * ts..((ty + 1) * ts).min(camera.height),
        )
    }

    /// Front-to-back compositing of one pixel. Returns the accumulated colour
    /// and final transmittance; `hits` receives every composited splat.
    fn composite(&self, bin: &Binning, list: &[u32], px: f64, py: f64, mut hits: Option<&mut Vec<Hit>>) -> (Vec3, f64) {
        let cfg = &self.config;
        let mut color = Vec3::zeros();
        let mut t = 1.0;
        for &k in list {
            let s = &bin.splats[k as usize];
            let dx = px - s.mean.x;
            let dy = py - s.mean.y;
            let power = -0.5 * (s.conic[0] * dx * dx + 2.0 * s.conic[1] * dx * dy + s.conic[2] * dy * dy);
            let raw = s.opacity * power.exp();
            let clamped = raw > cfg.alpha_clamp;
            let alpha = if clamped { cfg.alpha_clamp } else { raw };
            if let Some(h) = hits.as_deref_mut() {
                h.push(Hit {
                    splat: k,
                    alpha,
                    transmittance: t,
                    clamped,
                    dx,
                    dy,
                });
            }
            color += s.color * (alpha * t);
            t *= 1.0 - alpha;
            if t < cfg.min_transmittance {
                break;
            }
        }
        (color, t)
    }

    pub fn render_gaussians(&self, gaussians: &[Gaussian], background: Vec3, camera: &Camera) -> Result<RenderOutput> {
        let bin = self.bin(gaussians, camera)?;
        let (w, h) = (camera.width, camera.height);
        let tiles: Vec<_> = (0..bin.tiles_x * bin.tiles_y)
            .into_par_iter()
            .map(|tile| {
                let (xs, ys) = self.tile_pixels(camera, tile, bin.tiles_x);
                let list = &bin.lists[tile];
                let mut hits = Vec::new();
                let mut out = Vec::with_capacity(xs.len() * ys.len());
                for y in ys.clone() {
                    for x in xs.clone() {
                        hits.clear();
                        let (c, t) = self.composite(&bin, list, x as f64, y as f64, Some(&mut hits));
                        out.push((c + background * t, 1.0 - t, hits.len() as u32));
                    }
                }
                (xs, ys, out)
            })
            .collect();

        let mut rgb = vec![0.0; w * h * 3];
        let mut alpha = vec![0.0; w * h];
        let mut count = vec![0u32; w * h];
        for (xs, ys, out) in tiles {
            let mut it = out.into_iter();
            for y in ys {
                for x in xs.clone() {
                    let (c, a, n) = it.next().expect("tile pixel count");
                    let p = y * w + x;
                    rgb[3 * p..3 * p + 3].copy_from_slice(c.as_slice());
                    alpha[p] = a;
                    count[p] = n;
                }
            }
        }
        Ok(RenderOutput {
            rgb: ImageBuffer::from_data(w, h, 3, ImageRole::Rgb, rgb)?,
            alpha: ImageBuffer::from_data(w, h, 1, ImageRole::Alpha, alpha)?,
            contributing_count: count,
        })
    }

    /// Gradients of `sum(loss_grad * rgb)` for each Gaussian of the slice.
    pub fn backward_gaussians(
        &self,
        gaussians: &[Gaussian],
        background: Vec3,
        camera: &Camera,
        loss_grad: &ImageBuffer,
    ) -> Result<Vec<GaussianGrad>> {
        if loss_grad.width() != camera.width || loss_grad.height() != camera.height || loss_grad.channels() != 3 {
            return Err(Error::Dimension(format!(
                "loss gradient is {}x{}x{}, render is {}x{}x3",
                loss_grad.width(),
                loss_grad.height(),
                loss_grad.channels(),
                camera.width,
                camera.height
            )));
        }
        let bin = self.bin(gaussians, camera)?;
        let w = camera.width;
        let grads = loss_grad.data();

        let partials: Vec<Vec<(u32, SplatGrad)>> = (0..bin.tiles_x * bin.tiles_y)
            .into_par_iter()
            .map(|tile| {
                let (xs, ys) = self.tile_pixels(camera, tile, bin.tiles_x);
                let list = &bin.lists[tile];
                let mut acc = vec![SplatGrad::default(); list.len()];
                let mut slot = std::collections::HashMap::with_capacity(list.len());
                for (i, &k) in list.iter().enumerate() {
                    slot.insert(k, i);
                }
                let mut hits = Vec::new();
                for y in ys {
                    for x in xs.clone() {
                        let p = y * w + x;
                        let g = Vec3::new(grads[3 * p], grads[3 * p + 1], grads[3 * p + 2]);
                        if g == Vec3::zeros() {
                            continue;
                        }
                        hits.clear();
                        let (_, t_final) = self.composite(&bin, list, x as f64, y as f64, Some(&mut hits));
                        let mut behind = t_final * g.dot(&background);
                        for hit in hits.iter().rev() {
                            let s = &bin.splats[hit.splat as usize];
                            let gc = g.dot(&s.color);
                            let entry = &mut acc[slot[&hit.splat]];
                            entry.color += g * (hit.alpha * hit.transmittance);
                            if !hit.clamped {
                                let d_alpha = hit.transmittance * gc - behind / (1.0 - hit.alpha);
                                // alpha = opacity * exp(power)
                                let gauss = hit.alpha / s.opacity;
                                entry.opacity_logit += d_alpha * s.opacity * (1.0 - s.opacity) * gauss;
                                let d_power = d_alpha * hit.alpha;
                                let (dx, dy) = (hit.dx, hit.dy);
                                entry.conic[0] += d_power * (-0.5 * dx * dx);
                                entry.conic[1] += d_power * (-dx * dy);
                                entry.conic[2] += d_power * (-0.5 * dy * dy);
                                entry.mean.x += d_power * (s.conic[0] * dx + s.conic[1] * dy);
                                entry.mean.y += d_power * (s.conic[1] * dx + s.conic[2] * dy);
                            }
                            behind += gc * hit.alpha * hit.transmittance;
                        }
                    }
                }
                list.iter().copied().zip(acc).collect()
            })
            .collect();

        let mut per_splat = vec![SplatGrad::default(); bin.splats.len()];
        for tile in &partials {
            for (k, sg) in tile {
                per_splat[*k as usize].add(sg);
            }
        }
        let chained: Vec<(usize, GaussianGrad)> = bin
            .splats
            .par_iter()
            .zip(per_splat.par_iter())
            .map(|(s, sg)| (s.index, splat::chain_to_gaussian(s, sg, &gaussians[s.index], camera)))
            .collect();
        let mut out = vec![GaussianGrad::default(); gaussians.len()];
        for (i, g) in chained {
            out[i] = g;
        }
        Ok(out)
    }
}

/// Renders with the default configuration.
pub fn render(scene: &CrowdScene, camera: &Camera) -> Result<RenderOutput> {
    Renderer::default().render(scene, camera)
}

/// Backward pass with the default configuration.
pub fn render_backward(scene: &CrowdScene, camera: &Camera, loss_grad: &ImageBuffer) -> Result<SceneGradients> {
    Renderer::default().render_backward(scene, camera, loss_grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{brute_force_render, close, random_scene, SceneSpec};
    use crate::rng::SeededRng;
    use crate::scene::{assemble_scene, logit, PersonGaussians};
    use crate::Mat3;

    fn axis_camera(w: usize, h: usize, focal: f64) -> Camera {
        Camera::new(Intrinsics::centered(focal, w, h), Mat3::identity(), Vec3::zeros(), w, h).unwrap()
    }

    fn iso(position: Vec3, sigma: f64, opacity_logit: f64, color: Vec3) -> Gaussian {
        Gaussian::new(position, Vec3::repeat(sigma.ln()), [1.0, 0.0, 0.0, 0.0], opacity_logit, color)
    }

    fn pack(g: &Gaussian) -> Vec<f64> {
        let mut v = Vec::with_capacity(14);
        v.extend(g.position.iter());
        v.extend(g.log_scale.iter());
        v.extend(g.rotation);
        v.push(g.opacity_logit);
        v.extend(g.color.iter());
        v
    }

    fn unpack(v: &[f64]) -> Gaussian {
        Gaussian::new(
            Vec3::new(v[0], v[1], v[2]),
            Vec3::new(v[3], v[4], v[5]),
            [v[6], v[7], v[8], v[9]],
            v[10],
            Vec3::new(v[11], v[12], v[13]),
        )
    }

    fn grad_vec(g: &GaussianGrad) -> Vec<f64> {
        let mut v = Vec::with_capacity(14);
        v.extend(g.position.iter());
        v.extend(g.log_scale.iter());
        v.extend(g.rotation);
        v.push(g.opacity_logit);
        v.extend(g.color.iter());
        v
    }

    #[test]
    fn empty_scene_is_background() {
        let scene = CrowdScene {
            persons: vec![],
            background: Vec3::new(0.1, 0.2, 0.3),
        };
        let out = render(&scene, &axis_camera(20, 10, 20.0)).unwrap();
        assert!(out.rgb.data().chunks(3).all(|p| p == [0.1, 0.2, 0.3]));
        assert!(out.alpha.data().iter().all(|a| *a == 0.0));
        assert!(out.contributing_count.iter().all(|c| *c == 0));
    }

    #[test]
    fn single_gaussian_closed_form() {
        let (w, h, f) = (33, 33, 40.0);
        let cam = axis_camera(w, h, f);
        let (z, sigma) = (2.0, 0.1);
        let color = Vec3::new(0.9, 0.4, 0.1);
        let bg = Vec3::new(0.2, 0.2, 0.6);
        let g = iso(Vec3::new(0.0, 0.0, z), sigma, 50.0, color);
        let out = Renderer::default().render_gaussians(&[g], bg, &cam).unwrap();
        // Screen-space variance: (f sigma / z)^2 plus the low-pass floor.
        let var = (f * sigma / z).powi(2) + 0.3;
        for (x, y) in [(16usize, 16usize), (17, 16), (19, 18), (22, 16), (16, 11)] {
            let d2 = (x as f64 - 16.5).powi(2) + (y as f64 - 16.5).powi(2);
            let a = (g.opacity() * (-0.5 * d2 / var).exp()).min(0.999);
            let expected = color * a + bg * (1.0 - a);
            for c in 0..3 {
                assert!((out.rgb.get(x, y, c) - expected[c]).abs() < 1e-12, "({x},{y})");
            }
        }
        // Pixel centres are integer coordinates; centre the Gaussian on one.
        let cam = Camera::new(Intrinsics { fx: f, fy: f, cx: 16.0, cy: 16.0 }, Mat3::identity(), Vec3::zeros(), w, h).unwrap();
        let peak = Renderer::default().render_gaussians(&[g], bg, &cam).unwrap();
        let expected = color * 0.999 + bg * 0.001;
        for c in 0..3 {
            assert!((peak.rgb.get(16, 16, c) - expected[c]).abs() < 1e-12);
        }
    }

    #[test]
    fn opaque_front_gaussian_hides_back_one() {
        let cam = axis_camera(32, 32, 40.0);
        let front = iso(Vec3::new(0.0, 0.0, 2.0), 0.3, 50.0, Vec3::new(1.0, 0.0, 0.0));
        let back = iso(Vec3::new(0.0, 0.0, 3.0), 0.3, 50.0, Vec3::new(0.0, 1.0, 0.0));
        let out = Renderer::default().render_gaussians(&[back, front], Vec3::zeros(), &cam).unwrap();
        // At the centre both clamp to 0.999: green sees transmittance 0.001.
        assert!(out.rgb.get(16, 16, 1) <= 0.001 + 1e-12);
        assert!((out.rgb.get(16, 16, 0) - 0.999).abs() < 1e-12);
    }

    #[test]
    fn zero_loss_gradient_gives_zero() {
        let (gs, bg, cam) = random_scene(3, &SceneSpec::new(15, 32, 32));
        let zero = ImageBuffer::filled(32, 32, 3, ImageRole::Rgb, 0.0);
        let grads = Renderer::default().backward_gaussians(&gs, bg, &cam, &zero).unwrap();
        assert!(grads.iter().all(GaussianGrad::is_zero));
        let bad = ImageBuffer::filled(31, 32, 3, ImageRole::Rgb, 0.0);
        assert!(Renderer::default().backward_gaussians(&gs, bg, &cam, &bad).is_err());
    }

    #[test]
    fn color_gradient_of_sum_is_weighted_alpha() {
        let cam = axis_camera(32, 32, 40.0);
        let g = iso(Vec3::new(0.05, -0.03, 2.0), 0.15, 0.4, Vec3::new(0.3, 0.5, 0.7));
        let r = Renderer::default();
        let ones = ImageBuffer::filled(32, 32, 3, ImageRole::Rgb, 1.0);
        let grad = r.backward_gaussians(&[g], Vec3::zeros(), &cam, &ones).unwrap()[0];
        // With a black background and one splat, rgb = colour * alpha.
        let alpha_sum: f64 = r.render_gaussians(&[g], Vec3::zeros(), &cam).unwrap().alpha.data().iter().sum();
        for c in 0..3 {
            assert!((grad.color[c] - alpha_sum).abs() < 1e-9 * alpha_sum);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let spec = SceneSpec {
            opacity_logit: (-3.0, 1.0),
            ..SceneSpec::new(10, 32, 32)
        };
        let r = Renderer::default();
        for seed in 0..4 {
            let (gs, bg, cam) = random_scene(seed, &spec);
            let mut rng = SeededRng::new(1000 + seed);
            let weights: Vec<f64> = (0..32 * 32 * 3).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let lg = ImageBuffer::from_data(32, 32, 3, ImageRole::Rgb, weights.clone()).unwrap();
            let analytic = r.backward_gaussians(&gs, bg, &cam, &lg).unwrap();
            for i in 0..gs.len() {
                let base = pack(&gs[i]);
                let an = grad_vec(&analytic[i]);
                for k in 0..14 {
                    let f = |v: &[f64]| {
                        let mut scene = gs.clone();
                        scene[i] = unpack(v);
                        let out = r.render_gaussians(&scene, bg, &cam).unwrap();
                        out.rgb.data().iter().zip(&weights).map(|(a, b)| a * b).sum::<f64>()
                    };
                    let fd = crate::oracle::central_difference(f, &base, k, 1e-4);
                    assert!(close(an[k], fd, 1e-3, 1e-6), "seed {seed} gaussian {i} coord {k}: {} vs {fd}", an[k]);
                }
            }
        }
    }

    #[test]
    fn tiled_matches_brute_force() {
        let r = Renderer::default();
        for seed in 0..5 {
            let (gs, bg, cam) = random_scene(seed, &SceneSpec::new(120, 48, 40));
            let out = r.render_gaussians(&gs, bg, &cam).unwrap();
            let (rgb, alpha) = brute_force_render(&gs, bg, &cam, &r.config);
            let err = out.rgb.data().iter().zip(&rgb).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let aerr = out.alpha.data().iter().zip(&alpha).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err <= 1e-5 && aerr <= 1e-5, "seed {seed}: {err} {aerr}");
        }
    }

    #[test]
    fn early_termination_error_is_bounded_by_threshold() {
        let spec = SceneSpec {
            opacity_logit: (1.0, 4.0),
            ..SceneSpec::new(200, 32, 32)
        };
        for min_transmittance in [1e-3, 1e-4, 1e-5] {
            let r = Renderer::new(RenderConfig {
                min_transmittance,
                ..RenderConfig::default()
            })
            .unwrap();
            for seed in 0..3 {
                let (gs, bg, cam) = random_scene(seed, &spec);
                let out = r.render_gaussians(&gs, bg, &cam).unwrap();
                let (rgb, _) = brute_force_render(&gs, bg, &cam, &r.config);
                let err = out.rgb.data().iter().zip(&rgb).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                assert!(err < min_transmittance, "threshold {min_transmittance}: {err}");
            }
        }
    }

    #[test]
    fn outputs_stay_in_range() {
        let (gs, bg, cam) = random_scene(9, &SceneSpec::new(80, 32, 32));
        let out = Renderer::default().render_gaussians(&gs, bg, &cam).unwrap();
        assert!(out.rgb.data().iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(out.alpha.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn rigid_motion_of_scene_and_camera_is_invisible() {
        let (gs, bg, cam) = random_scene(4, &SceneSpec::new(60, 32, 32));
        let rot = nalgebra::Rotation3::from_euler_angles(0.3, -0.7, 1.1).into_inner();
        let shift = Vec3::new(0.4, -1.2, 2.0);
        let moved: Vec<Gaussian> = gs
            .iter()
            .map(|g| {
                let r = nalgebra::UnitQuaternion::from_matrix(&(rot * g.rotation_matrix()));
                Gaussian::new(rot * g.position + shift, g.log_scale, [r.w, r.i, r.j, r.k], g.opacity_logit, g.color)
            })
            .collect();
        let cam2 = Camera::new(
            cam.intrinsics(),
            cam.rotation * rot.transpose(),
            cam.translation - cam.rotation * rot.transpose() * shift,
            cam.width,
            cam.height,
        )
        .unwrap();
        let r = Renderer::default();
        let a = r.render_gaussians(&gs, bg, &cam).unwrap();
        let b = r.render_gaussians(&moved, bg, &cam2).unwrap();
        let err = a.rgb.data().iter().zip(b.rgb.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(err < 1e-5, "{err}");
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let (gs, bg, cam) = random_scene(5, &SceneSpec::new(100, 48, 48));
        let lg = ImageBuffer::filled(48, 48, 3, ImageRole::Rgb, 0.25);
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| {
                let r = Renderer::default();
                (r.render_gaussians(&gs, bg, &cam).unwrap(), r.backward_gaussians(&gs, bg, &cam, &lg).unwrap())
            })
        };
        let (a, ga) = run(1);
        let (b, gb) = run(4);
        assert_eq!(a, b);
        assert_eq!(ga, gb);
    }

    #[test]
    fn near_plane_culls_and_non_finite_errors() {
        let cam = axis_camera(16, 16, 20.0);
        let behind = iso(Vec3::new(0.0, 0.0, 0.005), 0.1, 2.0, Vec3::repeat(1.0));
        let out = Renderer::default().render_gaussians(&[behind], Vec3::zeros(), &cam).unwrap();
        assert!(out.alpha.data().iter().all(|a| *a == 0.0));
        let mut bad = iso(Vec3::new(0.0, 0.0, 2.0), 0.1, 2.0, Vec3::repeat(1.0));
        bad.opacity_logit = f64::NAN;
        match Renderer::default().render_gaussians(&[behind, bad], Vec3::zeros(), &cam) {
            Err(Error::NonFinite { index, .. }) => assert_eq!(index, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn scene_gradients_split_by_person() {
        let g = iso(Vec3::new(0.0, 0.0, 0.0), 0.2, logit(0.5), Vec3::repeat(0.5));
        let persons = vec![
            PersonGaussians::new(PersonId(7), vec![g, g], Vec3::new(0.0, 0.0, 2.0)).unwrap(),
            PersonGaussians::new(PersonId(3), vec![g], Vec3::new(0.3, 0.0, 2.5)).unwrap(),
        ];
        let scene = assemble_scene(persons, Vec3::zeros()).unwrap();
        let cam = axis_camera(16, 16, 20.0);
        let lg = ImageBuffer::filled(16, 16, 3, ImageRole::Rgb, 1.0);
        let grads = render_backward(&scene, &cam, &lg).unwrap();
        assert_eq!(grads.person(PersonId(7)).unwrap().len(), 2);
        assert_eq!(grads.person(PersonId(3)).unwrap().len(), 1);
        assert!(grads.is_finite());
    }
}
