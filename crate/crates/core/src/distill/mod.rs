//! Pseudo-ground-truth generation through a [`Refiner`], distillation of the
//! refined views back into the Gaussians, and the SCL pair sampler.

mod adam;
mod refiner;

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::body_model::Mesh;
use crate::image::ImageBuffer;
use crate::metrics::{optim_loss, psnr, ssim, SsimConfig};
use crate::renderer::{render_normal_map, Camera, CameraRig, RenderConfig, Renderer, SceneGradients};
use crate::rng::SeededRng;
use crate::scene::{CrowdScene, PersonId};
use crate::{Error, Result};

pub use adam::Adam;
pub use refiner::{high_pass, ExternalRefiner, IdentityRefiner, Refiner, UnsharpRefiner};

/// A camera and the image the scene should reproduce from it.
#[derive(Debug, Clone, PartialEq)]
pub struct Target {
    pub camera: Camera,
    pub image: ImageBuffer,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StepSizes {
    pub position: f64,
    pub log_scale: f64,
    pub rotation: f64,
    pub opacity_logit: f64,
    pub color: f64,
}

impl Default for StepSizes {
    fn default() -> Self {
        Self {
            position: 1e-4,
            log_scale: 1e-3,
            rotation: 1e-3,
            opacity_logit: 1e-2,
            color: 1e-2,
        }
    }
}

impl StepSizes {
    pub fn zero() -> Self {
        Self {
            position: 0.0,
            log_scale: 0.0,
            rotation: 0.0,
            opacity_logit: 0.0,
            color: 0.0,
        }
    }

    /// Step size for each of the 14 packed coordinates of a Gaussian.
    fn per_coordinate(&self) -> [f64; PACKED] {
        let mut out = [0.0; PACKED];
        out[0..3].fill(self.position);
        out[3..6].fill(self.log_scale);
        out[6..10].fill(self.rotation);
        out[10] = self.opacity_logit;
        out[11..14].fill(self.color);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimConfig {
    pub iterations: usize,
    pub step_sizes: StepSizes,
    pub lambda_ssim: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub views_per_step: usize,
    pub seed: u64,
    pub ssim: SsimConfig,
    pub render: RenderConfig,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            iterations: 500,
            step_sizes: StepSizes::default(),
            lambda_ssim: 0.2,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            views_per_step: 4,
            seed: 0,
            ssim: SsimConfig::default(),
            render: RenderConfig::default(),
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        let s = &self.step_sizes;
        let steps = [s.position, s.log_scale, s.rotation, s.opacity_logit, s.color];
        let mut problems = Vec::new();
        if self.iterations == 0 {
            problems.push("iterations must be >= 1".to_string());
        }
        if self.views_per_step == 0 {
            problems.push("views_per_step must be >= 1".to_string());
        }
        if !steps.iter().all(|v| *v >= 0.0 && v.is_finite()) {
            problems.push(format!("step sizes must be finite and nonnegative: {s:?}"));
        }
        if !(self.lambda_ssim >= 0.0) {
            problems.push(format!("lambda_ssim {} is negative", self.lambda_ssim));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2) && self.epsilon > 0.0) {
            problems.push("adam moments must lie in [0, 1) with epsilon > 0".to_string());
        }
        self.ssim.validate()?;
        self.render.validate()?;
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }
}

/// Floats that may be infinite are written as strings in JSON.
pub mod float_json {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) => match s.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("unexpected float string `{other}`"))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewMetrics {
    pub view: usize,
    #[serde(with = "float_json")]
    pub psnr_before: f64,
    #[serde(with = "float_json")]
    pub psnr_after: f64,
    pub ssim_before: f64,
    pub ssim_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementReport {
    /// Mean loss over the views of each iteration.
    pub loss_trace: Vec<f64>,
    pub views: Vec<ViewMetrics>,
    pub wall_clock_seconds: f64,
    pub config: OptimConfig,
}

impl RefinementReport {
    /// Mean PSNR before and after, over views with finite values.
    pub fn mean_psnr(&self) -> (f64, f64) {
        let mean = |f: fn(&ViewMetrics) -> f64| {
            let vals: Vec<f64> = self.views.iter().map(f).filter(|v| v.is_finite()).collect();
            if vals.is_empty() {
                f64::INFINITY
            } else {
                vals.iter().sum::<f64>() / vals.len() as f64
            }
        };
        (mean(|v| v.psnr_before), mean(|v| v.psnr_after))
    }
}

/// Renders the cluster from every rig camera, rasterizes the cluster's
/// merged mesh normals and passes both through the refiner. Meshes are in
/// world space.
pub fn generate_pseudo_gt(
    scene: &CrowdScene,
    cluster: &BTreeSet<PersonId>,
    rig: &CameraRig,
    refiner: &dyn Refiner,
    meshes: &BTreeMap<PersonId, Mesh>,
    render: &RenderConfig,
) -> Result<Vec<Target>> {
    for id in cluster {
        if scene.person(*id).is_none() {
            return Err(Error::Scene(format!("cluster person {id} is not in the scene")));
        }
    }
    let sub = scene.subset(cluster);
    let merged = Mesh::merge(cluster.iter().filter_map(|id| {
        let m = meshes.get(id);
        if m.is_none() {
            log::warn!("no mesh for person {id}; normal map omits it");
        }
        m
    }));
    let renderer = Renderer::new(*render)?;
    rig.cameras
        .iter()
        .enumerate()
        .map(|(view, camera)| {
            let rgb = renderer.render(&sub, camera)?.rgb;
            let normal = render_normal_map(&merged, camera);
            let refined = refiner.refine(&rgb, &normal).map_err(|e| match e {
                Error::Refiner { refiner, message, .. } => Error::Refiner { refiner, view, message },
                other => Error::Refiner {
                    refiner: refiner.name().to_string(),
                    view,
                    message: other.to_string(),
                },
            })?;
            if !refined.same_shape(&rgb) {
                return Err(Error::Refiner {
                    refiner: refiner.name().to_string(),
                    view,
                    message: format!(
                        "output is {}x{}x{}, expected {}x{}x{}",
                        refined.width(),
                        refined.height(),
                        refined.channels(),
                        rgb.width(),
                        rgb.height(),
                        rgb.channels()
                    ),
                });
            }
            Ok(Target {
                camera: camera.clone(),
                image: refined,
            })
        })
        .collect()
}

const PACKED: usize = 14;

fn pack(scene: &CrowdScene, ids: &BTreeSet<PersonId>) -> Vec<f64> {
    let mut out = Vec::new();
    for p in scene.persons.iter().filter(|p| ids.contains(&p.person_id)) {
        for g in &p.gaussians {
            out.extend(g.position.iter());
            out.extend(g.log_scale.iter());
            out.extend(g.rotation);
            out.push(g.opacity_logit);
            out.extend(g.color.iter());
        }
    }
    out
}

fn pack_grads(grads: &SceneGradients, scene: &CrowdScene, ids: &BTreeSet<PersonId>) -> Vec<f64> {
    let mut out = Vec::new();
    for p in scene.persons.iter().filter(|p| ids.contains(&p.person_id)) {
        for g in grads.person(p.person_id).expect("gradient slice for every person") {
            out.extend(g.position.iter());
            out.extend(g.log_scale.iter());
            out.extend(g.rotation);
            out.push(g.opacity_logit);
            out.extend(g.color.iter());
        }
    }
    out
}

/// Subtracts `delta` from the cluster's parameters. Coordinates with a zero
/// update are left untouched, so a zero step is an exact no-op.
fn apply_update(scene: &mut CrowdScene, ids: &BTreeSet<PersonId>, delta: &[f64]) {
    let mut k = 0;
    for p in scene.persons.iter_mut().filter(|p| ids.contains(&p.person_id)) {
        for g in p.gaussians.iter_mut() {
            let d = &delta[k..k + PACKED];
            k += PACKED;
            for i in 0..3 {
                g.position[i] -= d[i];
                g.log_scale[i] -= d[3 + i];
            }
            if d[6..10].iter().any(|v| *v != 0.0) {
                let mut q = g.rotation;
                for i in 0..4 {
                    q[i] -= d[6 + i];
                }
                let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
                if n > 0.0 && n.is_finite() {
                    g.rotation = q.map(|v| v / n);
                }
            }
            g.opacity_logit -= d[10];
            for i in 0..3 {
                if d[11 + i] != 0.0 {
                    g.color[i] = (g.color[i] - d[11 + i]).clamp(0.0, 1.0);
                }
            }
        }
    }
}

fn view_metrics(renderer: &Renderer, scene: &CrowdScene, targets: &[Target], cfg: &SsimConfig) -> Result<Vec<(f64, f64)>> {
    targets
        .par_iter()
        .map(|t| {
            let r = renderer.render(scene, &t.camera)?.rgb;
            Ok((psnr(&r, &t.image, 1.0)?, ssim(&r, &t.image, cfg)?))
        })
        .collect()
}

/// Hook for periodically regenerating targets from the current scene.
pub struct Refresh<'a> {
    pub every: usize,
    pub regenerate: &'a (dyn Fn(&CrowdScene) -> Result<Vec<Target>> + Sync),
}

/// Gradient descent of the cluster's Gaussians against the targets. Only
/// the cluster is rendered; all other persons are returned unchanged.
pub fn distill(
    scene: &CrowdScene,
    cluster: &BTreeSet<PersonId>,
    targets: &[Target],
    cfg: &OptimConfig,
) -> Result<(CrowdScene, RefinementReport)> {
    distill_with_refresh(scene, cluster, targets, cfg, None)
}

pub fn distill_with_refresh(
    scene: &CrowdScene,
    cluster: &BTreeSet<PersonId>,
    targets: &[Target],
    cfg: &OptimConfig,
    refresh: Option<Refresh<'_>>,
) -> Result<(CrowdScene, RefinementReport)> {
    cfg.validate()?;
    if targets.is_empty() {
        return Err(Error::Config("distillation needs at least one target".into()));
    }
    for id in cluster {
        if scene.person(*id).is_none() {
            return Err(Error::Scene(format!("cluster person {id} is not in the scene")));
        }
    }
    let start = Instant::now();
    let renderer = Renderer::new(cfg.render)?;
    let mut targets = targets.to_vec();
    let mut working = scene.subset(cluster);
    let before = view_metrics(&renderer, &working, &targets, &cfg.ssim)?;

    let n_params = pack(&working, cluster).len();
    let mut adam = Adam::new(n_params, cfg.beta1, cfg.beta2, cfg.epsilon);
    let lr: Vec<f64> = cfg.step_sizes.per_coordinate().iter().copied().cycle().take(n_params).collect();

    let order = SeededRng::new(cfg.seed).permutation(targets.len());
    let per_step = cfg.views_per_step.min(targets.len());
    let mut cursor = 0;
    let mut trace = Vec::with_capacity(cfg.iterations);

    for iteration in 0..cfg.iterations {
        if let Some(r) = &refresh {
            if r.every > 0 && iteration > 0 && iteration % r.every == 0 {
                let fresh = (r.regenerate)(&working)?;
                if fresh.len() != targets.len() {
                    return Err(Error::Config("refreshed target count differs".into()));
                }
                targets = fresh;
            }
        }
        let views: Vec<usize> = (0..per_step).map(|k| order[(cursor + k) % order.len()]).collect();
        cursor = (cursor + per_step) % order.len();

        let results: Vec<Result<(f64, SceneGradients)>> = views
            .par_iter()
            .map(|&v| {
                let t = &targets[v];
                let rendered = renderer.render(&working, &t.camera)?.rgb;
                let (loss, grad) = optim_loss(&t.image, &rendered, cfg.lambda_ssim, &cfg.ssim)?;
                if !loss.is_finite() {
                    return Err(Error::Divergence { iteration, view: v });
                }
                Ok((loss, renderer.render_backward(&working, &t.camera, &grad)?))
            })
            .collect();

        let mut loss_sum = 0.0;
        let mut grad_sum = vec![0.0; n_params];
        for r in results {
            let (loss, grads) = r?;
            loss_sum += loss;
            for (acc, g) in grad_sum.iter_mut().zip(pack_grads(&grads, &working, cluster)) {
                *acc += g;
            }
        }
        let inv = 1.0 / views.len() as f64;
        let loss = loss_sum * inv;
        if let Some(i) = grad_sum.iter().position(|g| !g.is_finite()) {
            log::error!("non-finite gradient at packed coordinate {i}");
            return Err(Error::Divergence {
                iteration,
                view: views[0],
            });
        }
        grad_sum.iter_mut().for_each(|g| *g *= inv);
        trace.push(loss);

        let delta = adam.step(&grad_sum, &lr);
        apply_update(&mut working, cluster, &delta);
    }

    let after = view_metrics(&renderer, &working, &targets, &cfg.ssim)?;
    let views = before
        .iter()
        .zip(&after)
        .enumerate()
        .map(|(view, (b, a))| ViewMetrics {
            view,
            psnr_before: b.0,
            psnr_after: a.0,
            ssim_before: b.1,
            ssim_after: a.1,
        })
        .collect();

    let mut updated = scene.clone();
    for p in updated.persons.iter_mut() {
        if let Some(w) = working.person(p.person_id) {
            p.gaussians = w.gaussians.clone();
        }
    }
    let report = RefinementReport {
        loss_trace: trace,
        views,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        config: cfg.clone(),
    };
    Ok((updated, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SclConfig {
    pub rho: f64,
}

impl Default for SclConfig {
    fn default() -> Self {
        Self { rho: 0.2 }
    }
}

impl SclConfig {
    pub fn validate(&self) -> Result<()> {
        if (0.0..=1.0).contains(&self.rho) {
            Ok(())
        } else {
            Err(Error::Config(format!("scl rho {} outside [0, 1]", self.rho)))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairKind {
    Degradation,
    Identity,
}

/// With probability `rho` yields `(gt, gt, Identity)`, otherwise
/// `(coarse, gt, Degradation)`. Consumes exactly one draw.
pub fn scl_sample(
    coarse: &ImageBuffer,
    gt: &ImageBuffer,
    cfg: &SclConfig,
    rng: &mut SeededRng,
) -> Result<(ImageBuffer, ImageBuffer, PairKind)> {
    cfg.validate()?;
    coarse.ensure_same_shape(gt, "scl pair")?;
    Ok(if rng.bernoulli(cfg.rho) {
        (gt.clone(), gt.clone(), PairKind::Identity)
    } else {
        (coarse.clone(), gt.clone(), PairKind::Degradation)
    })
}

/// Draws only the pair kind, for callers that keep images on disk.
pub fn scl_kind(cfg: &SclConfig, rng: &mut SeededRng) -> Result<PairKind> {
    cfg.validate()?;
    Ok(if rng.bernoulli(cfg.rho) {
        PairKind::Identity
    } else {
        PairKind::Degradation
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body_model::{BodyModelData, BodyParams};
    use crate::image::ImageRole;
    use crate::renderer::{orbit_rig, Intrinsics};
    use crate::scene::{assemble_scene, init_gaussians_from_mesh, PersonGaussians};
    use crate::Vec3;

    fn toy_scene() -> (CrowdScene, BTreeMap<PersonId, Mesh>) {
        let model = BodyModelData::toy();
        let mut persons = Vec::new();
        let mut meshes = BTreeMap::new();
        for (id, x) in [(1u32, -0.4), (2, 0.5), (9, 6.0)] {
            let mut params = BodyParams::rest(&model);
            params.root_translation = [x, 0.0, 0.0];
            let mesh = model.skin(&params).unwrap();
            let local = mesh.translated(-params.translation());
            let colors: Vec<Vec3> = (0..local.vertices.len())
                .map(|i| Vec3::new((i % 3) as f64 * 0.4, 0.3 + 0.02 * (i % 7) as f64, 0.8))
                .collect();
            let gs = init_gaussians_from_mesh(&local, 0.6, &colors).unwrap();
            persons.push(PersonGaussians::new(PersonId(id), gs, params.translation()).unwrap());
            meshes.insert(PersonId(id), mesh);
        }
        (assemble_scene(persons, Vec3::new(1.0, 1.0, 1.0)).unwrap(), meshes)
    }

    fn cluster() -> BTreeSet<PersonId> {
        [PersonId(1), PersonId(2)].into_iter().collect()
    }

    fn rig(n: usize) -> CameraRig {
        orbit_rig(n, 3.0, 0.8, Vec3::new(0.0, 0.0, 0.9), Intrinsics::centered(40.0, 32, 32), 32, 32).unwrap()
    }

    fn quick(iterations: usize) -> OptimConfig {
        OptimConfig {
            iterations,
            views_per_step: 2,
            ..OptimConfig::default()
        }
    }

    #[test]
    fn identity_targets_are_a_fixed_point() {
        let (scene, meshes) = toy_scene();
        let targets = generate_pseudo_gt(&scene, &cluster(), &rig(4), &IdentityRefiner, &meshes, &RenderConfig::default()).unwrap();
        let (updated, report) = distill(&scene, &cluster(), &targets, &quick(5)).unwrap();
        assert_eq!(updated, scene);
        assert!(report.loss_trace.iter().all(|l| *l == 0.0));
        assert_eq!(report.loss_trace.len(), 5);
    }

    #[test]
    fn zero_step_leaves_scene_unchanged() {
        let (scene, meshes) = toy_scene();
        let targets = generate_pseudo_gt(&scene, &cluster(), &rig(3), &UnsharpRefiner::new(1.5, 1.0).unwrap(), &meshes, &RenderConfig::default()).unwrap();
        let cfg = OptimConfig {
            iterations: 1,
            step_sizes: StepSizes::zero(),
            ..OptimConfig::default()
        };
        let (updated, report) = distill(&scene, &cluster(), &targets, &cfg).unwrap();
        assert_eq!(updated, scene);
        assert_eq!(report.loss_trace.len(), 1);
        assert!(report.loss_trace[0] > 0.0);
    }

    #[test]
    fn only_the_cluster_moves_and_runs_repeat() {
        let (scene, meshes) = toy_scene();
        let targets = generate_pseudo_gt(&scene, &cluster(), &rig(3), &UnsharpRefiner::new(1.5, 1.0).unwrap(), &meshes, &RenderConfig::default()).unwrap();
        let (a, ra) = distill(&scene, &cluster(), &targets, &quick(4)).unwrap();
        let (b, rb) = distill(&scene, &cluster(), &targets, &quick(4)).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra.loss_trace, rb.loss_trace);
        assert_eq!(ra.views, rb.views);
        assert_eq!(a.person(PersonId(9)), scene.person(PersonId(9)));
        assert_ne!(a.person(PersonId(1)), scene.person(PersonId(1)));
        for p in &a.persons {
            for g in &p.gaussians {
                let n = g.rotation.iter().map(|v| v * v).sum::<f64>().sqrt();
                assert!((n - 1.0).abs() < 1e-12);
                assert!(g.color.iter().all(|c| (0.0..=1.0).contains(c)));
            }
        }
    }

    #[test]
    fn empty_inputs() {
        let (scene, meshes) = toy_scene();
        let empty = CameraRig {
            cameras: vec![],
            kind: crate::renderer::RigKind::Orbit,
        };
        assert!(generate_pseudo_gt(&scene, &cluster(), &empty, &IdentityRefiner, &meshes, &RenderConfig::default()).unwrap().is_empty());
        assert!(distill(&scene, &cluster(), &[], &quick(1)).is_err());
        let missing: BTreeSet<PersonId> = [PersonId(77)].into_iter().collect();
        assert!(generate_pseudo_gt(&scene, &missing, &rig(1), &IdentityRefiner, &meshes, &RenderConfig::default()).is_err());
    }

    fn laplacian_energy(img: &ImageBuffer) -> f64 {
        let (w, h) = (img.width(), img.height());
        let mut total = 0.0;
        for c in 0..3 {
            for y in 1..h - 1 {
                for x in 1..w - 1 {
                    let l = 4.0 * img.get(x, y, c) - img.get(x - 1, y, c) - img.get(x + 1, y, c) - img.get(x, y - 1, c) - img.get(x, y + 1, c);
                    total += l.abs();
                }
            }
        }
        total / (3 * (w - 2) * (h - 2)) as f64
    }

    #[test]
    fn unsharp_raises_high_frequency_energy() {
        let (scene, meshes) = toy_scene();
        let coarse = generate_pseudo_gt(&scene, &cluster(), &rig(3), &IdentityRefiner, &meshes, &RenderConfig::default()).unwrap();
        let sharp = generate_pseudo_gt(&scene, &cluster(), &rig(3), &UnsharpRefiner::new(1.0, 1.0).unwrap(), &meshes, &RenderConfig::default()).unwrap();
        for (c, s) in coarse.iter().zip(&sharp) {
            assert!(laplacian_energy(&s.image) > laplacian_energy(&c.image));
        }
    }

    struct Shrinking;
    impl Refiner for Shrinking {
        fn name(&self) -> &str {
            "shrinking"
        }
        fn refine(&self, rgb: &ImageBuffer, _: &ImageBuffer) -> Result<ImageBuffer> {
            Ok(ImageBuffer::filled(rgb.width() - 1, rgb.height(), 3, ImageRole::Rgb, 0.0))
        }
    }

    #[test]
    fn refiner_size_mismatch_names_the_view() {
        let (scene, meshes) = toy_scene();
        match generate_pseudo_gt(&scene, &cluster(), &rig(2), &Shrinking, &meshes, &RenderConfig::default()) {
            Err(Error::Refiner { view, refiner, .. }) => {
                assert_eq!(view, 0);
                assert_eq!(refiner, "shrinking");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn scl_extremes_and_rate() {
        let a = ImageBuffer::filled(4, 4, 3, ImageRole::Rgb, 0.1);
        let b = ImageBuffer::filled(4, 4, 3, ImageRole::Rgb, 0.9);
        let mut rng = SeededRng::new(3);
        for _ in 0..50 {
            let (i, t, k) = scl_sample(&a, &b, &SclConfig { rho: 0.0 }, &mut rng).unwrap();
            assert_eq!((i, t, k), (a.clone(), b.clone(), PairKind::Degradation));
            let (i, t, k) = scl_sample(&a, &b, &SclConfig { rho: 1.0 }, &mut rng).unwrap();
            assert_eq!((i, t, k), (b.clone(), b.clone(), PairKind::Identity));
        }
        let mut rng = SeededRng::new(11);
        let n = 10_000;
        let hits = (0..n)
            .filter(|_| scl_kind(&SclConfig::default(), &mut rng).unwrap() == PairKind::Identity)
            .count();
        assert!((hits as f64 / n as f64 - 0.2).abs() <= 0.02);
        assert!(scl_sample(&a, &ImageBuffer::filled(3, 4, 3, ImageRole::Rgb, 0.0), &SclConfig::default(), &mut rng).is_err());
        assert!(SclConfig { rho: 1.5 }.validate().is_err());
    }

    #[test]
    fn report_json_round_trips_infinite_psnr() {
        let report = RefinementReport {
            loss_trace: vec![0.0],
            views: vec![ViewMetrics {
                view: 0,
                psnr_before: f64::INFINITY,
                psnr_after: 31.5,
                ssim_before: 1.0,
                ssim_after: 0.9,
            }],
            wall_clock_seconds: 0.0,
            config: OptimConfig::default(),
        };
        let text = serde_json::to_string(&report).unwrap();
        assert!(text.contains("\"inf\""));
        let back: RefinementReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, report);
    }
}
