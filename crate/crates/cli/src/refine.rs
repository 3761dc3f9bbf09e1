//! Cluster-wise refinement of a scene on disk.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::Duration;

use crowdsplat_core::body_model::Mesh;
use crowdsplat_core::distill::{
    distill_with_refresh, float_json, generate_pseudo_gt, ExternalRefiner, IdentityRefiner, OptimConfig, Refiner,
    Refresh, Target, UnsharpRefiner, ViewMetrics,
};
use crowdsplat_core::image::{BitDepth, ImageBuffer};
use crowdsplat_core::renderer::{CameraRig, Renderer};
use crowdsplat_core::scene::{cluster_persons, ClusterConfig, CrowdScene, PersonId};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{PipelineError, PipelineResult, Problems};
use crate::fsio::{resolve, write_json, write_png};
use crate::scene::{load_scene_dir, write_scene_dir, SCENE_MANIFEST};
use crate::specs::{ImageSpec, RigSpec};
use crate::MANIFEST_VERSION;

pub const REFINE_REPORT: &str = "report.json";
pub const REFINE_TIMING: &str = "timing.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefineConfig {
    /// Scene manifest to refine.
    pub scene: PathBuf,
    #[serde(default)]
    pub refiner: RefinerSpec,
    #[serde(default)]
    pub cluster: ClusterConfig,
    #[serde(default)]
    pub optim: OptimConfig,
    #[serde(default)]
    pub rig: RigSpec,
    #[serde(default)]
    pub image: ImageSpec,
    /// Regenerate pseudo ground truth from the current scene every this
    /// many iterations; absent means generate once.
    #[serde(default)]
    pub refresh_every: Option<usize>,
    /// Use renders of this scene as targets instead of refiner output.
    #[serde(default)]
    pub target_scene: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum RefinerSpec {
    Identity,
    Unsharp {
        amount: f64,
        radius: f64,
    },
    /// `command rgb.png normal.png out.png`, split on whitespace.
    External {
        command: String,
        #[serde(default = "default_timeout")]
        timeout_seconds: f64,
    },
}

fn default_timeout() -> f64 {
    ExternalRefiner::DEFAULT_TIMEOUT.as_secs_f64()
}

impl Default for RefinerSpec {
    fn default() -> Self {
        RefinerSpec::Unsharp {
            amount: 0.5,
            radius: 1.0,
        }
    }
}

impl RefinerSpec {
    pub fn build(&self) -> crowdsplat_core::Result<Box<dyn Refiner>> {
        Ok(match self {
            RefinerSpec::Identity => Box::new(IdentityRefiner),
            RefinerSpec::Unsharp { amount, radius } => Box::new(UnsharpRefiner::new(*amount, *radius)?),
            RefinerSpec::External {
                command,
                timeout_seconds,
            } => {
                if !(*timeout_seconds > 0.0 && timeout_seconds.is_finite()) {
                    return Err(crowdsplat_core::Error::Config(format!(
                        "external refiner timeout {timeout_seconds} must be positive"
                    )));
                }
                Box::new(ExternalRefiner::from_command(command, Duration::from_secs_f64(*timeout_seconds))?)
            }
        })
    }
}

impl RefineConfig {
    pub fn resolve_paths(&mut self, base: &Path) {
        self.scene = resolve(base, &self.scene);
        if let Some(t) = &mut self.target_scene {
            *t = resolve(base, t);
        }
    }

    fn validate(&self) -> PipelineResult<Box<dyn Refiner>> {
        let mut problems = Problems::default();
        problems.absorb("optim", self.optim.validate());
        problems.absorb("cluster", self.cluster.validate());
        self.rig.check("rig", &mut problems);
        self.image.check("image", &mut problems);
        problems.check(self.refresh_every != Some(0), || "refresh_every must be >= 1".into());
        problems.check(self.scene.is_file(), || format!("scene manifest {} does not exist", self.scene.display()));
        if let Some(t) = &self.target_scene {
            problems.check(t.is_file(), || format!("target scene manifest {} does not exist", t.display()));
        }
        let refiner = self.refiner.build();
        if let Err(e) = &refiner {
            problems.push(format!("refiner: {e}"));
        }
        problems.finish()?;
        Ok(refiner.expect("checked above"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClusterStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterOutcome {
    pub index: usize,
    pub persons: BTreeSet<PersonId>,
    pub status: ClusterStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<ClusterMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterMetrics {
    #[serde(with = "float_json")]
    pub mean_psnr_before: f64,
    #[serde(with = "float_json")]
    pub mean_psnr_after: f64,
    /// After minus before; zero when both are infinite.
    #[serde(with = "float_json")]
    pub psnr_delta: f64,
    pub loss_trace: Vec<f64>,
    pub views: Vec<ViewMetrics>,
    pub grids: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineReport {
    pub version: u32,
    /// Refined scene manifest, relative to the output directory.
    pub scene: PathBuf,
    pub clusters: Vec<ClusterOutcome>,
    pub noise: BTreeSet<PersonId>,
    pub config: RefineConfig,
}

impl RefineReport {
    pub fn failed(&self) -> Vec<&ClusterOutcome> {
        self.clusters.iter().filter(|c| c.status == ClusterStatus::Failed).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub clusters: Vec<f64>,
    pub total_seconds: f64,
}

fn psnr_delta(before: f64, after: f64) -> f64 {
    if before == after {
        0.0
    } else {
        after - before
    }
}

struct Context<'a> {
    config: &'a RefineConfig,
    refiner: &'a dyn Refiner,
    meshes: &'a BTreeMap<PersonId, Mesh>,
    targets_from: Option<&'a CrowdScene>,
    renderer: Renderer,
}

impl Context<'_> {
    fn targets(&self, scene: &CrowdScene, cluster: &BTreeSet<PersonId>, rig: &CameraRig) -> crowdsplat_core::Result<Vec<Target>> {
        match self.targets_from {
            Some(reference) => {
                for id in cluster {
                    if reference.person(*id).is_none() {
                        return Err(crowdsplat_core::Error::Scene(format!("target scene lacks person {id}")));
                    }
                }
                let sub = reference.subset(cluster);
                rig.cameras
                    .par_iter()
                    .map(|cam| {
                        Ok(Target {
                            camera: cam.clone(),
                            image: self.renderer.render(&sub, cam)?.rgb,
                        })
                    })
                    .collect()
            }
            None => generate_pseudo_gt(scene, cluster, rig, self.refiner, self.meshes, &self.config.optim.render),
        }
    }

    /// Distills one cluster and writes its before/target/after grids.
    fn run_cluster(
        &self,
        scene: &CrowdScene,
        index: usize,
        cluster: &BTreeSet<PersonId>,
        out: &Path,
    ) -> PipelineResult<(CrowdScene, ClusterMetrics)> {
        let sub = scene.subset(cluster);
        let look_at = sub.centroid().ok_or_else(|| PipelineError::invalid(format!("cluster {index} is empty")))?;
        let rig = self.config.rig.build(look_at, &self.config.image)?;
        let targets = self.targets(scene, cluster, &rig)?;
        let regenerate = |s: &CrowdScene| self.targets(s, cluster, &rig);
        let refresh = match (self.config.refresh_every, self.targets_from) {
            (Some(every), None) => Some(Refresh {
                every,
                regenerate: &regenerate,
            }),
            (Some(_), Some(_)) => {
                log::warn!("refresh_every has no effect with a fixed target scene");
                None
            }
            (None, _) => None,
        };
        let (updated, report) = distill_with_refresh(scene, cluster, &targets, &self.config.optim, refresh)?;
        let after = updated.subset(cluster);
        let grids = targets
            .par_iter()
            .enumerate()
            .map(|(v, t)| -> PipelineResult<PathBuf> {
                let b = self.renderer.render(&sub, &t.camera)?.rgb;
                let a = self.renderer.render(&after, &t.camera)?.rgb;
                let grid = ImageBuffer::hstack(&[&b, &t.image, &a])?;
                let rel = PathBuf::from(format!("grids/cluster_{index:02}/view_{v:03}.png"));
                write_png(&out.join(&rel), &grid, BitDepth::Eight)?;
                Ok(rel)
            })
            .collect::<PipelineResult<Vec<_>>>()?;
        let (before_psnr, after_psnr) = report.mean_psnr();
        Ok((
            updated,
            ClusterMetrics {
                mean_psnr_before: before_psnr,
                mean_psnr_after: after_psnr,
                psnr_delta: psnr_delta(before_psnr, after_psnr),
                loss_trace: report.loss_trace,
                views: report.views,
                grids,
            },
        ))
    }
}

/// Groups persons, refines each group and writes the refined scene, the
/// report and the render grids. A failing cluster is recorded and skipped.
pub fn refine_command(config: &RefineConfig, out: &Path) -> PipelineResult<RefineReport> {
    let refiner = config.validate()?;
    let (_, scene, meshes) = load_scene_dir(&config.scene)?;
    let target_scene = match &config.target_scene {
        Some(path) => Some(load_scene_dir(path)?.1),
        None => None,
    };
    let clustering = cluster_persons(&scene, &config.cluster)?;
    let ctx = Context {
        config,
        refiner: refiner.as_ref(),
        meshes: &meshes,
        targets_from: target_scene.as_ref(),
        renderer: Renderer::new(config.optim.render)?,
    };

    let start = std::time::Instant::now();
    let mut working = scene;
    let mut clusters = Vec::with_capacity(clustering.clusters.len());
    let mut cluster_seconds = Vec::with_capacity(clustering.clusters.len());
    for (index, cluster) in clustering.clusters.iter().enumerate() {
        let t0 = std::time::Instant::now();
        let outcome = match ctx.run_cluster(&working, index, cluster, out) {
            Ok((updated, metrics)) => {
                working = updated;
                ClusterOutcome {
                    index,
                    persons: cluster.clone(),
                    status: ClusterStatus::Ok,
                    error: None,
                    metrics: Some(metrics),
                }
            }
            Err(e) => {
                log::error!("cluster {index} failed: {e}");
                ClusterOutcome {
                    index,
                    persons: cluster.clone(),
                    status: ClusterStatus::Failed,
                    error: Some(e.to_string()),
                    metrics: None,
                }
            }
        };
        cluster_seconds.push(t0.elapsed().as_secs_f64());
        clusters.push(outcome);
    }

    let scene_rel = PathBuf::from("scene").join(SCENE_MANIFEST);
    let echo = serde_json::to_value(config).map_err(|e| crowdsplat_core::Error::json("refine config", e))?;
    write_scene_dir(&out.join("scene"), &working, &meshes, echo)?;
    let report = RefineReport {
        version: MANIFEST_VERSION,
        scene: scene_rel,
        clusters,
        noise: clustering.noise,
        config: config.clone(),
    };
    write_json(&out.join(REFINE_REPORT), &report)?;
    write_json(
        &out.join(REFINE_TIMING),
        &Timing {
            clusters: cluster_seconds,
            total_seconds: start.elapsed().as_secs_f64(),
        },
    )?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{build_scene, SceneConfig};

    fn write_input(dir: &Path) -> PathBuf {
        let cfg: SceneConfig = serde_json::from_value(serde_json::json!({ "persons": [
            { "person_id": 1, "root_translation": [0.0, 0.0, 0.0], "color": { "kind": "flat", "rgb": [0.9, 0.3, 0.1] } },
            { "person_id": 2, "root_translation": [0.7, 0.0, 0.0], "color": { "kind": "flat", "rgb": [0.1, 0.3, 0.9] } },
            { "person_id": 3, "root_translation": [6.0, 0.0, 0.0] }
        ]}))
        .unwrap();
        let built = build_scene(&cfg).unwrap();
        write_scene_dir(dir, &built.scene, &built.meshes(), serde_json::Value::Null).unwrap();
        dir.join(SCENE_MANIFEST)
    }

    fn config(scene: PathBuf, refiner: RefinerSpec) -> RefineConfig {
        let mut cfg: RefineConfig = serde_json::from_value(serde_json::json!({
            "scene": scene,
            "rig": { "kind": "orbit", "n": 4, "radius": 3.0, "elevation": 0.3 },
            "image": { "width": 24, "height": 24, "focal": 20.0 },
            "optim": { "iterations": 3, "views_per_step": 2 }
        }))
        .unwrap();
        cfg.refiner = refiner;
        cfg
    }

    #[test]
    fn identity_refiner_leaves_ply_bytes_unchanged() {
        let input = tempfile::tempdir().unwrap();
        let manifest = write_input(input.path());
        let out = tempfile::tempdir().unwrap();
        let report = refine_command(&config(manifest, RefinerSpec::Identity), out.path()).unwrap();
        assert_eq!(report.clusters.len(), 2);
        for c in &report.clusters {
            let m = c.metrics.as_ref().unwrap();
            assert_eq!(m.psnr_delta, 0.0);
            assert_eq!(m.grids.len(), 4);
        }
        for id in 1..=3 {
            let name = format!("person_{id}.ply");
            assert_eq!(
                std::fs::read(input.path().join(&name)).unwrap(),
                std::fs::read(out.path().join("scene").join(&name)).unwrap(),
            );
        }
    }

    #[test]
    fn failing_cluster_is_recorded_and_others_proceed() {
        let input = tempfile::tempdir().unwrap();
        let manifest = write_input(input.path());
        let out = tempfile::tempdir().unwrap();
        let spec = RefinerSpec::External {
            command: "/nonexistent/refiner-binary".into(),
            timeout_seconds: 5.0,
        };
        let report = refine_command(&config(manifest, spec), out.path()).unwrap();
        assert_eq!(report.failed().len(), 2);
        assert!(report.clusters.iter().all(|c| c.error.as_deref().is_some_and(|e| e.contains("view 0"))));
        assert!(out.path().join(REFINE_REPORT).is_file());
    }

    #[test]
    fn empty_scene_is_rejected_before_any_work() {
        let input = tempfile::tempdir().unwrap();
        let path = input.path().join(SCENE_MANIFEST);
        std::fs::write(&path, r#"{"version": 1, "background": [1, 1, 1], "persons": []}"#).unwrap();
        let out = tempfile::tempdir().unwrap();
        let err = refine_command(&config(path, RefinerSpec::Identity), out.path()).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert_eq!(std::fs::read_dir(out.path()).unwrap().count(), 0);
    }

    #[test]
    fn infinite_psnr_delta_is_zero() {
        assert_eq!(psnr_delta(f64::INFINITY, f64::INFINITY), 0.0);
        assert_eq!(psnr_delta(20.0, 23.5), 3.5);
    }
}
