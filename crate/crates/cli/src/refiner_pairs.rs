//! Paired (coarse, ground-truth) renders with normal maps for refiner training.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use crowdsplat_core::body_model::Mesh;
use crowdsplat_core::distill::{scl_kind, PairKind, SclConfig};
use crowdsplat_core::image::BitDepth;
use crowdsplat_core::renderer::{render_normal_map, RenderConfig, Renderer, RigRecord};
use crowdsplat_core::rng::SeededRng;
use crowdsplat_core::scene::{CrowdScene, Gaussian};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{PipelineError, PipelineResult, Problems};
use crate::fsio::{write_json, write_png};
use crate::scene::{build_scene, SceneConfig};
use crate::specs::ImageSpec;
use crate::MANIFEST_VERSION;

const SPLIT_STREAM: u64 = 1;
const SCL_STREAM: u64 = 2;
const JITTER_STREAM: u64 = 3;

pub const REFINER_MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefinerPairsConfig {
    pub scenes: Vec<ScenePair>,
    #[serde(default)]
    pub image: ImageSpec,
    #[serde(default)]
    pub hemisphere: HemisphereSpec,
    #[serde(default)]
    pub scl: SclConfig,
    /// Fraction of scenes assigned to the training split.
    #[serde(default = "default_split_fraction")]
    pub split_fraction: f64,
    #[serde(default)]
    pub render: RenderConfig,
    #[serde(default)]
    pub seed: u64,
}

fn default_split_fraction() -> f64 {
    0.8
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HemisphereSpec {
    pub n: usize,
    pub radius: f64,
}

impl Default for HemisphereSpec {
    fn default() -> Self {
        Self { n: 126, radius: 3.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenePair {
    /// Directory name for the scene's renders; must be unique.
    pub name: String,
    pub gt: SceneConfig,
    #[serde(default)]
    pub coarse: CoarseSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CoarseSource {
    /// Seeded perturbation of the ground-truth scene.
    Jitter(CoarseJitter),
    /// An explicitly configured coarse scene with the same person ids.
    Scene { scene: SceneConfig },
}

impl Default for CoarseSource {
    fn default() -> Self {
        CoarseSource::Jitter(CoarseJitter::default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoarseJitter {
    /// Standard deviation of additive color noise, clamped to `[0, 1]`.
    pub color_sigma: f64,
    /// Half-width of the uniform opacity-logit offset.
    pub opacity_jitter: f64,
    /// Standard deviation of position noise, metres.
    pub position_sigma: f64,
}

impl Default for CoarseJitter {
    fn default() -> Self {
        Self {
            color_sigma: 0.2,
            opacity_jitter: 1.0,
            position_sigma: 0.002,
        }
    }
}

impl CoarseJitter {
    fn check(&self, what: &str, problems: &mut Problems) {
        let v = [self.color_sigma, self.opacity_jitter, self.position_sigma];
        problems.check(v.iter().all(|x| *x >= 0.0 && x.is_finite()), || {
            format!("{what}: jitter magnitudes must be finite and nonnegative: {self:?}")
        });
    }
}

/// Perturbs every Gaussian: per-channel color noise, a uniform logit
/// offset and per-axis position noise, drawn in Gaussian order.
pub fn jitter_scene(scene: &CrowdScene, jitter: &CoarseJitter, rng: &mut SeededRng) -> CrowdScene {
    let mut out = scene.clone();
    for p in &mut out.persons {
        for g in &mut p.gaussians {
            *g = jitter_gaussian(g, jitter, rng);
        }
    }
    out
}

fn jitter_gaussian(g: &Gaussian, j: &CoarseJitter, rng: &mut SeededRng) -> Gaussian {
    let mut out = *g;
    for c in 0..3 {
        out.color[c] = (g.color[c] + j.color_sigma * rng.normal()).clamp(0.0, 1.0);
    }
    out.opacity_logit += rng.uniform(-j.opacity_jitter, j.opacity_jitter);
    for c in 0..3 {
        out.position[c] += j.position_sigma * rng.normal();
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// `round(fraction * n)` scenes go to train, chosen by a seeded permutation.
pub fn assign_splits(n: usize, fraction: f64, rng: &mut SeededRng) -> Vec<Split> {
    let train = ((fraction * n as f64).round() as usize).min(n);
    let mut out = vec![Split::Test; n];
    for i in rng.permutation(n).into_iter().take(train) {
        out[i] = Split::Train;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinerEntry {
    pub scene: String,
    pub view: usize,
    pub split: Split,
    pub kind: PairKind,
    pub r_gt: PathBuf,
    pub r_coarse: PathBuf,
    pub normal: PathBuf,
    /// Refiner input after self-calibrated mixing: `r_gt` for identity
    /// pairs, `r_coarse` otherwise.
    pub input: PathBuf,
    pub target: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub fraction: f64,
    pub train: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSummary {
    pub name: String,
    pub split: Split,
    pub rig: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinerManifest {
    pub version: u32,
    pub seed: u64,
    pub encoding: String,
    pub split: SplitSummary,
    pub scenes: Vec<SceneSummary>,
    pub entries: Vec<RefinerEntry>,
    pub config: RefinerPairsConfig,
}

impl RefinerPairsConfig {
    pub fn resolve_paths(&mut self, base: &Path) {
        for s in &mut self.scenes {
            s.gt.resolve_paths(base);
            if let CoarseSource::Scene { scene } = &mut s.coarse {
                scene.resolve_paths(base);
            }
        }
    }

    fn validate(&self) -> PipelineResult<()> {
        let mut problems = Problems::default();
        problems.check(!self.scenes.is_empty(), || "no scene pairs".into());
        let mut names = BTreeSet::new();
        for s in &self.scenes {
            let what = format!("scene `{}`", s.name);
            let safe = !s.name.is_empty()
                && s.name.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))
                && s.name != "."
                && s.name != "..";
            problems.check(safe, || format!("{what}: name must be nonempty [A-Za-z0-9._-]"));
            problems.check(names.insert(s.name.as_str()), || format!("{what}: name is used twice"));
            s.gt.check(&format!("{what} gt"), &mut problems);
            match &s.coarse {
                CoarseSource::Jitter(jitter) => jitter.check(&what, &mut problems),
                CoarseSource::Scene { scene } => {
                    scene.check(&format!("{what} coarse"), &mut problems);
                    let ids = |c: &SceneConfig| c.persons.iter().map(|p| p.person_id).collect::<BTreeSet<_>>();
                    problems.check(ids(scene) == ids(&s.gt), || {
                        format!("{what}: coarse and gt scenes have different person ids")
                    });
                }
            }
        }
        self.image.check("image", &mut problems);
        problems.check(self.hemisphere.n > 0, || "hemisphere: at least one view".into());
        problems.check(self.hemisphere.radius > 0.0, || {
            format!("hemisphere: radius {} must be positive", self.hemisphere.radius)
        });
        problems.check((0.0..=1.0).contains(&self.split_fraction), || {
            format!("split_fraction {} outside [0, 1]", self.split_fraction)
        });
        problems.absorb("scl", self.scl.validate());
        problems.absorb("render", self.render.validate());
        problems.finish()
    }
}

pub fn make_refiner_pairs(config: &RefinerPairsConfig, out: &Path) -> PipelineResult<RefinerManifest> {
    config.validate()?;
    let renderer = Renderer::new(config.render)?;
    let splits = assign_splits(
        config.scenes.len(),
        config.split_fraction,
        &mut SeededRng::derived(config.seed, &[SPLIT_STREAM]),
    );
    let mut entries = Vec::new();
    let mut scenes = Vec::new();
    for (si, (pair, split)) in config.scenes.iter().zip(&splits).enumerate() {
        let gt = build_scene(&pair.gt)?;
        let coarse = match &pair.coarse {
            CoarseSource::Jitter(jitter) => {
                jitter_scene(&gt.scene, jitter, &mut SeededRng::derived(config.seed, &[JITTER_STREAM, si as u64]))
            }
            CoarseSource::Scene { scene } => build_scene(scene)?.scene,
        };
        let merged = Mesh::merge(gt.persons.iter().map(|p| &p.mesh));
        let look_at = gt.scene.centroid().ok_or_else(|| PipelineError::invalid(format!("scene `{}` is empty", pair.name)))?;
        let rig = crowdsplat_core::renderer::hemisphere_rig(
            config.hemisphere.n,
            config.hemisphere.radius,
            look_at,
            config.image.intrinsics(),
            config.image.width,
            config.image.height,
        )?;
        let dir = PathBuf::from(&pair.name);
        let rig_path = dir.join("rig.json");
        write_json(&out.join(&rig_path), &RigRecord::from(&rig))?;

        let mut scl_rng = SeededRng::derived(config.seed, &[SCL_STREAM, si as u64]);
        let kinds = (0..rig.cameras.len())
            .map(|_| scl_kind(&config.scl, &mut scl_rng))
            .collect::<Result<Vec<_>, _>>()?;
        let scene_entries = rig
            .cameras
            .par_iter()
            .zip(kinds)
            .enumerate()
            .map(|(v, (cam, kind))| -> PipelineResult<RefinerEntry> {
                let r_gt = dir.join(format!("view_{v:03}_gt.png"));
                let r_coarse = dir.join(format!("view_{v:03}_coarse.png"));
                let normal = dir.join(format!("view_{v:03}_normal.png"));
                write_png(&out.join(&r_gt), &renderer.render(&gt.scene, cam)?.rgb, BitDepth::Eight)?;
                write_png(&out.join(&r_coarse), &renderer.render(&coarse, cam)?.rgb, BitDepth::Eight)?;
                write_png(&out.join(&normal), &render_normal_map(&merged, cam), BitDepth::Sixteen)?;
                let input = match kind {
                    PairKind::Identity => r_gt.clone(),
                    PairKind::Degradation => r_coarse.clone(),
                };
                Ok(RefinerEntry {
                    scene: pair.name.clone(),
                    view: v,
                    split: *split,
                    kind,
                    target: r_gt.clone(),
                    input,
                    r_gt,
                    r_coarse,
                    normal,
                })
            })
            .collect::<PipelineResult<Vec<_>>>()?;
        entries.extend(scene_entries);
        scenes.push(SceneSummary {
            name: pair.name.clone(),
            split: *split,
            rig: rig_path,
        });
    }
    let train = splits.iter().filter(|s| **s == Split::Train).count();
    let manifest = RefinerManifest {
        version: MANIFEST_VERSION,
        seed: config.seed,
        encoding: "rgb: png 8-bit linear; normal: png 16-bit, (x+1)/2, (1-y)/2, (1-z)/2 in camera space".into(),
        split: SplitSummary {
            fraction: config.split_fraction,
            train,
            test: splits.len() - train,
        },
        scenes,
        entries,
        config: config.clone(),
    };
    write_json(&out.join(REFINER_MANIFEST), &manifest)?;
    Ok(manifest)
}
