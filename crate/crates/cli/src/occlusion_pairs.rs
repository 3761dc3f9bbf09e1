//! Occluded/full image pairs with clean multi-view targets per person.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use crowdsplat_core::image::BitDepth;
use crowdsplat_core::occlusion::{apply_mask, synthesize_mask, MaskSpec, OcclusionConfig};
use crowdsplat_core::renderer::{Camera, RenderConfig, Renderer};
use crowdsplat_core::rng::derive_seed;
use crowdsplat_core::Vec3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{PipelineResult, Problems};
use crate::fsio::{write_json, write_png};
use crate::scene::{build_scene, SceneConfig};
use crate::specs::{ImageSpec, RigSpec};
use crate::MANIFEST_VERSION;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OcclusionPairsConfig {
    pub scene: SceneConfig,
    #[serde(default)]
    pub image: ImageSpec,
    #[serde(default)]
    pub frontal: FrontalSpec,
    /// Clean target views around each person.
    #[serde(default)]
    pub clean_rig: RigSpec,
    #[serde(default)]
    pub occlusion: OcclusionConfig,
    #[serde(default)]
    pub render: RenderConfig,
    #[serde(default)]
    pub seed: u64,
}

/// Cameras in front of each person, fanned out horizontally around the
/// direction from the person towards the scene origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrontalSpec {
    pub views: usize,
    pub distance: f64,
    /// Total horizontal fan, degrees.
    pub spread_deg: f64,
}

impl Default for FrontalSpec {
    fn default() -> Self {
        Self {
            views: 1,
            distance: 3.0,
            spread_deg: 30.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcclusionEntry {
    pub id: String,
    pub person_id: u32,
    pub view: usize,
    pub mask_seed: u64,
    pub full: PathBuf,
    pub occluded: PathBuf,
    pub mask: PathBuf,
    pub spec: PathBuf,
    pub keypoints: usize,
    /// The person's clean target set, shared by all of its samples.
    pub clean_views: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcclusionManifest {
    pub version: u32,
    pub seed: u64,
    pub encoding: String,
    pub entries: Vec<OcclusionEntry>,
    pub config: OcclusionPairsConfig,
}

pub const OCCLUSION_MANIFEST: &str = "manifest.json";

impl OcclusionPairsConfig {
    pub fn resolve_paths(&mut self, base: &Path) {
        self.scene.resolve_paths(base);
    }

    fn validate(&self) -> PipelineResult<()> {
        let mut problems = Problems::default();
        self.scene.check("scene", &mut problems);
        self.image.check("image", &mut problems);
        self.clean_rig.check("clean_rig", &mut problems);
        problems.check(self.frontal.views > 0, || "frontal: at least one view".into());
        problems.check(self.frontal.distance > 0.0, || {
            format!("frontal: distance {} must be positive", self.frontal.distance)
        });
        problems.absorb("occlusion", self.occlusion.validate());
        problems.absorb("render", self.render.validate());
        problems.finish()
    }
}

/// Camera `k` of `frontal` looking at `center`.
fn frontal_camera(center: Vec3, k: usize, spec: &FrontalSpec, image: &ImageSpec) -> crowdsplat_core::Result<Camera> {
    let horizontal = Vec3::new(center.x, center.y, 0.0);
    let base = if horizontal.norm() > 1e-6 {
        (-horizontal.y).atan2(-horizontal.x)
    } else {
        -std::f64::consts::FRAC_PI_2
    };
    let offset = if spec.views > 1 {
        spec.spread_deg.to_radians() * (k as f64 / (spec.views - 1) as f64 - 0.5)
    } else {
        0.0
    };
    let a = base + offset;
    let eye = center + spec.distance * Vec3::new(a.cos(), a.sin(), 0.0);
    Camera::look_at(eye, center, Vec3::z(), image.intrinsics(), image.width, image.height)
}

/// Renders every person alone from its frontal cameras, occludes the render
/// with a mask seeded by `(seed, person, view)` and writes the clean orbit.
pub fn make_occlusion_pairs(config: &OcclusionPairsConfig, out: &Path) -> PipelineResult<OcclusionManifest> {
    config.validate()?;
    let built = build_scene(&config.scene)?;
    let renderer = Renderer::new(config.render)?;
    let fill = Vec3::from(config.occlusion.fill_color);
    let mut entries = Vec::new();
    for person in &built.persons {
        let id = person.person_id;
        let alone = built.scene.subset(&BTreeSet::from([id]));
        let center = alone.centroid().expect("person has gaussians");
        let pdir = PathBuf::from(format!("person_{id}"));

        let rig = config.clean_rig.build(center, &config.image)?;
        let clean: Vec<_> = rig
            .cameras
            .par_iter()
            .map(|cam| renderer.render(&alone, cam).map(|o| o.rgb))
            .collect::<Result<_, _>>()?;
        let mut clean_views = Vec::with_capacity(clean.len());
        for (v, img) in clean.iter().enumerate() {
            let rel = pdir.join(format!("clean_{v:03}.png"));
            write_png(&out.join(&rel), img, BitDepth::Eight)?;
            clean_views.push(rel);
        }

        let samples: Vec<_> = (0..config.frontal.views)
            .into_par_iter()
            .map(|view| -> PipelineResult<_> {
                let cam = frontal_camera(center, view, &config.frontal, &config.image)?;
                let full = renderer.render(&alone, &cam)?.rgb;
                let kps = built.model.projected_keypoints(&person.params, &cam)?;
                let mask_seed = derive_seed(config.seed, &[u64::from(id.0), view as u64]);
                let (spec, mask) = synthesize_mask(&kps.points, &config.occlusion, config.image.width, config.image.height, mask_seed)?;
                let occluded = apply_mask(&full, &mask, fill)?;
                Ok((view, cam, mask_seed, kps.points.len(), full, occluded, mask, spec))
            })
            .collect::<PipelineResult<_>>()?;
        for (view, cam, mask_seed, keypoints, full, occluded, mask, spec) in samples {
            let name = format!("{id}_{view:03}");
            let path = |suffix: &str| pdir.join(format!("{name}_{suffix}"));
            let entry = OcclusionEntry {
                id: name.clone(),
                person_id: id.0,
                view,
                mask_seed,
                full: path("full.png"),
                occluded: path("occ.png"),
                mask: path("mask.png"),
                spec: path("spec.json"),
                keypoints,
                clean_views: clean_views.clone(),
            };
            write_png(&out.join(&entry.full), &full, BitDepth::Eight)?;
            write_png(&out.join(&entry.occluded), &occluded, BitDepth::Eight)?;
            write_png(&out.join(&entry.mask), &mask, BitDepth::Eight)?;
            write_json(&out.join(&entry.spec), &MaskSpecRecord { spec, camera: (&cam).into() })?;
            entries.push(entry);
        }
    }
    let manifest = OcclusionManifest {
        version: MANIFEST_VERSION,
        seed: config.seed,
        encoding: "png, 8-bit, linear values".into(),
        entries,
        config: config.clone(),
    };
    write_json(&out.join(OCCLUSION_MANIFEST), &manifest)?;
    Ok(manifest)
}

/// Mask parameters plus the camera the sample was rendered from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskSpecRecord {
    pub spec: MaskSpec,
    pub camera: crowdsplat_core::renderer::CameraRecord,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crowdsplat_core::image::{ImageBuffer, ImageRole};

    fn small_config() -> OcclusionPairsConfig {
        serde_json::from_value(serde_json::json!({
            "scene": { "persons": [
                { "person_id": 3, "root_translation": [0.0, 0.0, 0.0], "color": { "kind": "flat", "rgb": [0.8, 0.2, 0.2] } },
                { "person_id": 5, "root_translation": [1.0, 0.5, 0.0] }
            ]},
            "image": { "width": 48, "height": 48, "focal": 40.0 },
            "frontal": { "views": 2 },
            "clean_rig": { "kind": "orbit", "n": 4, "radius": 3.0, "elevation": 0.5 },
            "occlusion": { "axis_range": [3.0, 10.0], "thickness_range": [2.0, 6.0] },
            "seed": 11
        }))
        .unwrap()
    }

    #[test]
    fn each_sample_lists_the_clean_views() {
        let dir = tempfile::tempdir().unwrap();
        let m = make_occlusion_pairs(&small_config(), dir.path()).unwrap();
        assert_eq!(m.entries.len(), 4);
        for e in &m.entries {
            assert_eq!(e.clean_views.len(), 4);
            for p in e.clean_views.iter().chain([&e.full, &e.occluded, &e.mask, &e.spec]) {
                assert!(dir.path().join(p).is_file(), "{}", p.display());
            }
        }
    }

    #[test]
    fn disabled_occlusion_leaves_images_untouched() {
        let mut cfg = small_config();
        cfg.occlusion = OcclusionConfig::disabled();
        let dir = tempfile::tempdir().unwrap();
        let m = make_occlusion_pairs(&cfg, dir.path()).unwrap();
        for e in &m.entries {
            let full = ImageBuffer::read_png(&dir.path().join(&e.full), ImageRole::Rgb).unwrap();
            let occ = ImageBuffer::read_png(&dir.path().join(&e.occluded), ImageRole::Rgb).unwrap();
            assert_eq!(full, occ);
        }
    }

    #[test]
    fn same_seed_gives_identical_files() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let m = make_occlusion_pairs(&small_config(), a.path()).unwrap();
        make_occlusion_pairs(&small_config(), b.path()).unwrap();
        for e in &m.entries {
            for p in [&e.full, &e.occluded, &e.mask, &e.spec] {
                assert_eq!(std::fs::read(a.path().join(p)).unwrap(), std::fs::read(b.path().join(p)).unwrap());
            }
        }
        assert_eq!(
            std::fs::read(a.path().join(OCCLUSION_MANIFEST)).unwrap(),
            std::fs::read(b.path().join(OCCLUSION_MANIFEST)).unwrap()
        );
    }
}
