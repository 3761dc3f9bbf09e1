//! Scene configs standing in for upstream pose estimates, and their
//! conversion into Gaussian crowd scenes.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use crowdsplat_core::body_model::{BodyModelData, BodyParams, Mesh};
use crowdsplat_core::image::{ImageBuffer, ImageRole};
use crowdsplat_core::renderer::{Camera, CameraRecord};
use crowdsplat_core::scene::ply::{encode_gaussians, ManifestPerson, SceneManifest, SCENE_MANIFEST_VERSION};
use crowdsplat_core::scene::{assemble_scene, init_gaussians_from_mesh, CrowdScene, PersonGaussians, PersonId};
use crowdsplat_core::{Error, Vec3};
use serde::{Deserialize, Serialize};

use crate::error::{PipelineError, PipelineResult, Problems};
use crate::fsio::{resolve, write_atomic, write_json};

pub const BUILTIN_TOY: &str = "builtin:toy";

/// File name of the scene manifest inside a scene directory.
pub const SCENE_MANIFEST: &str = "scene.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    /// `builtin:toy` or a path to a body model JSON file.
    #[serde(default = "default_body_model")]
    pub body_model: String,
    #[serde(default = "default_background")]
    pub background: [f64; 3],
    #[serde(default)]
    pub seed: u64,
    /// Gaussian scale as a fraction of the mean incident edge length.
    #[serde(default = "default_per_vertex_scale")]
    pub per_vertex_scale: f64,
    pub persons: Vec<PersonConfig>,
}

fn default_body_model() -> String {
    BUILTIN_TOY.into()
}

fn default_background() -> [f64; 3] {
    [1.0, 1.0, 1.0]
}

fn default_per_vertex_scale() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PersonConfig {
    pub person_id: PersonId,
    /// Shape coefficients; empty means all zero.
    #[serde(default)]
    pub shape: Vec<f64>,
    /// Axis-angle per joint; empty means the rest pose.
    #[serde(default)]
    pub pose: Vec<[f64; 3]>,
    pub root_translation: [f64; 3],
    #[serde(default)]
    pub color: ColorSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ColorSource {
    Flat {
        rgb: [f64; 3],
    },
    /// 3D checkerboard over person-local vertex positions, `cell` metres wide.
    Checker {
        a: [f64; 3],
        b: [f64; 3],
        cell: f64,
    },
    /// Colors sampled by projecting each vertex into an image.
    Image {
        path: PathBuf,
        camera: CameraRecord,
    },
}

impl Default for ColorSource {
    fn default() -> Self {
        ColorSource::Flat { rgb: [0.6, 0.6, 0.6] }
    }
}

/// Color given to vertices that project outside the source image.
const OUTSIDE_IMAGE_COLOR: [f64; 3] = [0.5, 0.5, 0.5];

impl SceneConfig {
    /// Anchors relative file references at `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        if self.body_model != BUILTIN_TOY {
            self.body_model = resolve(base, Path::new(&self.body_model)).display().to_string();
        }
        for p in &mut self.persons {
            if let ColorSource::Image { path, .. } = &mut p.color {
                *path = resolve(base, path);
            }
        }
    }

    pub fn load_body_model(&self) -> PipelineResult<BodyModelData> {
        if self.body_model == BUILTIN_TOY {
            Ok(BodyModelData::toy())
        } else {
            Ok(BodyModelData::load(Path::new(&self.body_model))?)
        }
    }

    /// Checks everything that can be checked without a body model.
    pub fn check(&self, what: &str, problems: &mut Problems) {
        if self.body_model != BUILTIN_TOY {
            problems.check(Path::new(&self.body_model).is_file(), || {
                format!("{what}: body model file {} does not exist", self.body_model)
            });
        }
        problems.check(self.background.iter().all(|c| (0.0..=1.0).contains(c)), || {
            format!("{what}: background {:?} outside [0, 1]", self.background)
        });
        problems.check(self.per_vertex_scale > 0.0 && self.per_vertex_scale.is_finite(), || {
            format!("{what}: per_vertex_scale {} must be positive", self.per_vertex_scale)
        });
        problems.check(!self.persons.is_empty(), || format!("{what}: no persons"));
        let mut seen = BTreeSet::new();
        for p in &self.persons {
            let who = format!("{what}: person {}", p.person_id);
            problems.check(seen.insert(p.person_id), || format!("{who} is listed more than once"));
            problems.check(p.root_translation.iter().all(|v| v.is_finite()), || {
                format!("{who}: root translation is not finite")
            });
            match &p.color {
                ColorSource::Flat { rgb } => check_color(&who, rgb, problems),
                ColorSource::Checker { a, b, cell } => {
                    check_color(&who, a, problems);
                    check_color(&who, b, problems);
                    problems.check(*cell > 0.0, || format!("{who}: checker cell {cell} must be positive"));
                }
                ColorSource::Image { path, camera } => {
                    problems.check(path.is_file(), || {
                        format!("{who}: color image {} does not exist", path.display())
                    });
                    problems.absorb(&who, Camera::try_from(camera).map(drop));
                }
            }
        }
    }

    /// Checks parameter counts against the model.
    pub fn check_against(&self, what: &str, model: &BodyModelData, problems: &mut Problems) {
        for p in &self.persons {
            let who = format!("{what}: person {}", p.person_id);
            let s = model.num_shape_coeffs();
            problems.check(p.shape.is_empty() || p.shape.len() == s, || {
                format!("{who}: {} shape coefficients, model has {s}", p.shape.len())
            });
            let j = model.num_joints();
            problems.check(p.pose.is_empty() || p.pose.len() == j, || {
                format!("{who}: {} joint rotations, model has {j} joints", p.pose.len())
            });
        }
    }

    pub fn validate(&self, what: &str) -> PipelineResult<BodyModelData> {
        let mut problems = Problems::default();
        self.check(what, &mut problems);
        let model = match self.load_body_model() {
            Ok(m) => Some(m),
            Err(e) => {
                if self.body_model == BUILTIN_TOY || Path::new(&self.body_model).is_file() {
                    problems.push(format!("{what}: {e}"));
                }
                None
            }
        };
        if let Some(m) = &model {
            self.check_against(what, m, &mut problems);
        }
        problems.finish()?;
        Ok(model.expect("model loaded when validation passed"))
    }
}

fn check_color(who: &str, c: &[f64; 3], problems: &mut Problems) {
    problems.check(c.iter().all(|v| (0.0..=1.0).contains(v)), || format!("{who}: color {c:?} outside [0, 1]"));
}

impl PersonConfig {
    pub fn params(&self, model: &BodyModelData) -> BodyParams {
        let rest = BodyParams::rest(model);
        BodyParams {
            shape: if self.shape.is_empty() { rest.shape } else { self.shape.clone() },
            pose: if self.pose.is_empty() { rest.pose } else { self.pose.clone() },
            root_translation: self.root_translation,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuiltPerson {
    pub person_id: PersonId,
    pub params: BodyParams,
    /// Skinned mesh in world (camera) space.
    pub mesh: Mesh,
}

#[derive(Debug, Clone)]
pub struct BuiltScene {
    pub scene: CrowdScene,
    pub model: BodyModelData,
    pub persons: Vec<BuiltPerson>,
}

impl BuiltScene {
    pub fn meshes(&self) -> BTreeMap<PersonId, Mesh> {
        self.persons.iter().map(|p| (p.person_id, p.mesh.clone())).collect()
    }
}

/// Skins every person, seeds one Gaussian per vertex in the person-local
/// frame and assembles the crowd.
pub fn build_scene(config: &SceneConfig) -> PipelineResult<BuiltScene> {
    let model = config.validate("scene")?;
    let mut persons = Vec::with_capacity(config.persons.len());
    let mut built = Vec::with_capacity(config.persons.len());
    for p in &config.persons {
        let params = p.params(&model);
        let mesh = model.skin(&params)?;
        let t = params.translation();
        let local = mesh.translated(-t);
        let colors = vertex_colors(&p.color, &mesh, &local)?;
        let gaussians = init_gaussians_from_mesh(&local, config.per_vertex_scale, &colors)?;
        persons.push(PersonGaussians::new(p.person_id, gaussians, t)?);
        built.push(BuiltPerson {
            person_id: p.person_id,
            params,
            mesh,
        });
    }
    let scene = assemble_scene(persons, Vec3::from(config.background))?;
    Ok(BuiltScene {
        scene,
        model,
        persons: built,
    })
}

fn vertex_colors(source: &ColorSource, world: &Mesh, local: &Mesh) -> PipelineResult<Vec<Vec3>> {
    Ok(match source {
        ColorSource::Flat { rgb } => vec![Vec3::from(*rgb); world.vertices.len()],
        ColorSource::Checker { a, b, cell } => local
            .vertices
            .iter()
            .map(|v| {
                let parity = v.iter().map(|c| (c / cell).floor() as i64).sum::<i64>().rem_euclid(2);
                Vec3::from(if parity == 0 { *a } else { *b })
            })
            .collect(),
        ColorSource::Image { path, camera } => {
            let image = ImageBuffer::read_png(path, ImageRole::Rgb)?;
            let camera = Camera::try_from(camera)?;
            if image.channels() < 3 {
                return Err(PipelineError::invalid(format!(
                    "color image {} has {} channels, need rgb",
                    path.display(),
                    image.channels()
                )));
            }
            let mut outside = 0usize;
            let colors = world
                .vertices
                .iter()
                .map(|v| {
                    let pc = camera.to_camera(v);
                    let px = camera.project(&pc);
                    let (x, y) = (px.x.round(), px.y.round());
                    if pc.z > 0.0 && x >= 0.0 && y >= 0.0 && (x as usize) < image.width() && (y as usize) < image.height() {
                        let p = image.pixel(x as usize, y as usize);
                        Vec3::new(p[0], p[1], p[2])
                    } else {
                        outside += 1;
                        Vec3::from(OUTSIDE_IMAGE_COLOR)
                    }
                })
                .collect();
            if outside > 0 {
                log::warn!("{outside} vertices project outside {}", path.display());
            }
            colors
        }
    })
}

pub fn ply_name(id: PersonId) -> PathBuf {
    PathBuf::from(format!("person_{id}.ply"))
}

pub fn mesh_name(id: PersonId) -> PathBuf {
    PathBuf::from(format!("person_{id}_mesh.json"))
}

/// Writes one PLY per person, an optional mesh JSON per person and the scene
/// manifest. Returns the manifest.
pub fn write_scene_dir(
    dir: &Path,
    scene: &CrowdScene,
    meshes: &BTreeMap<PersonId, Mesh>,
    config_echo: serde_json::Value,
) -> PipelineResult<SceneManifest> {
    let mut persons = Vec::with_capacity(scene.persons.len());
    for p in &scene.persons {
        let ply = ply_name(p.person_id);
        write_atomic(&dir.join(&ply), &encode_gaussians(&p.gaussians))?;
        let mesh = match meshes.get(&p.person_id) {
            Some(m) => {
                let name = mesh_name(p.person_id);
                write_json(&dir.join(&name), m)?;
                Some(name)
            }
            None => None,
        };
        persons.push(ManifestPerson {
            person_id: p.person_id,
            ply,
            root_translation: p.root_translation.into(),
            mesh,
        });
    }
    let manifest = SceneManifest {
        version: SCENE_MANIFEST_VERSION,
        background: scene.background.into(),
        persons,
        config: Some(config_echo),
    };
    write_json(&dir.join(SCENE_MANIFEST), &manifest)?;
    Ok(manifest)
}

/// Scene plus world-space meshes read back from a scene manifest.
pub fn load_scene_dir(manifest_path: &Path) -> PipelineResult<(SceneManifest, CrowdScene, BTreeMap<PersonId, Mesh>)> {
    let manifest = SceneManifest::read(manifest_path).map_err(|e| match e {
        Error::Io { .. } => PipelineError::invalid(format!("cannot read scene manifest {}", manifest_path.display())),
        other => PipelineError::invalid(other.to_string()),
    })?;
    if manifest.persons.is_empty() {
        return Err(PipelineError::invalid(format!("scene manifest {} lists no persons", manifest_path.display())));
    }
    let base = crate::fsio::config_dir(manifest_path);
    let mut problems = Problems::default();
    for p in &manifest.persons {
        for f in std::iter::once(&p.ply).chain(p.mesh.as_ref()) {
            problems.check(base.join(f).is_file(), || {
                format!("person {}: {} does not exist", p.person_id, base.join(f).display())
            });
        }
    }
    problems.finish()?;
    let scene = manifest.load_scene(&base)?;
    let mut meshes = BTreeMap::new();
    for p in &manifest.persons {
        if let Some(f) = &p.mesh {
            let path = base.join(f);
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let mesh: Mesh = serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))?;
            meshes.insert(p.person_id, mesh);
        }
    }
    Ok((manifest, scene, meshes))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn person(id: u32, t: [f64; 3]) -> PersonConfig {
        PersonConfig {
            person_id: PersonId(id),
            shape: vec![],
            pose: vec![],
            root_translation: t,
            color: ColorSource::Flat { rgb: [0.2, 0.4, 0.8] },
        }
    }

    fn config(persons: Vec<PersonConfig>) -> SceneConfig {
        serde_json::from_value(serde_json::json!({ "persons": persons })).unwrap()
    }

    #[test]
    fn flat_color_person_gets_one_gaussian_per_vertex() {
        let built = build_scene(&config(vec![person(1, [0.0, 0.0, 0.0])])).unwrap();
        let p = &built.scene.persons[0];
        assert_eq!(p.gaussians.len(), built.model.num_vertices());
        assert!(p.gaussians.iter().all(|g| g.color == Vec3::new(0.2, 0.4, 0.8)));
    }

    #[test]
    fn root_translations_differ_exactly() {
        let built = build_scene(&config(vec![person(1, [0.5, 0.0, 0.0]), person(2, [2.5, 0.0, 0.0])])).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let m = write_scene_dir(dir.path(), &built.scene, &built.meshes(), serde_json::Value::Null).unwrap();
        let d: Vec<f64> = (0..3).map(|k| m.persons[1].root_translation[k] - m.persons[0].root_translation[k]).collect();
        assert_eq!(d, vec![2.0, 0.0, 0.0]);
        let (_, back, meshes) = load_scene_dir(&dir.path().join(SCENE_MANIFEST)).unwrap();
        assert_eq!(back, built.scene);
        assert_eq!(meshes, built.meshes());
    }

    #[test]
    fn validation_errors_are_enumerated_together() {
        let mut bad = person(1, [0.0; 3]);
        bad.shape = vec![0.0; 99];
        bad.color = ColorSource::Flat { rgb: [2.0, 0.0, 0.0] };
        let mut cfg = config(vec![bad, person(1, [1.0, 0.0, 0.0])]);
        cfg.background = [0.0, -1.0, 0.0];
        match build_scene(&cfg) {
            Err(PipelineError::Validation(v)) => {
                assert!(v.iter().any(|m| m.contains("more than once")), "{v:?}");
                assert!(v.iter().any(|m| m.contains("shape coefficients")), "{v:?}");
                assert!(v.iter().any(|m| m.contains("background")), "{v:?}");
                assert!(v.iter().any(|m| m.contains("color [2.0")), "{v:?}");
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn missing_files_are_reported() {
        let mut cfg = config(vec![person(1, [0.0; 3])]);
        cfg.body_model = "/nonexistent/model.json".into();
        cfg.persons[0].color = ColorSource::Image {
            path: "/nonexistent/tex.png".into(),
            camera: CameraRecord {
                fx: 10.0,
                fy: 10.0,
                cx: 4.0,
                cy: 4.0,
                width: 8,
                height: 8,
                extrinsics: [[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]],
            },
        };
        match build_scene(&cfg) {
            Err(PipelineError::Validation(v)) => {
                assert_eq!(v.iter().filter(|m| m.contains("does not exist")).count(), 2, "{v:?}");
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn checker_alternates_colors() {
        let mut p = person(1, [0.0; 3]);
        p.color = ColorSource::Checker {
            a: [0.0; 3],
            b: [1.0; 3],
            cell: 0.1,
        };
        let built = build_scene(&config(vec![p])).unwrap();
        let colors: BTreeSet<u64> = built.scene.persons[0].gaussians.iter().map(|g| g.color.x.to_bits()).collect();
        assert_eq!(colors.len(), 2);
    }
}
