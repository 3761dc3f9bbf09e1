//! Dataset factories and command implementations behind the `crowdsplat`
//! binary. Every command validates its whole config up front, writes files
//! through temp-then-rename and records its effective config in the manifest
//! it produces, so a manifest can be fed back as `--config` to replay a run.

pub mod error;
pub mod eval;
pub mod fsio;
pub mod occlusion_pairs;
pub mod refine;
pub mod refiner_pairs;
pub mod scene;
pub mod specs;

use std::path::Path;

use crowdsplat_core::scene::ply::SceneManifest;

pub use error::{ErrorRecord, PipelineError, PipelineResult};
pub use eval::{eval_command, EvalConfig, EvalReport};
pub use occlusion_pairs::{make_occlusion_pairs, OcclusionManifest, OcclusionPairsConfig};
pub use refine::{refine_command, RefineConfig, RefineReport, RefinerSpec};
pub use refiner_pairs::{make_refiner_pairs, RefinerManifest, RefinerPairsConfig};
pub use scene::{build_scene, BuiltScene, SceneConfig};
pub use specs::{ImageSpec, RigSpec};

/// Version stamped into every manifest and report this crate writes.
pub const MANIFEST_VERSION: u32 = 1;

/// Builds the scene and writes PLYs, meshes and `scene.json` into `out`.
pub fn build_scene_command(config: &SceneConfig, out: &Path) -> PipelineResult<SceneManifest> {
    let built = build_scene(config)?;
    let echo = serde_json::to_value(config).map_err(|e| crowdsplat_core::Error::json("scene config", e))?;
    scene::write_scene_dir(out, &built.scene, &built.meshes(), echo)
}
