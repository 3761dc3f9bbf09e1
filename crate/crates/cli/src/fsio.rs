//! File output through temp-then-rename, plus config loading.

use std::io::Write;
use std::path::{Path, PathBuf};

use crowdsplat_core::image::{BitDepth, ImageBuffer};
use crowdsplat_core::Error;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{PipelineError, PipelineResult};

/// Writes `bytes` to a temporary sibling of `path`, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> PipelineResult<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(tmp.path(), e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> PipelineResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path.display().to_string(), e))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn write_png(path: &Path, image: &ImageBuffer, depth: BitDepth) -> PipelineResult<()> {
    write_atomic(path, &image.encode_png(depth)?)
}

/// Reads a config file. A manifest from an earlier run is accepted too: its
/// `config` echo is used, so a run can be replayed from its own output.
pub fn load_config<T: DeserializeOwned>(path: &Path) -> PipelineResult<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| PipelineError::invalid(format!("cannot read config {}: {e}", path.display())))?;
    let mut value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| PipelineError::invalid(format!("{} is not valid json: {e}", path.display())))?;
    if let serde_json::Value::Object(map) = &mut value {
        if map.contains_key("version") {
            if let Some(echo) = map.remove("config") {
                value = echo;
            }
        }
    }
    serde_json::from_value(value).map_err(|e| PipelineError::invalid(format!("{}: {e}", path.display())))
}

/// Anchors a relative path at `base`, producing an absolute path so that
/// echoed configs stay valid wherever the manifest ends up.
pub fn resolve(base: &Path, path: &Path) -> PathBuf {
    let joined = if path.is_absolute() { path.to_path_buf() } else { base.join(path) };
    std::path::absolute(&joined).unwrap_or(joined)
}

/// Directory a config file lives in, for resolving its relative paths.
pub fn config_dir(config_path: &Path) -> PathBuf {
    match config_path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

/// Path of `path` relative to `base` when it lies below it.
pub fn relative_to(base: &Path, path: &Path) -> PathBuf {
    path.strip_prefix(base).map(Path::to_path_buf).unwrap_or_else(|_| path.to_path_buf())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_and_leaves_no_temp_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/out.txt");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"two");
        let names: Vec<_> = std::fs::read_dir(path.parent().unwrap()).unwrap().collect();
        assert_eq!(names.len(), 1);
    }

    #[test]
    fn manifest_config_echo_is_unwrapped() {
        #[derive(serde::Deserialize, Debug, PartialEq)]
        struct C {
            seed: u64,
        }
        let dir = tempfile::tempdir().unwrap();
        let raw = dir.path().join("raw.json");
        std::fs::write(&raw, r#"{"seed": 4}"#).unwrap();
        let manifest = dir.path().join("manifest.json");
        std::fs::write(&manifest, r#"{"version": 1, "entries": [], "config": {"seed": 9}}"#).unwrap();
        assert_eq!(load_config::<C>(&raw).unwrap(), C { seed: 4 });
        assert_eq!(load_config::<C>(&manifest).unwrap(), C { seed: 9 });
        let err = load_config::<C>(&dir.path().join("missing.json")).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
