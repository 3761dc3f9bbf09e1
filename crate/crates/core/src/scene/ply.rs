//! Binary little-endian PLY for Gaussian clouds, plus the scene manifest.
//!
//! Per point: `x y z scale_0..2 rot_0..3 opacity red green blue`, where the
//! scales are logarithmic, the rotation is a `wxyz` quaternion, opacity is a
//! logit and colours are linear floats in `[0, 1]`. Files are written with
//! `double` properties so parameters round-trip bit-exactly; `float`
//! properties are accepted on read.

use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::gaussian::normalize_quaternion;
use super::{CrowdScene, Gaussian, PersonGaussians, PersonId};
use crate::{Error, Result, Vec3};

const PROPERTIES: [&str; 14] = [
    "x", "y", "z", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3", "opacity", "red",
    "green", "blue",
];

pub const SCENE_MANIFEST_VERSION: u32 = 1;

pub fn encode_gaussians(gaussians: &[Gaussian]) -> Vec<u8> {
    let mut out = Vec::with_capacity(256 + gaussians.len() * PROPERTIES.len() * 8);
    out.extend_from_slice(b"ply\nformat binary_little_endian 1.0\n");
    out.extend_from_slice(format!("element vertex {}\n", gaussians.len()).as_bytes());
    for p in PROPERTIES {
        out.extend_from_slice(format!("property double {p}\n").as_bytes());
    }
    out.extend_from_slice(b"end_header\n");
    for g in gaussians {
        let values = [
            g.position.x,
            g.position.y,
            g.position.z,
            g.log_scale.x,
            g.log_scale.y,
            g.log_scale.z,
            g.rotation[0],
            g.rotation[1],
            g.rotation[2],
            g.rotation[3],
            g.opacity_logit,
            g.color.x,
            g.color.y,
            g.color.z,
        ];
        for v in values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn write_gaussians(path: &Path, gaussians: &[Gaussian]) -> Result<()> {
    std::fs::write(path, encode_gaussians(gaussians)).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy)]
enum Scalar {
    F32,
    F64,
}

pub fn decode_gaussians(reader: impl Read) -> Result<Vec<Gaussian>> {
    let mut reader = BufReader::new(reader);
    let mut line = String::new();
    let read_line = |reader: &mut BufReader<_>, line: &mut String| -> Result<()> {
        line.clear();
        let n = reader
            .read_line(line)
            .map_err(|e| Error::Ply(format!("reading header: {e}")))?;
        if n == 0 {
            return Err(Error::Ply("unexpected end of header".into()));
        }
        Ok(())
    };

    read_line(&mut reader, &mut line)?;
    if line.trim_end() != "ply" {
        return Err(Error::Ply("missing `ply` magic".into()));
    }
    let mut count = None;
    let mut props: Vec<(String, Scalar)> = Vec::new();
    let mut in_vertex = false;
    loop {
        read_line(&mut reader, &mut line)?;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.as_slice() {
            ["end_header"] => break,
            ["format", "binary_little_endian", _] => {}
            ["format", other, ..] => return Err(Error::Ply(format!("unsupported format `{other}`"))),
            ["comment", ..] | ["obj_info", ..] => {}
            ["element", "vertex", n] => {
                count = Some(n.parse::<usize>().map_err(|_| Error::Ply(format!("bad vertex count `{n}`")))?);
                in_vertex = true;
            }
            ["element", ..] => in_vertex = false,
            ["property", ty, name] if in_vertex => {
                let scalar = match *ty {
                    "float" | "float32" => Scalar::F32,
                    "double" | "float64" => Scalar::F64,
                    other => return Err(Error::Ply(format!("unsupported property type `{other}`"))),
                };
                props.push((name.to_string(), scalar));
            }
            ["property", ..] => {}
            _ => return Err(Error::Ply(format!("unrecognised header line `{}`", line.trim_end()))),
        }
    }
    let count = count.ok_or_else(|| Error::Ply("no vertex element".into()))?;
    let slot = |name: &str| -> Result<usize> {
        props
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| Error::Ply(format!("missing property `{name}`")))
    };
    let slots = PROPERTIES.iter().map(|p| slot(p)).collect::<Result<Vec<_>>>()?;

    let mut values = vec![0.0; props.len()];
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        for (k, (_, scalar)) in props.iter().enumerate() {
            values[k] = match scalar {
                Scalar::F32 => {
                    let mut b = [0u8; 4];
                    reader
                        .read_exact(&mut b)
                        .map_err(|_| Error::Ply(format!("truncated at vertex {i}")))?;
                    f32::from_le_bytes(b) as f64
                }
                Scalar::F64 => {
                    let mut b = [0u8; 8];
                    reader
                        .read_exact(&mut b)
                        .map_err(|_| Error::Ply(format!("truncated at vertex {i}")))?;
                    f64::from_le_bytes(b)
                }
            };
        }
        let v = |k: usize| values[slots[k]];
        // Unit quaternions are taken verbatim so files round-trip exactly.
        let q = [v(6), v(7), v(8), v(9)];
        let norm = q.iter().map(|c| c * c).sum::<f64>().sqrt();
        let rotation = if (norm - 1.0).abs() <= 1e-9 { q } else { normalize_quaternion(q) };
        out.push(Gaussian {
            position: Vec3::new(v(0), v(1), v(2)),
            log_scale: Vec3::new(v(3), v(4), v(5)),
            rotation,
            opacity_logit: v(10),
            color: Vec3::new(v(11), v(12), v(13)),
        });
    }
    Ok(out)
}

pub fn read_gaussians(path: &Path) -> Result<Vec<Gaussian>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    decode_gaussians(file).map_err(|e| match e {
        Error::Ply(msg) => Error::Ply(format!("{}: {msg}", path.display())),
        other => other,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestPerson {
    pub person_id: PersonId,
    /// Relative to the manifest's directory.
    pub ply: PathBuf,
    pub root_translation: [f64; 3],
    /// Optional skinned body mesh (JSON), relative to the manifest.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneManifest {
    pub version: u32,
    pub background: [f64; 3],
    pub persons: Vec<ManifestPerson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

impl SceneManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
    }

    /// Loads every person PLY relative to `base_dir`.
    pub fn load_scene(&self, base_dir: &Path) -> Result<CrowdScene> {
        let persons = self
            .persons
            .iter()
            .map(|p| {
                let gaussians = read_gaussians(&base_dir.join(&p.ply))?;
                PersonGaussians::new(p.person_id, gaussians, Vec3::from(p.root_translation))
            })
            .collect::<Result<Vec<_>>>()?;
        super::assemble_scene(persons, Vec3::from(self.background))
    }
}

/// Writes `person_<id>.ply` for each person and returns the matching manifest.
pub fn write_scene(dir: &Path, scene: &CrowdScene) -> Result<SceneManifest> {
    let mut persons = Vec::with_capacity(scene.persons.len());
    for p in &scene.persons {
        let name = PathBuf::from(format!("person_{}.ply", p.person_id));
        write_gaussians(&dir.join(&name), &p.gaussians)?;
        persons.push(ManifestPerson {
            person_id: p.person_id,
            ply: name,
            root_translation: p.root_translation.into(),
            mesh: None,
        });
    }
    Ok(SceneManifest {
        version: SCENE_MANIFEST_VERSION,
        background: scene.background.into(),
        persons,
        config: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arb_gaussian() -> impl Strategy<Value = Gaussian> {
        (
            prop::array::uniform3(-10.0f64..10.0),
            prop::array::uniform3(-6.0f64..1.0),
            prop::array::uniform4(-1.0f64..1.0),
            -8.0f64..8.0,
            prop::array::uniform3(0.0f64..1.0),
        )
            .prop_map(|(p, s, q, o, c)| Gaussian::new(p.into(), s.into(), q, o, c.into()))
    }

    proptest! {
        #[test]
        fn double_ply_round_trips_bit_exactly(gs in prop::collection::vec(arb_gaussian(), 1..40)) {
            let bytes = encode_gaussians(&gs);
            let back = decode_gaussians(bytes.as_slice()).unwrap();
            prop_assert_eq!(&back, &gs);
            prop_assert_eq!(encode_gaussians(&back), bytes);
        }
    }

    #[test]
    fn float_properties_are_accepted() {
        let mut bytes = b"ply\nformat binary_little_endian 1.0\nelement vertex 1\n".to_vec();
        for p in PROPERTIES {
            bytes.extend_from_slice(format!("property float {p}\n").as_bytes());
        }
        bytes.extend_from_slice(b"end_header\n");
        for i in 0..PROPERTIES.len() {
            bytes.extend_from_slice(&(i as f32 * 0.5).to_le_bytes());
        }
        let g = decode_gaussians(bytes.as_slice()).unwrap();
        assert_eq!(g[0].position, Vec3::new(0.0, 0.5, 1.0));
        assert_eq!(g[0].color.z, 6.5);
    }

    #[test]
    fn truncated_and_ascii_files_fail() {
        let g = Gaussian::new(Vec3::zeros(), Vec3::zeros(), [1.0, 0.0, 0.0, 0.0], 0.0, Vec3::zeros());
        let bytes = encode_gaussians(&[g, g]);
        assert!(decode_gaussians(&bytes[..bytes.len() - 3]).is_err());
        assert!(decode_gaussians(&b"ply\nformat ascii 1.0\nend_header\n"[..]).is_err());
    }
}
