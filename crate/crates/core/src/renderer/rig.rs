//! Orbit and hemisphere camera layouts.

use serde::{Deserialize, Serialize};

use super::camera::{Camera, CameraRecord, Intrinsics};
use crate::{Error, Result, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RigKind {
    Orbit,
    Hemisphere,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CameraRig {
    pub cameras: Vec<Camera>,
    pub kind: RigKind,
}

/// Highest camera elevation on the hemisphere rig, degrees.
pub const HEMISPHERE_MAX_ELEVATION_DEG: f64 = 85.0;

/// `n` cameras on a horizontal circle: camera `k` sits at azimuth `2 pi k / n`,
/// offset by `elevation` along world z, looking at `look_at` with z up.
pub fn orbit_rig(
    n: usize,
    radius: f64,
    elevation: f64,
    look_at: Vec3,
    intrinsics: Intrinsics,
    width: usize,
    height: usize,
) -> Result<CameraRig> {
    if n == 0 {
        return Err(Error::Config("orbit rig needs at least one camera".into()));
    }
    if !(radius > 0.0) {
        return Err(Error::Config(format!("orbit radius must be positive, got {radius}")));
    }
    let cameras = (0..n)
        .map(|k| {
            let a = std::f64::consts::TAU * k as f64 / n as f64;
            let eye = look_at + radius * Vec3::new(a.cos(), a.sin(), 0.0) + Vec3::new(0.0, 0.0, elevation);
            Camera::look_at(eye, look_at, Vec3::z(), intrinsics, width, height)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CameraRig {
        cameras,
        kind: RigKind::Orbit,
    })
}

/// `n` cameras on the upper hemisphere from a Fibonacci lattice: point `k`
/// has height `sin(85 deg) (k + 1/2) / n` on the unit sphere and azimuth
/// `k` times the golden angle, so elevations stay within `[0, 85]` degrees.
pub fn hemisphere_rig(
    n: usize,
    radius: f64,
    look_at: Vec3,
    intrinsics: Intrinsics,
    width: usize,
    height: usize,
) -> Result<CameraRig> {
    if n == 0 {
        return Err(Error::Config("hemisphere rig needs at least one camera".into()));
    }
    if !(radius > 0.0) {
        return Err(Error::Config(format!("hemisphere radius must be positive, got {radius}")));
    }
    let golden_angle = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let z_max = HEMISPHERE_MAX_ELEVATION_DEG.to_radians().sin();
    let cameras = (0..n)
        .map(|k| {
            let z = z_max * (k as f64 + 0.5) / n as f64;
            let ring = (1.0 - z * z).sqrt();
            let a = golden_angle * k as f64;
            let eye = look_at + radius * Vec3::new(ring * a.cos(), ring * a.sin(), z);
            Camera::look_at(eye, look_at, Vec3::z(), intrinsics, width, height)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CameraRig {
        cameras,
        kind: RigKind::Hemisphere,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RigRecord {
    pub rig_kind: RigKind,
    pub cameras: Vec<CameraRecord>,
}

impl From<&CameraRig> for RigRecord {
    fn from(rig: &CameraRig) -> Self {
        Self {
            rig_kind: rig.kind,
            cameras: rig.cameras.iter().map(CameraRecord::from).collect(),
        }
    }
}

impl TryFrom<&RigRecord> for CameraRig {
    type Error = Error;

    fn try_from(r: &RigRecord) -> Result<Self> {
        let cameras = r.cameras.iter().map(Camera::try_from).collect::<Result<Vec<_>>>()?;
        if cameras.is_empty() {
            return Err(Error::Config("rig has no cameras".into()));
        }
        let (w, h) = (cameras[0].width, cameras[0].height);
        if cameras.iter().any(|c| c.width != w || c.height != h) {
            return Err(Error::Config("rig cameras differ in image size".into()));
        }
        Ok(CameraRig {
            cameras,
            kind: r.rig_kind,
        })
    }
}
