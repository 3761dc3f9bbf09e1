//! Small config blocks shared by several commands.

use crowdsplat_core::renderer::{
    hemisphere_rig, orbit_rig, CameraRig, Intrinsics, DEFAULT_FOCAL, DEFAULT_RESOLUTION,
};
use crowdsplat_core::Vec3;
use serde::{Deserialize, Serialize};

use crate::error::Problems;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImageSpec {
    pub width: usize,
    pub height: usize,
    /// Focal length in pixels; the principal point is the image centre.
    pub focal: f64,
}

impl Default for ImageSpec {
    fn default() -> Self {
        Self {
            width: DEFAULT_RESOLUTION,
            height: DEFAULT_RESOLUTION,
            focal: DEFAULT_FOCAL,
        }
    }
}

impl ImageSpec {
    pub fn intrinsics(&self) -> Intrinsics {
        Intrinsics::centered(self.focal, self.width, self.height)
    }

    pub fn check(&self, what: &str, problems: &mut Problems) {
        problems.check(self.width > 0 && self.height > 0, || {
            format!("{what}: image size {}x{} must be positive", self.width, self.height)
        });
        problems.check(self.focal > 0.0 && self.focal.is_finite(), || {
            format!("{what}: focal {} must be positive", self.focal)
        });
    }
}

/// Camera rig centred on a look-at point chosen by the command.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum RigSpec {
    Orbit { n: usize, radius: f64, elevation: f64 },
    Hemisphere { n: usize, radius: f64 },
}

impl Default for RigSpec {
    fn default() -> Self {
        RigSpec::Orbit {
            n: 24,
            radius: 3.0,
            elevation: 0.0,
        }
    }
}

impl RigSpec {
    pub fn views(&self) -> usize {
        match *self {
            RigSpec::Orbit { n, .. } | RigSpec::Hemisphere { n, .. } => n,
        }
    }

    pub fn check(&self, what: &str, problems: &mut Problems) {
        let (n, radius) = match *self {
            RigSpec::Orbit { n, radius, .. } | RigSpec::Hemisphere { n, radius } => (n, radius),
        };
        problems.check(n > 0, || format!("{what}: rig needs at least one view"));
        problems.check(radius > 0.0 && radius.is_finite(), || {
            format!("{what}: rig radius {radius} must be positive")
        });
    }

    pub fn build(&self, look_at: Vec3, image: &ImageSpec) -> crowdsplat_core::Result<CameraRig> {
        let intr = image.intrinsics();
        match *self {
            RigSpec::Orbit { n, radius, elevation } => {
                orbit_rig(n, radius, elevation, look_at, intr, image.width, image.height)
            }
            RigSpec::Hemisphere { n, radius } => hemisphere_rig(n, radius, look_at, intr, image.width, image.height),
        }
    }
}
