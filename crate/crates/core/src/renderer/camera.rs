use serde::{Deserialize, Serialize};

use crate::{Error, Mat3, Result, Vec2, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    /// `fx = fy = focal`, principal point at the image centre.
    pub fn centered(focal: f64, width: usize, height: usize) -> Self {
        Self {
            fx: focal,
            fy: focal,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
        }
    }
}

/// Pinhole camera. Camera space is x right, y down, z forward; pixel `(i, j)`
/// is sampled at image coordinates `(i, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// World-to-camera rotation.
    pub rotation: Mat3,
    /// World-to-camera translation.
    pub translation: Vec3,
    pub width: usize,
    pub height: usize,
}

impl Camera {
    pub fn new(intrinsics: Intrinsics, rotation: Mat3, translation: Vec3, width: usize, height: usize) -> Result<Self> {
        if !(intrinsics.fx > 0.0 && intrinsics.fy > 0.0) {
            return Err(Error::Camera(format!(
                "focal lengths must be positive, got ({}, {})",
                intrinsics.fx, intrinsics.fy
            )));
        }
        if width == 0 || height == 0 {
            return Err(Error::Camera("zero-sized image".into()));
        }
        let err = (rotation.transpose() * rotation - Mat3::identity()).abs().max();
        if !(err <= 1e-6) || rotation.determinant() < 0.0 {
            return Err(Error::Camera(format!("rotation is not orthonormal (error {err:e})")));
        }
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::Camera("non-finite translation".into()));
        }
        Ok(Self {
            fx: intrinsics.fx,
            fy: intrinsics.fy,
            cx: intrinsics.cx,
            cy: intrinsics.cy,
            rotation,
            translation,
            width,
            height,
        })
    }

    /// Camera at `eye` looking at `target`, with `up` mapped to image-up.
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3, intrinsics: Intrinsics, width: usize, height: usize) -> Result<Self> {
        let forward = target - eye;
        let len = forward.norm();
        if !(len > 0.0) {
            return Err(Error::Camera("eye coincides with look-at target".into()));
        }
        let forward = forward / len;
        let right = forward.cross(&up);
        let rn = right.norm();
        if rn < 1e-9 * up.norm().max(1.0) {
            return Err(Error::Camera("look direction is parallel to the up vector".into()));
        }
        let right = right / rn;
        let down = forward.cross(&right);
        let rotation = Mat3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let translation = -(rotation * eye);
        Self::new(intrinsics, rotation, translation, width, height)
    }

    pub fn intrinsics(&self) -> Intrinsics {
        Intrinsics {
            fx: self.fx,
            fy: self.fy,
            cx: self.cx,
            cy: self.cy,
        }
    }

    /// Camera centre in world space.
    pub fn position(&self) -> Vec3 {
        -(self.rotation.transpose() * self.translation)
    }

    pub fn to_camera(&self, world: &Vec3) -> Vec3 {
        self.rotation * world + self.translation
    }

    /// Pinhole projection of a camera-space point.
    pub fn project(&self, cam: &Vec3) -> Vec2 {
        Vec2::new(self.fx * cam.x / cam.z + self.cx, self.fy * cam.y / cam.z + self.cy)
    }
}

/// JSON form: intrinsics plus the three rows of `[R | t]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraRecord {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    pub extrinsics: [[f64; 4]; 3],
}

impl From<&Camera> for CameraRecord {
    fn from(c: &Camera) -> Self {
        let row = |i: usize| {
            [
                c.rotation[(i, 0)],
                c.rotation[(i, 1)],
                c.rotation[(i, 2)],
                c.translation[i],
            ]
        };
        Self {
            fx: c.fx,
            fy: c.fy,
            cx: c.cx,
            cy: c.cy,
            width: c.width,
            height: c.height,
            extrinsics: [row(0), row(1), row(2)],
        }
    }
}

impl TryFrom<&CameraRecord> for Camera {
    type Error = Error;

    fn try_from(r: &CameraRecord) -> Result<Self> {
        let e = &r.extrinsics;
        let rotation = Mat3::new(
            e[0][0], e[0][1], e[0][2], e[1][0], e[1][1], e[1][2], e[2][0], e[2][1], e[2][2],
        );
        let translation = Vec3::new(e[0][3], e[1][3], e[2][3]);
        Camera::new(
            Intrinsics {
                fx: r.fx,
                fy: r.fy,
                cx: r.cx,
                cy: r.cy,
            },
            rotation,
            translation,
            r.width,
            r.height,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn look_at_points_forward_axis_at_target() {
        let cam = Camera::look_at(
            Vec3::new(2.0, 0.0, 0.0),
            Vec3::zeros(),
            Vec3::z(),
            Intrinsics::centered(100.0, 64, 64),
            64,
            64,
        )
        .unwrap();
        let pc = cam.to_camera(&Vec3::zeros());
        assert!((pc - Vec3::new(0.0, 0.0, 2.0)).norm() < 1e-12);
        // World up projects above the centre (smaller v).
        let up = cam.project(&cam.to_camera(&Vec3::new(0.0, 0.0, 0.5)));
        assert!(up.y < 32.0);
        assert!((cam.position() - Vec3::new(2.0, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn parallel_up_is_rejected() {
        let r = Camera::look_at(Vec3::new(0.0, 0.0, 3.0), Vec3::zeros(), Vec3::z(), Intrinsics::centered(1.0, 8, 8), 8, 8);
        assert!(r.is_err());
    }

    #[test]
    fn rejects_bad_intrinsics_and_rotation() {
        let i = Intrinsics { fx: -1.0, fy: 1.0, cx: 0.0, cy: 0.0 };
        assert!(Camera::new(i, Mat3::identity(), Vec3::zeros(), 4, 4).is_err());
        let i = Intrinsics::centered(10.0, 4, 4);
        assert!(Camera::new(i, Mat3::identity() * 1.1, Vec3::zeros(), 4, 4).is_err());
    }

    #[test]
    fn record_round_trip() {
        let cam = Camera::look_at(
            Vec3::new(1.0, 2.0, 0.5),
            Vec3::new(0.0, 0.0, 1.0),
            Vec3::z(),
            Intrinsics::centered(500.0, 512, 512),
            512,
            512,
        )
        .unwrap();
        let rec = CameraRecord::from(&cam);
        let back = Camera::try_from(&rec).unwrap();
        assert_eq!(back, cam);
    }
}
