//! Deterministic core of single-image multi-person Gaussian reconstruction.
//!
//! The crate is organised around the data flow of a crowd scene:
//!
//! - [`body_model`]: parametric body evaluation (blendshapes, joint regression,
//!   linear blend skinning) and keypoint projection.
//! - [`scene`]: Gaussian clouds grouped per person, crowd assembly, DBSCAN
//!   grouping of persons and PLY serialization.
//! - [`renderer`]: tile-based differentiable splatting with an analytic
//!   backward pass, normal-map rasterization and camera rigs.
//! - [`occlusion`]: procedural occlusion masks and occluded/full image pairs.
//! - [`metrics`]: PSNR, SSIM (with gradient), feature-space distances and the
//!   composite losses.
//! - [`distill`]: pseudo-ground-truth generation through a pluggable refiner
//!   and gradient descent of the Gaussians against refined targets.

pub mod body_model;
pub mod distill;
pub mod error;
pub mod image;
pub mod metrics;
pub mod occlusion;
pub mod renderer;
pub mod rng;
pub mod scene;

#[cfg(any(test, feature = "oracle"))]
pub mod oracle;

pub use error::{Error, Result};

pub type Vec2 = nalgebra::Vector2<f64>;
pub type Vec3 = nalgebra::Vector3<f64>;
pub type Mat3 = nalgebra::Matrix3<f64>;
