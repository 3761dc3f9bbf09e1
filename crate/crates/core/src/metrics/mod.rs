//! Image quality metrics and the composite losses used for self-distillation,
//! refiner scoring and Gaussian distillation.

mod features;
mod ssim;

use serde::{Deserialize, Serialize};

use crate::image::{ImageBuffer, ImageRole};
use crate::{Error, Result};

pub use features::{
    feature_distance, feature_distance_maps, gram_loss, gram_loss_maps, gram_matrix, ConvFeatureBank, FeatureExtractor,
    FeatureMap,
};
pub use ssim::{ssim, ssim_grad, SsimConfig};

/// `10 log10(max² / MSE)`; identical images give `f64::INFINITY`.
pub fn psnr(a: &ImageBuffer, b: &ImageBuffer, max: f64) -> Result<f64> {
    a.ensure_same_shape(b, "psnr inputs")?;
    let n = a.data().len();
    if n == 0 {
        return Err(Error::Dimension("psnr of empty images".into()));
    }
    let mse = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / n as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (max * max / mse).log10())
}

/// Weights of the view-consistency self-distillation loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelfDistillWeights {
    pub rgb: f64,
    pub ssim: f64,
}

impl Default for SelfDistillWeights {
    fn default() -> Self {
        Self { rgb: 1.0, ssim: 0.2 }
    }
}

/// Weights of the composite refiner loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefinerWeights {
    pub l2: f64,
    pub lpips: f64,
    pub ssim: f64,
    pub gram: f64,
}

impl Default for RefinerWeights {
    fn default() -> Self {
        Self {
            l2: 1.0,
            lpips: 1.0,
            ssim: 0.5,
            gram: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DistillWeights {
    pub ssim: f64,
}

impl Default for DistillWeights {
    fn default() -> Self {
        Self { ssim: 0.2 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub self_distill: SelfDistillWeights,
    pub refiner: RefinerWeights,
    pub distill: DistillWeights,
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.self_distill.rgb,
            self.self_distill.ssim,
            self.refiner.l2,
            self.refiner.lpips,
            self.refiner.ssim,
            self.refiner.gram,
            self.distill.ssim,
        ];
        if all.iter().all(|w| *w >= 0.0 && w.is_finite()) {
            Ok(())
        } else {
            Err(Error::Config(format!("loss weights must be nonnegative: {self:?}")))
        }
    }
}

/// Sum over views of `λ_rgb ‖clean - coarse‖₂ + λ_ssim (1 - SSIM)`, with the
/// norm taken over each view's flattened residual.
pub fn self_distill_loss(
    clean: &[ImageBuffer],
    coarse: &[ImageBuffer],
    weights: SelfDistillWeights,
    cfg: &SsimConfig,
) -> Result<f64> {
    if clean.len() != coarse.len() {
        return Err(Error::Dimension(format!("{} clean views vs {} coarse views", clean.len(), coarse.len())));
    }
    let mut total = 0.0;
    for (a, b) in clean.iter().zip(coarse) {
        a.ensure_same_shape(b, "self-distillation views")?;
        let norm = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        total += weights.rgb * norm + weights.ssim * (1.0 - ssim(a, b, cfg)?);
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefinerLoss {
    pub total: f64,
    /// Mean squared error.
    pub l2: f64,
    pub lpips: f64,
    /// `1 - SSIM`.
    pub ssim: f64,
    pub gram: f64,
}

/// Weighted sum of MSE, feature distance, `1 - SSIM` and Gram loss.
pub fn refiner_loss(
    out: &ImageBuffer,
    gt: &ImageBuffer,
    weights: RefinerWeights,
    fx: &dyn FeatureExtractor,
    cfg: &SsimConfig,
) -> Result<RefinerLoss> {
    out.ensure_same_shape(gt, "refiner loss inputs")?;
    let n = out.data().len().max(1) as f64;
    let l2 = out.data().iter().zip(gt.data()).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / n;
    let lpips = feature_distance(out, gt, fx)?;
    let ssim_term = 1.0 - ssim(out, gt, cfg)?;
    let gram = gram_loss(out, gt, fx)?;
    Ok(RefinerLoss {
        total: weights.l2 * l2 + weights.lpips * lpips + weights.ssim * ssim_term + weights.gram * gram,
        l2,
        lpips,
        ssim: ssim_term,
        gram,
    })
}

/// `mean |refined - rendered| + λ_ssim (1 - SSIM(rendered, refined))` and its
/// gradient with respect to `rendered`. The L1 subgradient at a tie is 0.
pub fn optim_loss(refined: &ImageBuffer, rendered: &ImageBuffer, lambda_ssim: f64, cfg: &SsimConfig) -> Result<(f64, ImageBuffer)> {
    rendered.ensure_same_shape(refined, "distillation loss inputs")?;
    let n = rendered.data().len();
    if n == 0 {
        return Err(Error::Dimension("empty images".into()));
    }
    let inv = 1.0 / n as f64;
    let l1 = rendered.data().iter().zip(refined.data()).map(|(r, t)| (r - t).abs()).sum::<f64>() * inv;
    let s = ssim(rendered, refined, cfg)?;
    let sg = ssim_grad(rendered, refined, cfg)?;
    let grad: Vec<f64> = rendered
        .data()
        .iter()
        .zip(refined.data())
        .zip(sg.data())
        .map(|((r, t), g)| {
            let sign = if r > t {
                1.0
            } else if r < t {
                -1.0
            } else {
                0.0
            };
            sign * inv - lambda_ssim * g
        })
        .collect();
    let grad = ImageBuffer::from_data(rendered.width(), rendered.height(), rendered.channels(), ImageRole::Rgb, grad)?;
    Ok((l1 + lambda_ssim * (1.0 - s), grad))
}
