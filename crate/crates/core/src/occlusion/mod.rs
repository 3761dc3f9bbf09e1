//! Procedural occlusion masks (keypoint ellipses, Bézier erasures, line cuts,
//! morphological smoothing) and occluded/full image pairs.

mod morphology;
mod shapes;

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::image::{ImageBuffer, ImageRole};
use crate::rng::SeededRng;
use crate::{Error, Result, Vec2, Vec3};

pub use morphology::{morph_close, morph_dilate, morph_erode};
pub use shapes::{bezier_mask, bezier_outline, bezier_point, ellipse_mask, line_cut_mask, line_value, BEZIER_SAMPLES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OcclusionConfig {
    pub k_max: usize,
    /// Semi-axis sampling range in pixels.
    pub axis_range: [f64; 2],
    /// Inclusive range of the Bézier curve count.
    pub n_b_range: [usize; 2],
    /// Band width sampling range in pixels.
    pub thickness_range: [f64; 2],
    pub line_prob: f64,
    pub max_line_area: f64,
    pub morph_kernel: usize,
    pub morph_close_iters: usize,
    pub morph_dilate_iters: usize,
    pub fill_color: [f64; 3],
}

impl Default for OcclusionConfig {
    fn default() -> Self {
        Self {
            k_max: 5,
            axis_range: [30.0, 100.0],
            n_b_range: [0, 5],
            thickness_range: [20.0, 60.0],
            line_prob: 0.5,
            max_line_area: 0.70,
            morph_kernel: 5,
            morph_close_iters: 1,
            morph_dilate_iters: 3,
            fill_color: [1.0, 1.0, 1.0],
        }
    }
}

impl OcclusionConfig {
    /// No components at all: every mask is empty.
    pub fn disabled() -> Self {
        Self {
            k_max: 0,
            n_b_range: [0, 0],
            line_prob: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(0.0..=1.0).contains(&self.line_prob) {
            problems.push(format!("line_prob {} outside [0, 1]", self.line_prob));
        }
        if !(self.max_line_area > 0.0 && self.max_line_area < 1.0) {
            problems.push(format!("max_line_area {} outside (0, 1)", self.max_line_area));
        }
        if !(self.axis_range[0] > 0.0 && self.axis_range[0] <= self.axis_range[1]) {
            problems.push(format!("axis_range {:?} invalid", self.axis_range));
        }
        if !(self.thickness_range[0] > 0.0 && self.thickness_range[0] <= self.thickness_range[1]) {
            problems.push(format!("thickness_range {:?} invalid", self.thickness_range));
        }
        if self.n_b_range[0] > self.n_b_range[1] {
            problems.push(format!("n_b_range {:?} invalid", self.n_b_range));
        }
        if self.morph_kernel == 0 || self.morph_kernel % 2 == 0 {
            problems.push(format!("morph_kernel {} must be odd", self.morph_kernel));
        }
        if !self.fill_color.iter().all(|c| (0.0..=1.0).contains(c)) {
            problems.push(format!("fill_color {:?} outside [0, 1]", self.fill_color));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllipseSpec {
    /// Index of the keypoint used as centre.
    pub keypoint: usize,
    pub center: [f64; 2],
    pub a_x: f64,
    pub a_y: f64,
    pub angle: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BezierSpec {
    pub c0: [f64; 2],
    pub c1: [f64; 2],
    pub c2: [f64; 2],
    pub thickness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineCutSpec {
    pub p1: [f64; 2],
    pub p2: [f64; 2],
    /// Preferred sign of `L(x, y)`, +1 or -1.
    pub side: i8,
}

/// Every sampled value of one occlusion mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskSpec {
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub ellipses: Vec<EllipseSpec>,
    pub beziers: Vec<BezierSpec>,
    pub line_cut: Option<LineCutSpec>,
}

impl MaskSpec {
    /// Draws a specification. Draw order: ellipse count; per ellipse the
    /// keypoint index, a_x, a_y, angle; curve count; per curve C0, C1, C2
    /// (x then y) and thickness; line coin; endpoints and side.
    pub fn sample(keypoints: &[Vec2], cfg: &OcclusionConfig, width: usize, height: usize, seed: u64) -> Self {
        let mut rng = SeededRng::new(seed);
        let (w, h) = (width as f64, height as f64);

        let mut ellipses = Vec::new();
        let count = rng.uniform_int(0, cfg.k_max);
        if !keypoints.is_empty() {
            for _ in 0..count {
                let keypoint = rng.uniform_int(0, keypoints.len() - 1);
                let a_x = rng.uniform(cfg.axis_range[0], cfg.axis_range[1]);
                let a_y = rng.uniform(cfg.axis_range[0], cfg.axis_range[1]);
                let angle = rng.uniform(0.0, TAU);
                let c = keypoints[keypoint];
                ellipses.push(EllipseSpec {
                    keypoint,
                    center: [c.x, c.y],
                    a_x,
                    a_y,
                    angle,
                });
            }
        }

        let n_b = rng.uniform_int(cfg.n_b_range[0], cfg.n_b_range[1]);
        let point = |rng: &mut SeededRng| [rng.uniform(0.0, w), rng.uniform(0.0, h)];
        let mut beziers = Vec::with_capacity(n_b);
        for _ in 0..n_b {
            let c0 = point(&mut rng);
            let c1 = point(&mut rng);
            let c2 = point(&mut rng);
            let thickness = rng.uniform(cfg.thickness_range[0], cfg.thickness_range[1]);
            beziers.push(BezierSpec { c0, c1, c2, thickness });
        }

        let line_cut = if rng.bernoulli(cfg.line_prob) {
            let p1 = point(&mut rng);
            let mut p2 = point(&mut rng);
            while p2 == p1 {
                p2 = point(&mut rng);
            }
            let side = if rng.bernoulli(0.5) { 1 } else { -1 };
            Some(LineCutSpec { p1, p2, side })
        } else {
            None
        };

        Self {
            seed,
            width,
            height,
            ellipses,
            beziers,
            line_cut,
        }
    }

    pub fn ellipse_component(&self) -> Vec<bool> {
        let mut m = vec![false; self.width * self.height];
        for e in &self.ellipses {
            shapes::ellipse_into(&mut m, self.width, self.height, Vec2::from(e.center), e.a_x, e.a_y, e.angle);
        }
        m
    }

    pub fn bezier_component(&self) -> Vec<bool> {
        let mut m = vec![false; self.width * self.height];
        for b in &self.beziers {
            match bezier_outline(Vec2::from(b.c0), Vec2::from(b.c1), Vec2::from(b.c2), b.thickness) {
                Some(outline) => shapes::fill_polygon_into(&mut m, self.width, self.height, &outline),
                None => log::warn!("zero-length bezier curve in mask spec {}", self.seed),
            }
        }
        m
    }

    pub fn line_component(&self, max_area: f64) -> Result<Vec<bool>> {
        match &self.line_cut {
            Some(l) => line_cut_mask(Vec2::from(l.p1), Vec2::from(l.p2), l.side, self.width, self.height, max_area),
            None => Ok(vec![false; self.width * self.height]),
        }
    }

    /// Union of all components before morphology.
    pub fn union_mask(&self, cfg: &OcclusionConfig) -> Result<Vec<bool>> {
        let mut m = self.ellipse_component();
        for (a, b) in m.iter_mut().zip(self.bezier_component()) {
            *a |= b;
        }
        for (a, b) in m.iter_mut().zip(self.line_component(cfg.max_line_area)?) {
            *a |= b;
        }
        Ok(m)
    }

    /// Union followed by closing and dilation.
    pub fn render(&self, cfg: &OcclusionConfig) -> Result<ImageBuffer> {
        let union = self.union_mask(cfg)?;
        let closed = morph_close(&union, self.width, self.height, cfg.morph_kernel, cfg.morph_close_iters)?;
        let dilated = morph_dilate(&closed, self.width, self.height, cfg.morph_kernel, cfg.morph_dilate_iters)?;
        Ok(mask_to_image(&dilated, self.width, self.height))
    }
}

pub fn mask_to_image(mask: &[bool], width: usize, height: usize) -> ImageBuffer {
    let data = mask.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect();
    ImageBuffer::from_data(width, height, 1, ImageRole::Mask, data).expect("mask buffer has matching size")
}

pub fn image_to_mask(image: &ImageBuffer) -> Vec<bool> {
    let c = image.channels();
    image.data().chunks(c).map(|p| p[0] >= 0.5).collect()
}

/// Samples and renders a full occlusion mask.
pub fn synthesize_mask(
    keypoints: &[Vec2],
    cfg: &OcclusionConfig,
    width: usize,
    height: usize,
    seed: u64,
) -> Result<(MaskSpec, ImageBuffer)> {
    cfg.validate()?;
    let spec = MaskSpec::sample(keypoints, cfg, width, height, seed);
    let mask = spec.render(cfg)?;
    Ok((spec, mask))
}

/// Replaces masked pixels with `fill`; other pixels are copied unchanged.
pub fn apply_mask(image: &ImageBuffer, mask: &ImageBuffer, fill: Vec3) -> Result<ImageBuffer> {
    if image.width() != mask.width() || image.height() != mask.height() {
        return Err(Error::Dimension(format!(
            "image is {}x{}, mask is {}x{}",
            image.width(),
            image.height(),
            mask.width(),
            mask.height()
        )));
    }
    if image.channels() != 3 {
        return Err(Error::Dimension(format!("expected rgb image, got {} channels", image.channels())));
    }
    let mut out = image.clone();
    let masked = image_to_mask(mask);
    for (px, m) in out.data_mut().chunks_mut(3).zip(masked) {
        if m {
            px.copy_from_slice(fill.as_slice());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn keypoints() -> Vec<Vec2> {
        vec![Vec2::new(100.0, 120.0), Vec2::new(60.0, 200.0), Vec2::new(150.0, 40.0)]
    }

    #[test]
    fn seeded_masks_are_reproducible() {
        let cfg = OcclusionConfig::default();
        let (s1, m1) = synthesize_mask(&keypoints(), &cfg, 192, 256, 42).unwrap();
        let (s2, m2) = synthesize_mask(&keypoints(), &cfg, 192, 256, 42).unwrap();
        assert_eq!(s1, s2);
        assert_eq!(m1.encode_png(crate::image::BitDepth::Eight).unwrap(), m2.encode_png(crate::image::BitDepth::Eight).unwrap());
    }

    #[test]
    fn disabled_config_gives_empty_mask() {
        for seed in 0..20 {
            let (spec, m) = synthesize_mask(&keypoints(), &OcclusionConfig::disabled(), 64, 64, seed).unwrap();
            assert!(spec.ellipses.is_empty() && spec.beziers.is_empty() && spec.line_cut.is_none());
            assert_eq!(m.mask_area(), 0);
        }
    }

    #[test]
    fn no_keypoints_means_no_ellipses() {
        for seed in 0..50 {
            let spec = MaskSpec::sample(&[], &OcclusionConfig::default(), 64, 64, seed);
            assert!(spec.ellipses.is_empty());
        }
    }

    #[test]
    fn final_mask_contains_every_component() {
        let cfg = OcclusionConfig::default();
        for seed in 0..10 {
            let (spec, mask) = synthesize_mask(&keypoints(), &cfg, 160, 160, seed).unwrap();
            let fin = image_to_mask(&mask);
            for comp in [spec.ellipse_component(), spec.bezier_component(), spec.line_component(cfg.max_line_area).unwrap()] {
                for (c, f) in comp.iter().zip(&fin) {
                    assert!(!c || *f);
                }
            }
        }
    }

    #[test]
    fn apply_mask_is_pointwise() {
        let img = ImageBuffer::from_data(4, 2, 3, ImageRole::Rgb, (0..24).map(|v| v as f64 / 24.0).collect()).unwrap();
        let zero = mask_to_image(&[false; 8], 4, 2);
        assert_eq!(apply_mask(&img, &zero, Vec3::repeat(1.0)).unwrap(), img);
        let ones = mask_to_image(&[true; 8], 4, 2);
        assert!(apply_mask(&img, &ones, Vec3::new(0.1, 0.2, 0.3)).unwrap().data().chunks(3).all(|p| p == [0.1, 0.2, 0.3]));
        let half: Vec<bool> = (0..8).map(|i| i % 4 < 2).collect();
        let out = apply_mask(&img, &mask_to_image(&half, 4, 2), Vec3::zeros()).unwrap();
        for (i, m) in half.iter().enumerate() {
            if !m {
                assert_eq!(out.pixel(i % 4, i / 4), img.pixel(i % 4, i / 4));
            }
        }
        assert!(apply_mask(&img, &mask_to_image(&[false; 4], 2, 2), Vec3::zeros()).is_err());
    }
}
