//! Deterministic convolutional feature bank standing in for a pretrained
//! backbone, plus feature-space distances.

use crate::image::ImageBuffer;
use crate::rng::SeededRng;
use crate::{Error, Result};

/// Position-major feature map: `data[(y * width + x) * channels + c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height * channels {
            return Err(Error::Dimension(format!(
                "feature map of {} values for {width}x{height}x{channels}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn positions(&self) -> usize {
        self.width * self.height
    }

    fn at(&self, x: usize, y: usize) -> &[f64] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }
}

pub trait FeatureExtractor: Send + Sync {
    /// One map per layer.
    fn features(&self, image: &ImageBuffer) -> Result<Vec<FeatureMap>>;
    fn layer_weights(&self) -> &[f64];
}

/// Stack of 3x3 convolutions with absolute-value activations and 2x average
/// pooling between levels. Filters are drawn once from a seeded standard
/// normal stream and scaled by `1/sqrt(fan_in)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvFeatureBank {
    seed: u64,
    input_channels: usize,
    /// Per level: `[out][in][3][3]` flattened.
    filters: Vec<Vec<f64>>,
    widths: Vec<usize>,
    weights: Vec<f64>,
}

impl ConvFeatureBank {
    pub const LEVELS: usize = 3;
    pub const FILTERS: usize = 16;

    pub fn new(seed: u64) -> Self {
        Self::with_shape(seed, 3, Self::LEVELS, Self::FILTERS)
    }

    pub fn with_shape(seed: u64, input_channels: usize, levels: usize, filters: usize) -> Self {
        let mut rng = SeededRng::new(seed);
        let mut bank = Vec::with_capacity(levels);
        let mut widths = Vec::with_capacity(levels);
        let mut fan = input_channels;
        for _ in 0..levels {
            let scale = 1.0 / ((fan * 9) as f64).sqrt();
            bank.push((0..filters * fan * 9).map(|_| rng.normal() * scale).collect());
            widths.push(fan);
            fan = filters;
        }
        Self {
            seed,
            input_channels,
            filters: bank,
            widths,
            weights: vec![1.0; levels],
        }
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.filters.len() || weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::Config(format!(
                "expected {} nonnegative layer weights, got {weights:?}",
                self.filters.len()
            )));
        }
        self.weights = weights;
        Ok(self)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn conv_abs(&self, level: usize, input: &FeatureMap) -> FeatureMap {
        let cin = self.widths[level];
        let f = &self.filters[level];
        let cout = f.len() / (cin * 9);
        let (w, h) = (input.width, input.height);
        let mut out = vec![0.0; w * h * cout];
        for y in 0..h {
            for x in 0..w {
                let o = &mut out[(y * w + x) * cout..(y * w + x + 1) * cout];
                for ky in 0..3 {
                    let sy = (y + ky).saturating_sub(1).min(h - 1);
                    for kx in 0..3 {
                        let sx = (x + kx).saturating_sub(1).min(w - 1);
                        let px = input.at(sx, sy);
                        for (co, acc) in o.iter_mut().enumerate() {
                            let base = co * cin * 9 + ky * 3 + kx;
                            for (ci, v) in px.iter().enumerate() {
                                *acc += f[base + ci * 9] * v;
                            }
                        }
                    }
                }
                for v in o.iter_mut() {
                    *v = v.abs();
                }
            }
        }
        FeatureMap {
            width: w,
            height: h,
            channels: cout,
            data: out,
        }
    }
}

fn avg_pool(input: &FeatureMap) -> FeatureMap {
    let w = (input.width / 2).max(1);
    let h = (input.height / 2).max(1);
    let c = input.channels;
    let mut out = vec![0.0; w * h * c];
    for y in 0..h {
        for x in 0..w {
            let xs = 2 * x..(2 * x + 2).min(input.width);
            let ys = 2 * y..(2 * y + 2).min(input.height);
            let n = (xs.len() * ys.len()) as f64;
            let o = &mut out[(y * w + x) * c..(y * w + x + 1) * c];
            for sy in ys {
                for sx in xs.clone() {
                    for (acc, v) in o.iter_mut().zip(input.at(sx, sy)) {
                        *acc += v;
                    }
                }
            }
            for v in o.iter_mut() {
                *v /= n;
            }
        }
    }
    FeatureMap {
        width: w,
        height: h,
        channels: c,
        data: out,
    }
}

impl FeatureExtractor for ConvFeatureBank {
    fn features(&self, image: &ImageBuffer) -> Result<Vec<FeatureMap>> {
        if image.channels() != self.input_channels {
            return Err(Error::Dimension(format!(
                "feature bank expects {} channels, image has {}",
                self.input_channels,
                image.channels()
            )));
        }
        if image.width() == 0 || image.height() == 0 {
            return Err(Error::Dimension("empty image".into()));
        }
        let mut current = FeatureMap::new(image.width(), image.height(), image.channels(), image.data().to_vec())?;
        let mut out = Vec::with_capacity(self.filters.len());
        for level in 0..self.filters.len() {
            if level > 0 {
                current = avg_pool(&current);
            }
            current = self.conv_abs(level, &current);
            out.push(current.clone());
        }
        Ok(out)
    }

    fn layer_weights(&self) -> &[f64] {
        &self.weights
    }
}

fn check_layers(a: &[FeatureMap], b: &[FeatureMap], weights: &[f64]) -> Result<()> {
    if a.len() != b.len() || a.len() != weights.len() || a.is_empty() {
        return Err(Error::Dimension(format!(
            "layer mismatch: {} vs {} maps for {} weights",
            a.len(),
            b.len(),
            weights.len()
        )));
    }
    for (l, (x, y)) in a.iter().zip(b).enumerate() {
        if x.width != y.width || x.height != y.height || x.channels != y.channels {
            return Err(Error::Dimension(format!("layer {l} shapes differ")));
        }
    }
    Ok(())
}

/// `sum_l w_l * mean_pos |f_a/|f_a| - f_b/|f_b||^2` on given feature maps.
pub fn feature_distance_maps(a: &[FeatureMap], b: &[FeatureMap], weights: &[f64]) -> Result<f64> {
    check_layers(a, b, weights)?;
    let mut total = 0.0;
    for ((fa, fb), w) in a.iter().zip(b).zip(weights) {
        let mut layer = 0.0;
        for (pa, pb) in fa.data.chunks(fa.channels).zip(fb.data.chunks(fb.channels)) {
            let na = pa.iter().map(|v| v * v).sum::<f64>().sqrt() + 1e-10;
            let nb = pb.iter().map(|v| v * v).sum::<f64>().sqrt() + 1e-10;
            layer += pa.iter().zip(pb).map(|(x, y)| (x / na - y / nb).powi(2)).sum::<f64>();
        }
        total += w * layer / fa.positions() as f64;
    }
    Ok(total)
}

pub fn gram_matrix(f: &FeatureMap) -> Vec<f64> {
    let c = f.channels;
    let mut g = vec![0.0; c * c];
    for p in f.data.chunks(c) {
        for i in 0..c {
            for j in 0..c {
                g[i * c + j] += p[i] * p[j];
            }
        }
    }
    let n = f.positions() as f64;
    g.iter_mut().for_each(|v| *v /= n);
    g
}

/// `sum_l w_l * ||G_a - G_b||_F^2` on given feature maps.
pub fn gram_loss_maps(a: &[FeatureMap], b: &[FeatureMap], weights: &[f64]) -> Result<f64> {
    check_layers(a, b, weights)?;
    let mut total = 0.0;
    for ((fa, fb), w) in a.iter().zip(b).zip(weights) {
        let ga = gram_matrix(fa);
        let gb = gram_matrix(fb);
        total += w * ga.iter().zip(&gb).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
    }
    Ok(total)
}

pub fn feature_distance(a: &ImageBuffer, b: &ImageBuffer, fx: &dyn FeatureExtractor) -> Result<f64> {
    a.ensure_same_shape(b, "feature distance inputs")?;
    feature_distance_maps(&fx.features(a)?, &fx.features(b)?, fx.layer_weights())
}

pub fn gram_loss(a: &ImageBuffer, b: &ImageBuffer, fx: &dyn FeatureExtractor) -> Result<f64> {
    a.ensure_same_shape(b, "gram loss inputs")?;
    gram_loss_maps(&fx.features(a)?, &fx.features(b)?, fx.layer_weights())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::ImageRole;

    fn random(w: usize, h: usize, seed: u64) -> ImageBuffer {
        let mut rng = SeededRng::new(seed);
        ImageBuffer::from_data(w, h, 3, ImageRole::Rgb, (0..w * h * 3).map(|_| rng.next_f64()).collect()).unwrap()
    }

    #[test]
    fn bank_is_seed_deterministic() {
        assert_eq!(ConvFeatureBank::new(5), ConvFeatureBank::new(5));
        assert_ne!(ConvFeatureBank::new(5), ConvFeatureBank::new(6));
        let maps = ConvFeatureBank::new(5).features(&random(20, 12, 0)).unwrap();
        assert_eq!(maps.len(), 3);
        assert_eq!((maps[0].width, maps[0].height, maps[0].channels), (20, 12, 16));
        assert_eq!((maps[2].width, maps[2].height), (5, 3));
    }

    #[test]
    fn distances_vanish_on_identical_inputs() {
        let fx = ConvFeatureBank::new(1);
        let a = random(16, 16, 2);
        assert_eq!(feature_distance(&a, &a, &fx).unwrap(), 0.0);
        assert_eq!(gram_loss(&a, &a, &fx).unwrap(), 0.0);
    }

    #[test]
    fn distances_are_symmetric() {
        let fx = ConvFeatureBank::new(1);
        let a = random(16, 16, 3);
        let b = random(16, 16, 4);
        assert_eq!(feature_distance(&a, &b, &fx).unwrap(), feature_distance(&b, &a, &fx).unwrap());
        assert!(feature_distance(&a, &b, &fx).unwrap() > 0.0);
        assert!((gram_loss(&a, &b, &fx).unwrap() - gram_loss(&b, &a, &fx).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn zero_weights_give_zero() {
        let fx = ConvFeatureBank::new(1).with_weights(vec![0.0; 3]).unwrap();
        let a = random(16, 16, 3);
        let b = random(16, 16, 4);
        assert_eq!(feature_distance(&a, &b, &fx).unwrap(), 0.0);
        assert_eq!(gram_loss(&a, &b, &fx).unwrap(), 0.0);
        assert!(ConvFeatureBank::new(1).with_weights(vec![1.0]).is_err());
    }

    #[test]
    fn gram_is_position_invariant() {
        let mut rng = SeededRng::new(9);
        let (w, h, c) = (5, 4, 3);
        let data: Vec<f64> = (0..w * h * c).map(|_| rng.normal()).collect();
        let f = FeatureMap::new(w, h, c, data.clone()).unwrap();
        let perm = rng.permutation(w * h);
        let shuffled: Vec<f64> = perm.iter().flat_map(|&p| data[p * c..(p + 1) * c].to_vec()).collect();
        let g = FeatureMap::new(w, h, c, shuffled).unwrap();
        for (x, y) in gram_matrix(&f).iter().zip(gram_matrix(&g)) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!(gram_loss_maps(&[f], &[g], &[1.0]).unwrap() < 1e-20);
    }

    #[test]
    fn scalar_gram_closed_form() {
        let (ca, cb, w) = (0.7, 0.3, 2.5);
        let fa = FeatureMap::new(4, 4, 1, vec![ca; 16]).unwrap();
        let fb = FeatureMap::new(4, 4, 1, vec![cb; 16]).unwrap();
        let loss = gram_loss_maps(&[fa], &[fb], &[w]).unwrap();
        let expected = w * (ca * ca - cb * cb).powi(2);
        assert!((loss - expected).abs() < 1e-12);
    }

    #[test]
    fn layer_mismatch_is_an_error() {
        let f = FeatureMap::new(2, 2, 1, vec![0.0; 4]).unwrap();
        assert!(feature_distance_maps(&[f.clone()], &[f.clone(), f], &[1.0]).is_err());
    }
}
