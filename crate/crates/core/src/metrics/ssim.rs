use serde::{Deserialize, Serialize};

use crate::image::{ImageBuffer, ImageRole};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SsimConfig {
    /// Side of the square Gaussian window, odd.
    pub window: usize,
    pub sigma: f64,
    /// Dynamic range of the pixel values.
    pub max: f64,
    pub k1: f64,
    pub k2: f64,
}

impl Default for SsimConfig {
    fn default() -> Self {
        Self {
            window: 11,
            sigma: 1.5,
            max: 1.0,
            k1: 0.01,
            k2: 0.03,
        }
    }
}

impl SsimConfig {
    pub fn c1(&self) -> f64 {
        (self.k1 * self.max).powi(2)
    }

    pub fn c2(&self) -> f64 {
        (self.k2 * self.max).powi(2)
    }

    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.window % 2 == 0 || !(self.sigma > 0.0) || !(self.c1() > 0.0) || !(self.c2() > 0.0) {
            return Err(Error::Config(format!("invalid ssim config {self:?}")));
        }
        Ok(())
    }

    /// Normalised 1D Gaussian taps.
    pub fn taps(&self) -> Vec<f64> {
        let r = (self.window / 2) as f64;
        let raw: Vec<f64> = (0..self.window)
            .map(|i| {
                let d = i as f64 - r;
                (-d * d / (2.0 * self.sigma * self.sigma)).exp()
            })
            .collect();
        let sum: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / sum).collect()
    }
}

/// Valid-mode separable correlation of a single plane.
struct Window {
    taps: Vec<f64>,
    w: usize,
    h: usize,
    ow: usize,
    oh: usize,
}

impl Window {
    fn new(cfg: &SsimConfig, w: usize, h: usize) -> Result<Self> {
        cfg.validate()?;
        if w < cfg.window || h < cfg.window {
            return Err(Error::Dimension(format!(
                "image {w}x{h} is smaller than the {0}x{0} ssim window",
                cfg.window
            )));
        }
        Ok(Self {
            taps: cfg.taps(),
            w,
            h,
            ow: w - cfg.window + 1,
            oh: h - cfg.window + 1,
        })
    }

    fn conv(&self, plane: &[f64]) -> Vec<f64> {
        let k = self.taps.len();
        let mut rows = vec![0.0; self.ow * self.h];
        for y in 0..self.h {
            for x in 0..self.ow {
                let mut s = 0.0;
                for t in 0..k {
                    s += self.taps[t] * plane[y * self.w + x + t];
                }
                rows[y * self.ow + x] = s;
            }
        }
        let mut out = vec![0.0; self.ow * self.oh];
        for y in 0..self.oh {
            for x in 0..self.ow {
                let mut s = 0.0;
                for t in 0..k {
                    s += self.taps[t] * rows[(y + t) * self.ow + x];
                }
                out[y * self.ow + x] = s;
            }
        }
        out
    }

    /// Transpose of `conv`: scatters a window map back onto the image grid.
    fn conv_adjoint(&self, map: &[f64]) -> Vec<f64> {
        let k = self.taps.len();
        let mut rows = vec![0.0; self.ow * self.h];
        for y in 0..self.oh {
            for x in 0..self.ow {
                let v = map[y * self.ow + x];
                for t in 0..k {
                    rows[(y + t) * self.ow + x] += self.taps[t] * v;
                }
            }
        }
        let mut out = vec![0.0; self.w * self.h];
        for y in 0..self.h {
            for x in 0..self.ow {
                let v = rows[y * self.ow + x];
                for t in 0..k {
                    out[y * self.w + x + t] += self.taps[t] * v;
                }
            }
        }
        out
    }
}

struct Moments {
    mu_a: Vec<f64>,
    mu_b: Vec<f64>,
    m_aa: Vec<f64>,
    m_bb: Vec<f64>,
    m_ab: Vec<f64>,
}

fn moments(win: &Window, a: &[f64], b: &[f64]) -> Moments {
    let aa: Vec<f64> = a.iter().map(|v| v * v).collect();
    let bb: Vec<f64> = b.iter().map(|v| v * v).collect();
    let ab: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    Moments {
        mu_a: win.conv(a),
        mu_b: win.conv(b),
        m_aa: win.conv(&aa),
        m_bb: win.conv(&bb),
        m_ab: win.conv(&ab),
    }
}

fn check_pair(a: &ImageBuffer, b: &ImageBuffer) -> Result<()> {
    a.ensure_same_shape(b, "ssim inputs")
}

/// Per-window terms `(A1, B1, A2, B2)` with `ssim = A1 A2 / (B1 B2)`.
#[inline]
fn terms(m: &Moments, i: usize, c1: f64, c2: f64) -> (f64, f64, f64, f64) {
    let (ma, mb) = (m.mu_a[i], m.mu_b[i]);
    let a1 = 2.0 * ma * mb + c1;
    let b1 = ma * ma + mb * mb + c1;
    let a2 = 2.0 * (m.m_ab[i] - ma * mb) + c2;
    let b2 = (m.m_aa[i] - ma * ma) + (m.m_bb[i] - mb * mb) + c2;
    (a1, b1, a2, b2)
}

/// Mean SSIM over all valid windows and channels.
pub fn ssim(a: &ImageBuffer, b: &ImageBuffer, cfg: &SsimConfig) -> Result<f64> {
    check_pair(a, b)?;
    let win = Window::new(cfg, a.width(), a.height())?;
    let (c1, c2) = (cfg.c1(), cfg.c2());
    let mut total = 0.0;
    for c in 0..a.channels() {
        let m = moments(&win, &a.plane(c), &b.plane(c));
        for i in 0..m.mu_a.len() {
            let (a1, b1, a2, b2) = terms(&m, i, c1, c2);
            total += (a1 * a2) / (b1 * b2);
        }
    }
    Ok(total / (win.ow * win.oh * a.channels()) as f64)
}

/// Gradient of [`ssim`] with respect to `a`.
///
/// Arranged so that every window term cancels exactly when `a == b`, giving a
/// bitwise-zero gradient at the optimum.
pub fn ssim_grad(a: &ImageBuffer, b: &ImageBuffer, cfg: &SsimConfig) -> Result<ImageBuffer> {
    check_pair(a, b)?;
    let win = Window::new(cfg, a.width(), a.height())?;
    let (c1, c2) = (cfg.c1(), cfg.c2());
    let channels = a.channels();
    let norm = 1.0 / (win.ow * win.oh * channels) as f64;
    let mut out = vec![0.0; a.data().len()];
    for c in 0..channels {
        let pa = a.plane(c);
        let pb = b.plane(c);
        let m = moments(&win, &pa, &pb);
        let n = m.mu_a.len();
        let mut g_mu = vec![0.0; n];
        let mut g_aa = vec![0.0; n];
        let mut g_ab = vec![0.0; n];
        for i in 0..n {
            let (a1, b1, a2, b2) = terms(&m, i, c1, c2);
            let (ma, mb) = (m.mu_a[i], m.mu_b[i]);
            let l = a1 / b1;
            let s = a2 / b2;
            let dl = (2.0 * mb * b1 - a1 * (2.0 * ma)) / (b1 * b1);
            let ds = (a2 * (2.0 * ma) - 2.0 * mb * b2) / (b2 * b2);
            g_mu[i] = (dl * s + l * ds) * norm;
            let t = l / (b2 * b2) * norm;
            g_aa[i] = -(t * a2);
            g_ab[i] = 2.0 * (t * b2);
        }
        let cmu = win.conv_adjoint(&g_mu);
        let caa = win.conv_adjoint(&g_aa);
        let cab = win.conv_adjoint(&g_ab);
        for p in 0..pa.len() {
            out[p * channels + c] = cmu[p] + (2.0 * pa[p] * caa[p] + pb[p] * cab[p]);
        }
    }
    ImageBuffer::from_data(a.width(), a.height(), channels, ImageRole::Rgb, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::central_difference;
    use crate::rng::SeededRng;

    fn random(w: usize, h: usize, seed: u64) -> ImageBuffer {
        let mut rng = SeededRng::new(seed);
        let data = (0..w * h * 3).map(|_| rng.next_f64()).collect();
        ImageBuffer::from_data(w, h, 3, ImageRole::Rgb, data).unwrap()
    }

    #[test]
    fn identical_images_score_one() {
        let a = random(20, 17, 1);
        assert_eq!(ssim(&a, &a, &SsimConfig::default()).unwrap(), 1.0);
    }

    #[test]
    fn constant_images_match_closed_form() {
        let cfg = SsimConfig::default();
        let a = ImageBuffer::from_pixel(16, 16, ImageRole::Rgb, &[0.2; 3]);
        let b = ImageBuffer::from_pixel(16, 16, ImageRole::Rgb, &[0.4; 3]);
        let c1 = cfg.c1();
        let expected = (2.0 * 0.2 * 0.4 + c1) / (0.04 + 0.16 + c1);
        let got = ssim(&a, &b, &cfg).unwrap();
        assert!((got - expected).abs() < 1e-6, "{got} vs {expected}");
        assert!((got - 0.80010).abs() < 1e-5);
    }

    #[test]
    fn symmetric_in_arguments() {
        for seed in 0..10 {
            let a = random(16, 16, seed);
            let b = random(16, 16, seed + 100);
            let cfg = SsimConfig::default();
            assert!((ssim(&a, &b, &cfg).unwrap() - ssim(&b, &a, &cfg).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn too_small_is_rejected() {
        let a = random(10, 16, 0);
        assert!(ssim(&a, &a, &SsimConfig::default()).is_err());
    }

    #[test]
    fn gradient_is_zero_at_identity() {
        let a = random(16, 16, 3);
        let g = ssim_grad(&a, &a, &SsimConfig::default()).unwrap();
        assert!(g.data().iter().all(|v| *v == 0.0));
        let c = ImageBuffer::from_pixel(16, 16, ImageRole::Rgb, &[0.3, 0.6, 0.9]);
        assert!(ssim_grad(&c, &c, &SsimConfig::default()).unwrap().data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let cfg = SsimConfig::default();
        let a = random(16, 16, 7);
        let b = random(16, 16, 8);
        let g = ssim_grad(&a, &b, &cfg).unwrap();
        let f = |x: &[f64]| {
            let img = ImageBuffer::from_data(16, 16, 3, ImageRole::Rgb, x.to_vec()).unwrap();
            ssim(&img, &b, &cfg).unwrap()
        };
        for k in (0..a.data().len()).step_by(7) {
            let fd = central_difference(f, a.data(), k, 1e-4);
            let an = g.data()[k];
            assert!((fd - an).abs() <= (1e-3 * fd.abs().max(an.abs())).max(1e-6), "k={k}: {fd} vs {an}");
        }
    }

    #[test]
    fn gradient_is_local_to_touching_windows() {
        // Only windows starting at x, y <= 2 see pixel (2, 2); they span at
        // most 12 pixels.
        let cfg = SsimConfig::default();
        let a = random(32, 32, 11);
        let b = random(32, 32, 12);
        let mut a2 = a.clone();
        a2.set(2, 2, 0, 0.5 * a.get(2, 2, 0) + 0.25);
        let g1 = ssim_grad(&a, &b, &cfg).unwrap();
        let g2 = ssim_grad(&a2, &b, &cfg).unwrap();
        for y in 0..32 {
            for x in 0..32 {
                if x > 12 || y > 12 {
                    assert_eq!(g1.get(x, y, 0), g2.get(x, y, 0));
                }
            }
        }
    }
}
