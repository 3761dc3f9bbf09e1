//! Pluggable pseudo-ground-truth generators.

use std::path::Path;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::image::{BitDepth, ImageBuffer, ImageRole};
use crate::{Error, Result};

/// Maps a coarse render and its body normal map to an enhanced render of the
/// same size with values in `[0, 1]`.
pub trait Refiner: Send + Sync {
    fn name(&self) -> &str;
    fn refine(&self, rgb: &ImageBuffer, normal: &ImageBuffer) -> Result<ImageBuffer>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityRefiner;

impl Refiner for IdentityRefiner {
    fn name(&self) -> &str {
        "identity"
    }

    fn refine(&self, rgb: &ImageBuffer, _normal: &ImageBuffer) -> Result<ImageBuffer> {
        Ok(rgb.clone())
    }
}

/// `clamp(x + amount * (x - blur(x)), 0, 1)` with a Gaussian blur of
/// standard deviation `radius` pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnsharpRefiner {
    pub amount: f64,
    pub radius: f64,
}

impl UnsharpRefiner {
    pub fn new(amount: f64, radius: f64) -> Result<Self> {
        if !(amount >= 0.0 && amount.is_finite() && radius > 0.0 && radius.is_finite()) {
            return Err(Error::Config(format!("unsharp needs amount >= 0 and radius > 0, got ({amount}, {radius})")));
        }
        Ok(Self { amount, radius })
    }

    fn taps(&self) -> Vec<f64> {
        let r = (3.0 * self.radius).ceil() as i64;
        let raw: Vec<f64> = (-r..=r)
            .map(|d| (-(d * d) as f64 / (2.0 * self.radius * self.radius)).exp())
            .collect();
        let s: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / s).collect()
    }
}

/// `x - blur(x)` for one plane, summed as weighted differences so that a
/// constant plane yields exactly zero. Edges are clamped.
pub fn high_pass(plane: &[f64], width: usize, height: usize, taps: &[f64]) -> Vec<f64> {
    let r = (taps.len() / 2) as i64;
    let clamp = |v: i64, n: usize| v.clamp(0, n as i64 - 1) as usize;
    let mut row_blur = vec![0.0; plane.len()];
    let mut out = vec![0.0; plane.len()];
    for y in 0..height {
        for x in 0..width {
            let centre = plane[y * width + x];
            let mut blur = 0.0;
            let mut diff = 0.0;
            for (k, w) in taps.iter().enumerate() {
                let v = plane[y * width + clamp(x as i64 + k as i64 - r, width)];
                blur += w * v;
                diff += w * (centre - v);
            }
            row_blur[y * width + x] = blur;
            out[y * width + x] = diff;
        }
    }
    for y in 0..height {
        for x in 0..width {
            let centre = row_blur[y * width + x];
            let mut diff = 0.0;
            for (k, w) in taps.iter().enumerate() {
                diff += w * (centre - row_blur[clamp(y as i64 + k as i64 - r, height) * width + x]);
            }
            out[y * width + x] += diff;
        }
    }
    out
}

impl Refiner for UnsharpRefiner {
    fn name(&self) -> &str {
        "unsharp"
    }

    fn refine(&self, rgb: &ImageBuffer, _normal: &ImageBuffer) -> Result<ImageBuffer> {
        let taps = self.taps();
        let (w, h, c) = (rgb.width(), rgb.height(), rgb.channels());
        let mut out = rgb.clone();
        for ch in 0..c {
            let hp = high_pass(&rgb.plane(ch), w, h, &taps);
            for (p, d) in hp.iter().enumerate() {
                let v = out.data()[p * c + ch] + self.amount * d;
                out.data_mut()[p * c + ch] = v.clamp(0.0, 1.0);
            }
        }
        Ok(out)
    }
}

/// Runs `program [args..] <rgb.png> <normal.png> <out.png>` in a scratch
/// directory and reads back `out.png`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalRefiner {
    pub program: String,
    pub args: Vec<String>,
    pub timeout: Duration,
}

impl ExternalRefiner {
    pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(300);

    /// Splits `command` on whitespace into program and leading arguments.
    pub fn from_command(command: &str, timeout: Duration) -> Result<Self> {
        let mut parts = command.split_whitespace().map(str::to_owned);
        let program = parts
            .next()
            .ok_or_else(|| Error::Config("external refiner command is empty".into()))?;
        Ok(Self {
            program,
            args: parts.collect(),
            timeout,
        })
    }

    fn transcript(&self, dir: &Path, status: &str) -> String {
        let read = |name: &str| std::fs::read_to_string(dir.join(name)).unwrap_or_default();
        format!(
            "command: {} {}\nstatus: {status}\nstdout:\n{}\nstderr:\n{}",
            self.program,
            self.args.join(" "),
            read("stdout.txt"),
            read("stderr.txt")
        )
    }
}

impl Refiner for ExternalRefiner {
    fn name(&self) -> &str {
        &self.program
    }

    fn refine(&self, rgb: &ImageBuffer, normal: &ImageBuffer) -> Result<ImageBuffer> {
        let dir = tempfile::tempdir().map_err(|e| Error::io(std::env::temp_dir(), e))?;
        let rgb_path = dir.path().join("rgb.png");
        let normal_path = dir.path().join("normal.png");
        let out_path = dir.path().join("out.png");
        rgb.write_png(&rgb_path, BitDepth::Sixteen)?;
        normal.write_png(&normal_path, BitDepth::Sixteen)?;
        let stdout = std::fs::File::create(dir.path().join("stdout.txt")).map_err(|e| Error::io(dir.path(), e))?;
        let stderr = std::fs::File::create(dir.path().join("stderr.txt")).map_err(|e| Error::io(dir.path(), e))?;

        let fail = |message: String| Error::Refiner {
            refiner: self.program.clone(),
            view: 0,
            message,
        };
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .arg(&rgb_path)
            .arg(&normal_path)
            .arg(&out_path)
            .stdin(Stdio::null())
            .stdout(stdout)
            .stderr(stderr)
            .spawn()
            .map_err(|e| fail(format!("failed to start `{}`: {e}", self.program)))?;
        let start = Instant::now();
        let status = loop {
            match child.try_wait() {
                Ok(Some(status)) => break status,
                Ok(None) if start.elapsed() > self.timeout => {
                    let _ = child.kill();
                    let _ = child.wait();
                    return Err(fail(self.transcript(dir.path(), &format!("timed out after {:?}", self.timeout))));
                }
                Ok(None) => std::thread::sleep(Duration::from_millis(10)),
                Err(e) => return Err(fail(format!("wait failed: {e}"))),
            }
        };
        if !status.success() {
            return Err(fail(self.transcript(dir.path(), &status.to_string())));
        }
        if !out_path.exists() {
            return Err(fail(self.transcript(dir.path(), "exited 0 but wrote no output")));
        }
        let out = ImageBuffer::read_png(&out_path, ImageRole::Rgb)
            .map_err(|e| fail(format!("{e}\n{}", self.transcript(dir.path(), "unreadable output"))))?;
        if out.width() != rgb.width() || out.height() != rgb.height() || out.channels() != 3 {
            return Err(fail(format!(
                "output is {}x{}x{}, expected {}x{}x3\n{}",
                out.width(),
                out.height(),
                out.channels(),
                rgb.width(),
                rgb.height(),
                self.transcript(dir.path(), &status.to_string())
            )));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    fn random(w: usize, h: usize, seed: u64) -> ImageBuffer {
        let mut rng = SeededRng::new(seed);
        ImageBuffer::from_data(w, h, 3, ImageRole::Rgb, (0..w * h * 3).map(|_| rng.next_f64()).collect()).unwrap()
    }

    #[test]
    fn identity_is_bit_exact() {
        let a = random(9, 7, 0);
        assert_eq!(IdentityRefiner.refine(&a, &a).unwrap(), a);
    }

    #[test]
    fn unsharp_zero_amount_and_constant_input() {
        let a = random(9, 7, 1);
        assert_eq!(UnsharpRefiner::new(0.0, 1.5).unwrap().refine(&a, &a).unwrap(), a);
        let c = ImageBuffer::from_pixel(12, 10, ImageRole::Rgb, &[0.3, 0.55, 0.8]);
        assert_eq!(UnsharpRefiner::new(2.0, 2.0).unwrap().refine(&c, &c).unwrap(), c);
        assert!(UnsharpRefiner::new(1.0, 0.0).is_err());
    }

    #[test]
    fn command_is_split_on_whitespace() {
        let r = ExternalRefiner::from_command("python3 refine.py --fast", ExternalRefiner::DEFAULT_TIMEOUT).unwrap();
        assert_eq!(r.program, "python3");
        assert_eq!(r.args, ["refine.py", "--fast"]);
        assert!(ExternalRefiner::from_command("  ", ExternalRefiner::DEFAULT_TIMEOUT).is_err());
    }

    #[cfg(unix)]
    #[test]
    fn external_failures_carry_a_transcript() {
        let a = random(8, 8, 2);
        let bad = ExternalRefiner {
            program: "sh".into(),
            args: vec!["-c".into(), "echo nope >&2; exit 3".into(), "refiner".into()],
            timeout: Duration::from_secs(10),
        };
        match bad.refine(&a, &a) {
            Err(Error::Refiner { message, .. }) => assert!(message.contains("nope"), "{message}"),
            other => panic!("unexpected {other:?}"),
        }
        let copy = ExternalRefiner {
            program: "sh".into(),
            args: vec!["-c".into(), "cp \"$1\" \"$3\"".into(), "refiner".into()],
            timeout: Duration::from_secs(10),
        };
        let out = copy.refine(&a, &a).unwrap();
        assert!(out.data().iter().zip(a.data()).all(|(x, y)| (x - y).abs() <= 0.5 / 65535.0 + 1e-12));
    }
}
