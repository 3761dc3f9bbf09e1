//! Image-quality tables comparing two directories of renders.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crowdsplat_core::distill::float_json;
use crowdsplat_core::image::{ImageBuffer, ImageRole};
use crowdsplat_core::metrics::{feature_distance, psnr, ssim, ConvFeatureBank, SsimConfig};
use crowdsplat_core::Error;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{PipelineError, PipelineResult, Problems};
use crate::fsio::{resolve, write_atomic, write_json};
use crate::MANIFEST_VERSION;

pub const EVAL_JSON: &str = "eval.json";
pub const EVAL_TEXT: &str = "eval.txt";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub a: PathBuf,
    pub b: PathBuf,
    #[serde(default)]
    pub extractor_seed: u64,
    #[serde(default)]
    pub ssim: SsimConfig,
}

impl EvalConfig {
    pub fn resolve_paths(&mut self, base: &Path) {
        self.a = resolve(base, &self.a);
        self.b = resolve(base, &self.b);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub name: String,
    #[serde(with = "float_json")]
    pub psnr: f64,
    pub ssim: f64,
    pub feature_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub version: u32,
    pub rows: Vec<EvalRow>,
    /// Means over rows; PSNR averages finite rows only and is infinite when
    /// every row is.
    pub mean: EvalRow,
    pub config: EvalConfig,
}

fn png_names(dir: &Path) -> PipelineResult<BTreeSet<String>> {
    let entries = std::fs::read_dir(dir)
        .map_err(|e| PipelineError::invalid(format!("cannot list {}: {e}", dir.display())))?;
    let mut names = BTreeSet::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.to_ascii_lowercase().ends_with(".png") && entry.path().is_file() {
            names.insert(name);
        }
    }
    Ok(names)
}

/// Drops alpha or replicates gray so the result has three channels.
fn to_rgb(image: ImageBuffer) -> crowdsplat_core::Result<ImageBuffer> {
    let (w, h, c) = (image.width(), image.height(), image.channels());
    match c {
        3 => Ok(image),
        1 | 4 => {
            let data = image
                .data()
                .chunks(c)
                .flat_map(|p| if c >= 3 { [p[0], p[1], p[2]] } else { [p[0]; 3] })
                .collect();
            ImageBuffer::from_data(w, h, 3, ImageRole::Rgb, data)
        }
        _ => Err(Error::Dimension(format!("unsupported channel count {c}"))),
    }
}

pub fn eval_command(config: &EvalConfig, out: &Path) -> PipelineResult<EvalReport> {
    let mut problems = Problems::default();
    problems.absorb("ssim", config.ssim.validate());
    let (names_a, names_b) = (png_names(&config.a), png_names(&config.b));
    for (dir, names) in [(&config.a, &names_a), (&config.b, &names_b)] {
        if let Err(e) = names {
            problems.push(format!("{}: {e}", dir.display()));
        }
    }
    if let (Ok(a), Ok(b)) = (&names_a, &names_b) {
        for n in a.difference(b) {
            problems.push(format!("{n} is in {} but missing from {}", config.a.display(), config.b.display()));
        }
        for n in b.difference(a) {
            problems.push(format!("{n} is in {} but missing from {}", config.b.display(), config.a.display()));
        }
        problems.check(!a.is_empty() || !b.is_empty(), || "no png images to compare".into());
    }
    problems.finish()?;
    let names: Vec<String> = names_a.expect("listed").into_iter().collect();

    let bank = ConvFeatureBank::new(config.extractor_seed);
    let rows = names
        .par_iter()
        .map(|name| -> crowdsplat_core::Result<EvalRow> {
            let a = to_rgb(ImageBuffer::read_png(&config.a.join(name), ImageRole::Rgb)?)?;
            let b = to_rgb(ImageBuffer::read_png(&config.b.join(name), ImageRole::Rgb)?)?;
            a.ensure_same_shape(&b, name)?;
            Ok(EvalRow {
                name: name.clone(),
                psnr: psnr(&a, &b, 1.0)?,
                ssim: ssim(&a, &b, &config.ssim)?,
                feature_distance: feature_distance(&a, &b, &bank)?,
            })
        })
        .collect::<crowdsplat_core::Result<Vec<_>>>()?;

    let n = rows.len() as f64;
    let finite: Vec<f64> = rows.iter().map(|r| r.psnr).filter(|p| p.is_finite()).collect();
    let mean = EvalRow {
        name: "mean".into(),
        psnr: if finite.is_empty() {
            f64::INFINITY
        } else {
            finite.iter().sum::<f64>() / finite.len() as f64
        },
        ssim: rows.iter().map(|r| r.ssim).sum::<f64>() / n,
        feature_distance: rows.iter().map(|r| r.feature_distance).sum::<f64>() / n,
    };
    let report = EvalReport {
        version: MANIFEST_VERSION,
        rows,
        mean,
        config: config.clone(),
    };
    write_json(&out.join(EVAL_JSON), &report)?;
    write_atomic(&out.join(EVAL_TEXT), format_table(&report).as_bytes())?;
    Ok(report)
}

pub fn format_table(report: &EvalReport) -> String {
    let width = report.rows.iter().map(|r| r.name.len()).chain([5]).max().unwrap_or(5);
    let mut s = String::new();
    let _ = writeln!(s, "{:<width$}  {:>9}  {:>7}  {:>9}", "image", "PSNR", "SSIM", "FeatDist");
    for r in report.rows.iter().chain([&report.mean]) {
        let p = if r.psnr.is_finite() { format!("{:.3}", r.psnr) } else { "inf".into() };
        let _ = writeln!(s, "{:<width$}  {:>9}  {:>7.4}  {:>9.5}", r.name, p, r.ssim, r.feature_distance);
    }
    s
}
