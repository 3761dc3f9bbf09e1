//! Binary morphology with a square structuring element. Pixels outside the
//! image count as 0.

use crate::{Error, Result};

fn check_kernel(kernel: usize) -> Result<usize> {
    if kernel == 0 || kernel % 2 == 0 {
        return Err(Error::Config(format!("morphology kernel must be odd and >= 1, got {kernel}")));
    }
    Ok(kernel / 2)
}

/// One pass of a separable square max (dilate) or min (erode).
fn pass(mask: &[bool], width: usize, height: usize, r: usize, dilate: bool) -> Vec<bool> {
    let reduce = |mut it: std::iter::Map<std::ops::RangeInclusive<usize>, &dyn Fn(usize) -> bool>, inside: bool| {
        if dilate {
            it.any(|v| v)
        } else {
            inside && it.all(|v| v)
        }
    };
    let mut rows = vec![false; mask.len()];
    for y in 0..height {
        for x in 0..width {
            let lo = x.saturating_sub(r);
            let hi = (x + r).min(width - 1);
            let inside = x >= r && x + r < width;
            rows[y * width + x] = reduce((lo..=hi).map(&|k| mask[y * width + k]), inside);
        }
    }
    let mut out = vec![false; mask.len()];
    for y in 0..height {
        let lo = y.saturating_sub(r);
        let hi = (y + r).min(height - 1);
        let inside = y >= r && y + r < height;
        for x in 0..width {
            out[y * width + x] = reduce((lo..=hi).map(&|k| rows[k * width + x]), inside);
        }
    }
    out
}

pub fn morph_dilate(mask: &[bool], width: usize, height: usize, kernel: usize, iterations: usize) -> Result<Vec<bool>> {
    let r = check_kernel(kernel)?;
    let mut m = mask.to_vec();
    if width == 0 || height == 0 {
        return Ok(m);
    }
    for _ in 0..iterations {
        m = pass(&m, width, height, r, true);
    }
    Ok(m)
}

pub fn morph_erode(mask: &[bool], width: usize, height: usize, kernel: usize, iterations: usize) -> Result<Vec<bool>> {
    let r = check_kernel(kernel)?;
    let mut m = mask.to_vec();
    if width == 0 || height == 0 {
        return Ok(m);
    }
    for _ in 0..iterations {
        m = pass(&m, width, height, r, false);
    }
    Ok(m)
}

/// Dilation followed by erosion, `iterations` times.
pub fn morph_close(mask: &[bool], width: usize, height: usize, kernel: usize, iterations: usize) -> Result<Vec<bool>> {
    let mut m = mask.to_vec();
    for _ in 0..iterations {
        m = morph_dilate(&m, width, height, kernel, 1)?;
        m = morph_erode(&m, width, height, kernel, 1)?;
    }
    Ok(m)
}
