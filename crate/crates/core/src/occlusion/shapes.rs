//! Component masks: rotated ellipses, thickened quadratic Bézier bands and
//! half-plane line cuts. Masks are boolean grids, row-major.

use crate::{Error, Result, Vec2};

/// Samples per Bézier curve (segments = samples - 1).
pub const BEZIER_SAMPLES: usize = 129;

pub(crate) fn ellipse_into(mask: &mut [bool], width: usize, height: usize, center: Vec2, a_x: f64, a_y: f64, angle: f64) {
    let (s, c) = angle.sin_cos();
    let r = a_x.max(a_y);
    let x0 = (center.x - r).floor().max(0.0) as usize;
    let y0 = (center.y - r).floor().max(0.0) as usize;
    let x1 = ((center.x + r).ceil().max(-1.0) + 1.0).min(width as f64) as usize;
    let y1 = ((center.y + r).ceil().max(-1.0) + 1.0).min(height as f64) as usize;
    for y in y0..y1 {
        for x in x0..x1 {
            let dx = x as f64 - center.x;
            let dy = y as f64 - center.y;
            let u = c * dx + s * dy;
            let v = -s * dx + c * dy;
            if u * u / (a_x * a_x) + v * v / (a_y * a_y) <= 1.0 {
                mask[y * width + x] = true;
            }
        }
    }
}

/// Pixel `(x, y)` is set iff the offset from `center`, rotated by `-angle`,
/// satisfies `u²/a_x² + v²/a_y² <= 1`.
pub fn ellipse_mask(center: Vec2, a_x: f64, a_y: f64, angle: f64, width: usize, height: usize) -> Result<Vec<bool>> {
    if !(a_x > 0.0 && a_y > 0.0) {
        return Err(Error::Config(format!("ellipse axes must be positive, got ({a_x}, {a_y})")));
    }
    let mut mask = vec![false; width * height];
    ellipse_into(&mut mask, width, height, center, a_x, a_y, angle);
    Ok(mask)
}

pub fn bezier_point(c0: Vec2, c1: Vec2, c2: Vec2, t: f64) -> Vec2 {
    let s = 1.0 - t;
    c0 * (s * s) + c1 * (2.0 * s * t) + c2 * (t * t)
}

/// Closed outline of the band of half-width `thickness / 2` around the
/// sampled curve, or `None` when the curve has zero length.
pub fn bezier_outline(c0: Vec2, c1: Vec2, c2: Vec2, thickness: f64) -> Option<Vec<Vec2>> {
    let pts: Vec<Vec2> = (0..BEZIER_SAMPLES)
        .map(|i| bezier_point(c0, c1, c2, i as f64 / (BEZIER_SAMPLES - 1) as f64))
        .collect();
    let length: f64 = pts.windows(2).map(|w| (w[1] - w[0]).norm()).sum();
    if !(length > 1e-9) {
        return None;
    }
    let half = thickness / 2.0;
    let n = pts.len();
    let mut normals = Vec::with_capacity(n);
    let mut last = None;
    for i in 0..n {
        let tangent = pts[(i + 1).min(n - 1)] - pts[i.saturating_sub(1)];
        let len = tangent.norm();
        let normal = if len > 1e-12 {
            Vec2::new(-tangent.y / len, tangent.x / len)
        } else {
            last.unwrap_or(Vec2::new(0.0, 1.0))
        };
        last = Some(normal);
        normals.push(normal);
    }
    // Zero-tangent samples before the first usable one take its normal.
    if let Some(first) = (0..n).find(|&i| (pts[(i + 1).min(n - 1)] - pts[i.saturating_sub(1)]).norm() > 1e-12) {
        for k in 0..first {
            normals[k] = normals[first];
        }
    }
    let mut outline: Vec<Vec2> = pts.iter().zip(&normals).map(|(p, nm)| p + nm * half).collect();
    outline.extend(pts.iter().zip(&normals).rev().map(|(p, nm)| p - nm * half));
    Some(outline)
}

/// Even-odd fill of a closed polygon; pixels on the boundary are included.
pub(crate) fn fill_polygon_into(mask: &mut [bool], width: usize, height: usize, poly: &[Vec2]) {
    let n = poly.len();
    if n < 3 {
        return;
    }
    let ymin = poly.iter().map(|p| p.y).fold(f64::INFINITY, f64::min).ceil().max(0.0);
    let ymax = poly.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max).floor().min(height as f64 - 1.0);
    let mut xs = Vec::new();
    if ymin <= ymax {
        for y in ymin as usize..=ymax as usize {
            let yf = y as f64;
            xs.clear();
            for i in 0..n {
                let a = poly[i];
                let b = poly[(i + 1) % n];
                if (a.y <= yf && yf < b.y) || (b.y <= yf && yf < a.y) {
                    xs.push(a.x + (yf - a.y) * (b.x - a.x) / (b.y - a.y));
                }
            }
            xs.sort_by(f64::total_cmp);
            for pair in xs.chunks_exact(2) {
                let x0 = pair[0].ceil().max(0.0);
                let x1 = pair[1].floor().min(width as f64 - 1.0);
                if x0 <= x1 {
                    for x in x0 as usize..=x1 as usize {
                        mask[y * width + x] = true;
                    }
                }
            }
        }
    }
    for i in 0..n {
        mark_segment(mask, width, height, poly[i], poly[(i + 1) % n]);
    }
}

fn mark_segment(mask: &mut [bool], width: usize, height: usize, a: Vec2, b: Vec2) {
    let x0 = a.x.min(b.x).ceil().max(0.0);
    let x1 = a.x.max(b.x).floor().min(width as f64 - 1.0);
    let y0 = a.y.min(b.y).ceil().max(0.0);
    let y1 = a.y.max(b.y).floor().min(height as f64 - 1.0);
    if x0 > x1 || y0 > y1 {
        return;
    }
    let d = b - a;
    let len = d.norm();
    for y in y0 as usize..=y1 as usize {
        for x in x0 as usize..=x1 as usize {
            let p = Vec2::new(x as f64, y as f64) - a;
            let cross = d.x * p.y - d.y * p.x;
            if cross.abs() <= 1e-9 * len.max(1.0) {
                mask[y * width + x] = true;
            }
        }
    }
}

/// Band of width `thickness` around the quadratic Bézier `C0, C1, C2`.
/// Coincident control points give an empty mask and a warning.
pub fn bezier_mask(c0: Vec2, c1: Vec2, c2: Vec2, thickness: f64, width: usize, height: usize) -> Result<Vec<bool>> {
    if !(thickness > 0.0) {
        return Err(Error::Config(format!("bezier thickness must be positive, got {thickness}")));
    }
    let mut mask = vec![false; width * height];
    match bezier_outline(c0, c1, c2, thickness) {
        Some(outline) => fill_polygon_into(&mut mask, width, height, &outline),
        None => log::warn!("zero-length bezier curve at ({}, {}); mask left empty", c0.x, c0.y),
    }
    Ok(mask)
}

/// `L(x, y) = (y - y1)(x2 - x1) - (x - x1)(y2 - y1)`.
pub fn line_value(p1: Vec2, p2: Vec2, x: f64, y: f64) -> f64 {
    (y - p1.y) * (p2.x - p1.x) - (x - p1.x) * (p2.y - p1.y)
}

fn half_plane(p1: Vec2, p2: Vec2, side: f64, width: usize, height: usize) -> Vec<bool> {
    let mut mask = vec![false; width * height];
    for y in 0..height {
        for x in 0..width {
            let l = line_value(p1, p2, x as f64, y as f64);
            mask[y * width + x] = l * side > 0.0;
        }
    }
    mask
}

/// Pixels strictly on `side` (±1) of the line through `p1`, `p2`. When that
/// side covers more than `max_area` of the image the opposite side is used;
/// if that also exceeds `max_area` the mask is empty.
pub fn line_cut_mask(p1: Vec2, p2: Vec2, side: i8, width: usize, height: usize, max_area: f64) -> Result<Vec<bool>> {
    if p1 == p2 {
        return Err(Error::Config("line cut endpoints coincide".into()));
    }
    if side != 1 && side != -1 {
        return Err(Error::Config(format!("line cut side must be +1 or -1, got {side}")));
    }
    let total = (width * height).max(1) as f64;
    let fraction = |m: &[bool]| m.iter().filter(|v| **v).count() as f64 / total;
    let preferred = half_plane(p1, p2, side as f64, width, height);
    if fraction(&preferred) <= max_area {
        return Ok(preferred);
    }
    let other = half_plane(p1, p2, -(side as f64), width, height);
    if fraction(&other) <= max_area {
        return Ok(other);
    }
    Ok(vec![false; width * height])
}
