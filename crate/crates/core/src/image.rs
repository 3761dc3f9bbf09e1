//! Float image planes and PNG interchange.
//!
//! Buffers are row-major, interleaved, with values in `[0, 1]`. PNG files are
//! written with linear encoding (no gamma curve): a value `v` is stored as
//! `round(clamp(v, 0, 1) * MAX)` with `MAX` = 255 or 65535.

use std::path::Path;

use image::{DynamicImage, ImageBuffer as PixelBuffer, Luma, Rgb, Rgba};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageRole {
    Rgb,
    Alpha,
    Mask,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    channels: usize,
    role: ImageRole,
    data: Vec<f64>,
}

impl ImageBuffer {
    pub fn filled(width: usize, height: usize, channels: usize, role: ImageRole, value: f64) -> Self {
        Self {
            width,
            height,
            channels,
            role,
            data: vec![value; width * height * channels],
        }
    }

    pub fn from_pixel(width: usize, height: usize, role: ImageRole, pixel: &[f64]) -> Self {
        let data = pixel
            .iter()
            .copied()
            .cycle()
            .take(width * height * pixel.len())
            .collect();
        Self {
            width,
            height,
            channels: pixel.len(),
            role,
            data,
        }
    }

    pub fn from_data(
        width: usize,
        height: usize,
        channels: usize,
        role: ImageRole,
        data: Vec<f64>,
    ) -> Result<Self> {
        if !matches!(channels, 1 | 3 | 4) {
            return Err(Error::Dimension(format!("unsupported channel count {channels}")));
        }
        if data.len() != width * height * channels {
            return Err(Error::Dimension(format!(
                "buffer of {} values for {width}x{height}x{channels}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Dimension(format!("non-finite value at index {i}")));
        }
        Ok(Self {
            width,
            height,
            channels,
            role,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn role(&self) -> ImageRole {
        self.role
    }

    pub fn with_role(mut self, role: ImageRole) -> Self {
        self.role = role;
        self
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f64) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    pub fn same_shape(&self, other: &ImageBuffer) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    pub fn ensure_same_shape(&self, other: &ImageBuffer, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Dimension(format!(
                "{what}: {}x{}x{} vs {}x{}x{}",
                self.width, self.height, self.channels, other.width, other.height, other.channels
            )))
        }
    }

    /// Single channel `c` as a contiguous `height x width` plane.
    pub fn plane(&self, c: usize) -> Vec<f64> {
        self.data.iter().skip(c).step_by(self.channels).copied().collect()
    }

    /// Count of pixels whose first channel is at least 0.5.
    pub fn mask_area(&self) -> usize {
        self.data
            .iter()
            .step_by(self.channels)
            .filter(|&&v| v >= 0.5)
            .count()
    }

    /// Places images left to right; heights and channel counts must agree.
    pub fn hstack(images: &[&ImageBuffer]) -> Result<ImageBuffer> {
        let first = images
            .first()
            .ok_or_else(|| Error::Dimension("hstack of zero images".into()))?;
        let (height, channels) = (first.height, first.channels);
        if images.iter().any(|im| im.height != height || im.channels != channels) {
            return Err(Error::Dimension("hstack inputs differ in height or channels".into()));
        }
        let width: usize = images.iter().map(|im| im.width).sum();
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for im in images {
                let row = y * im.width * channels;
                data.extend_from_slice(&im.data[row..row + im.width * channels]);
            }
        }
        Ok(ImageBuffer {
            width,
            height,
            channels,
            role: first.role,
            data,
        })
    }

    pub fn write_png(&self, path: &Path, depth: BitDepth) -> Result<()> {
        let dynamic = self.to_dynamic(depth);
        dynamic.save(path).map_err(|e| Error::Image {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn encode_png(&self, depth: BitDepth) -> Result<Vec<u8>> {
        let mut bytes = std::io::Cursor::new(Vec::new());
        self.to_dynamic(depth)
            .write_to(&mut bytes, image::ImageFormat::Png)
            .map_err(|e| Error::Image {
                path: "<memory>".into(),
                message: e.to_string(),
            })?;
        Ok(bytes.into_inner())
    }

    fn to_dynamic(&self, depth: BitDepth) -> DynamicImage {
        let (w, h) = (self.width as u32, self.height as u32);
        match depth {
            BitDepth::Eight => {
                let raw: Vec<u8> = self.data.iter().map(|&v| quantize(v, 255.0) as u8).collect();
                match self.channels {
                    1 => DynamicImage::ImageLuma8(PixelBuffer::<Luma<u8>, _>::from_raw(w, h, raw).unwrap()),
                    3 => DynamicImage::ImageRgb8(PixelBuffer::<Rgb<u8>, _>::from_raw(w, h, raw).unwrap()),
                    _ => DynamicImage::ImageRgba8(PixelBuffer::<Rgba<u8>, _>::from_raw(w, h, raw).unwrap()),
                }
            }
            BitDepth::Sixteen => {
                let raw: Vec<u16> = self.data.iter().map(|&v| quantize(v, 65535.0) as u16).collect();
                match self.channels {
                    1 => DynamicImage::ImageLuma16(PixelBuffer::<Luma<u16>, _>::from_raw(w, h, raw).unwrap()),
                    3 => DynamicImage::ImageRgb16(PixelBuffer::<Rgb<u16>, _>::from_raw(w, h, raw).unwrap()),
                    _ => DynamicImage::ImageRgba16(PixelBuffer::<Rgba<u16>, _>::from_raw(w, h, raw).unwrap()),
                }
            }
        }
    }

    /// Reads a PNG. Grayscale files become 1-channel buffers, colour files
    /// 3- or 4-channel; the bit depth of the file sets the scale.
    pub fn read_png(path: &Path, role: ImageRole) -> Result<ImageBuffer> {
        let img = image::open(path).map_err(|e| Error::Image {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let (w, h) = (img.width() as usize, img.height() as usize);
        let sixteen = matches!(
            img.color(),
            image::ColorType::L16 | image::ColorType::La16 | image::ColorType::Rgb16 | image::ColorType::Rgba16
        );
        let channels = match img.color().channel_count() {
            1 | 2 => 1,
            3 => 3,
            _ => 4,
        };
        let data: Vec<f64> = match (sixteen, channels) {
            (false, 1) => img.to_luma8().into_raw().iter().map(|&v| v as f64 / 255.0).collect(),
            (false, 3) => img.to_rgb8().into_raw().iter().map(|&v| v as f64 / 255.0).collect(),
            (false, _) => img.to_rgba8().into_raw().iter().map(|&v| v as f64 / 255.0).collect(),
            (true, 1) => img.to_luma16().into_raw().iter().map(|&v| v as f64 / 65535.0).collect(),
            (true, 3) => img.to_rgb16().into_raw().iter().map(|&v| v as f64 / 65535.0).collect(),
            (true, _) => img.to_rgba16().into_raw().iter().map(|&v| v as f64 / 65535.0).collect(),
        };
        ImageBuffer::from_data(w, h, channels, role, data)
    }
}

fn quantize(v: f64, max: f64) -> f64 {
    (v.clamp(0.0, 1.0) * max).round()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_wrong_length() {
        assert!(ImageBuffer::from_data(2, 2, 3, ImageRole::Rgb, vec![0.0; 11]).is_err());
        assert!(ImageBuffer::from_data(2, 2, 2, ImageRole::Rgb, vec![0.0; 8]).is_err());
        assert!(ImageBuffer::from_data(1, 1, 1, ImageRole::Mask, vec![f64::NAN]).is_err());
    }

    #[test]
    fn png_round_trip_is_exact_on_quantized_values() {
        let dir = tempfile::tempdir().unwrap();
        let data: Vec<f64> = (0..4 * 3 * 3).map(|i| (i * 7 % 256) as f64 / 255.0).collect();
        let img = ImageBuffer::from_data(4, 3, 3, ImageRole::Rgb, data).unwrap();
        let path = dir.path().join("a.png");
        img.write_png(&path, BitDepth::Eight).unwrap();
        let back = ImageBuffer::read_png(&path, ImageRole::Rgb).unwrap();
        assert_eq!(back, img);

        let path16 = dir.path().join("b.png");
        img.write_png(&path16, BitDepth::Sixteen).unwrap();
        let back16 = ImageBuffer::read_png(&path16, ImageRole::Rgb).unwrap();
        for (a, b) in back16.data().iter().zip(img.data()) {
            assert!((a - b).abs() < 1e-4);
        }
    }

    #[test]
    fn hstack_concatenates_rows() {
        let a = ImageBuffer::from_pixel(2, 2, ImageRole::Mask, &[0.0]);
        let b = ImageBuffer::from_pixel(1, 2, ImageRole::Mask, &[1.0]);
        let s = ImageBuffer::hstack(&[&a, &b]).unwrap();
        assert_eq!(s.width(), 3);
        assert_eq!(s.data(), &[0.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
    }
}
