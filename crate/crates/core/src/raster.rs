//! Float images and their on-disk encodings (PNG, PFM).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ::image::{DynamicImage, ImageBuffer, Luma, Rgb, Rgba};

use crate::error::{Error, Result};

/// Row-major, channel-interleaved image with linear float samples (nominally 0..1).
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Image {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
        }
    }

    pub fn filled(width: usize, height: usize, value: &[f32]) -> Self {
        let mut data = Vec::with_capacity(width * height * value.len());
        for _ in 0..width * height {
            data.extend_from_slice(value);
        }
        Image {
            width,
            height,
            channels: value.len(),
            data,
        }
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, &mut [f32]),
    ) -> Self {
        let mut img = Image::new(width, height, channels);
        for y in 0..height {
            for x in 0..width {
                f(x, y, img.pixel_mut(x, y));
            }
        }
        img
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[f32] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    pub fn pixel_mut(&mut self, x: usize, y: usize) -> &mut [f32] {
        let i = (y * self.width + x) * self.channels;
        &mut self.data[i..i + self.channels]
    }

    /// Rec. 601 luma for RGB(A), identity for single-channel images.
    pub fn to_gray(&self) -> Vec<f32> {
        match self.channels {
            1 => self.data.clone(),
            c if c >= 3 => self
                .data
                .chunks_exact(c)
                .map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2])
                .collect(),
            c => self.data.chunks_exact(c).map(|p| p[0]).collect(),
        }
    }

    fn to_dynamic(&self, sixteen: bool) -> Result<DynamicImage> {
        let (w, h) = (self.width as u32, self.height as u32);
        let bad = || Error::Format(format!("cannot encode {}-channel image", self.channels));
        let q8 = |v: &f32| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        let q16 = |v: &f32| (v.clamp(0.0, 1.0) * 65535.0).round() as u16;
        Ok(match (self.channels, sixteen) {
            (1, false) => DynamicImage::ImageLuma8(
                ImageBuffer::<Luma<u8>, _>::from_raw(w, h, self.data.iter().map(q8).collect())
                    .ok_or_else(bad)?,
            ),
            (1, true) => DynamicImage::ImageLuma16(
                ImageBuffer::<Luma<u16>, _>::from_raw(w, h, self.data.iter().map(q16).collect())
                    .ok_or_else(bad)?,
            ),
            (3, false) => DynamicImage::ImageRgb8(
                ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, self.data.iter().map(q8).collect())
                    .ok_or_else(bad)?,
            ),
            (3, true) => DynamicImage::ImageRgb16(
                ImageBuffer::<Rgb<u16>, _>::from_raw(w, h, self.data.iter().map(q16).collect())
                    .ok_or_else(bad)?,
            ),
            (4, false) => DynamicImage::ImageRgba8(
                ImageBuffer::<Rgba<u8>, _>::from_raw(w, h, self.data.iter().map(q8).collect())
                    .ok_or_else(bad)?,
            ),
            (4, true) => DynamicImage::ImageRgba16(
                ImageBuffer::<Rgba<u16>, _>::from_raw(w, h, self.data.iter().map(q16).collect())
                    .ok_or_else(bad)?,
            ),
            _ => return Err(bad()),
        })
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        self.save_png_depth(path, false)
    }

    pub fn save_png_depth(&self, path: &Path, sixteen: bool) -> Result<()> {
        let img = self.to_dynamic(sixteen)?;
        img.save_with_format(path, ::image::ImageFormat::Png)?;
        Ok(())
    }

    /// Loads an 8- or 16-bit PNG, keeping gray, RGB or RGBA layout.
    pub fn load_png(path: &Path) -> Result<Image> {
        let img = ::image::open(path).map_err(|e| match e {
            ::image::ImageError::IoError(io) => Error::io(path, io),
            other => Error::Image(other),
        })?;
        let (w, h) = (img.width() as usize, img.height() as usize);
        let (channels, data): (usize, Vec<f32>) = match img {
            DynamicImage::ImageLuma8(b) => {
                (1, b.into_raw().iter().map(|&v| v as f32 / 255.0).collect())
            }
            DynamicImage::ImageLuma16(b) => (
                1,
                b.into_raw().iter().map(|&v| v as f32 / 65535.0).collect(),
            ),
            DynamicImage::ImageRgba8(b) => {
                (4, b.into_raw().iter().map(|&v| v as f32 / 255.0).collect())
            }
            DynamicImage::ImageRgba16(b) => (
                4,
                b.into_raw().iter().map(|&v| v as f32 / 65535.0).collect(),
            ),
            DynamicImage::ImageRgb16(b) => (
                3,
                b.into_raw().iter().map(|&v| v as f32 / 65535.0).collect(),
            ),
            DynamicImage::ImageLumaA8(_) | DynamicImage::ImageLumaA16(_) => {
                let b = img.to_rgba16();
                (
                    4,
                    b.into_raw().iter().map(|&v| v as f32 / 65535.0).collect(),
                )
            }
            other => {
                let b = other.to_rgb8();
                (3, b.into_raw().iter().map(|&v| v as f32 / 255.0).collect())
            }
        };
        Ok(Image {
            width: w,
            height: h,
            channels,
            data,
        })
    }
}

/// Writes a single-channel PFM: little-endian, scale −1.0, rows bottom to top.
pub fn write_pfm(path: &Path, width: usize, height: usize, values: &[f32]) -> Result<()> {
    if values.len() != width * height {
        return Err(Error::Dimensions {
            expected: (width, height),
            actual: (values.len(), 1),
        });
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    write!(out, "Pf\n{width} {height}\n-1.0\n").map_err(io)?;
    for y in (0..height).rev() {
        for v in &values[y * width..(y + 1) * width] {
            out.write_all(&v.to_le_bytes()).map_err(io)?;
        }
    }
    out.flush().map_err(io)
}

/// Reads a single-channel PFM into top-to-bottom row order.
pub fn read_pfm(path: &Path) -> Result<(usize, usize, Vec<f32>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut bytes = Vec::new();
    BufReader::new(file)
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    let mut header = Vec::new();
    let mut pos = 0;
    while header.len() < 3 {
        let start = pos;
        while pos < bytes.len() && bytes[pos] != b'\n' {
            pos += 1;
        }
        if pos >= bytes.len() {
            return Err(Error::Format("truncated PFM header".into()));
        }
        header.push(
            String::from_utf8_lossy(&bytes[start..pos])
                .trim()
                .to_string(),
        );
        pos += 1;
    }
    if header[0] != "Pf" {
        return Err(Error::Format(format!(
            "expected single-channel PFM, got '{}'",
            header[0]
        )));
    }
    let dims: Vec<usize> = header[1]
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| Error::Format("bad PFM size".into())))
        .collect::<Result<_>>()?;
    let [width, height] = dims[..] else {
        return Err(Error::Format("bad PFM size line".into()));
    };
    let scale: f32 = header[2]
        .parse()
        .map_err(|_| Error::Format("bad PFM scale".into()))?;
    let payload = &bytes[pos..];
    if payload.len() < width * height * 4 {
        return Err(Error::Format("truncated PFM payload".into()));
    }
    let mut values = vec![0.0f32; width * height];
    for (i, chunk) in payload.chunks_exact(4).take(width * height).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if scale < 0.0 {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        let (row, col) = (height - 1 - i / width, i % width);
        values[row * width + col] = v;
    }
    Ok((width, height, values))
}

/// PSNR in dB for signals in [0, 1], over the pixels where `mask` is true.
pub fn psnr(a: &Image, b: &Image, mask: Option<&[bool]>) -> f64 {
    assert_eq!(a.dims(), b.dims());
    assert_eq!(a.channels, b.channels);
    let c = a.channels;
    let mut se = 0.0f64;
    let mut n = 0usize;
    for i in 0..a.width * a.height {
        if mask.is_some_and(|m| !m[i]) {
            continue;
        }
        for k in 0..c {
            let d = (a.data[i * c + k] - b.data[i * c + k]) as f64;
            se += d * d;
        }
        n += c;
    }
    if n == 0 {
        return f64::NAN;
    }
    let mse = se / n as f64;
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (1.0 / mse).log10()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pfm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w.pfm");
        let vals: Vec<f32> = (0..12).map(|i| i as f32 * 0.25 - 1.0).collect();
        write_pfm(&p, 4, 3, &vals).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert!(bytes.starts_with(b"Pf\n4 3\n-1.0\n"));
        // first stored row is the bottom image row
        assert_eq!(&bytes[12..16], &vals[8].to_le_bytes());
        let (w, h, back) = read_pfm(&p).unwrap();
        assert_eq!((w, h), (4, 3));
        assert_eq!(back, vals);
    }

    #[test]
    fn png_round_trip_8_and_16_bit() {
        let dir = tempfile::tempdir().unwrap();
        let img = Image::from_fn(5, 4, 3, |x, y, p| {
            p[0] = x as f32 / 4.0;
            p[1] = y as f32 / 3.0;
            p[2] = 0.5;
        });
        for sixteen in [false, true] {
            let p = dir.path().join(format!("i{sixteen}.png"));
            img.save_png_depth(&p, sixteen).unwrap();
            let back = Image::load_png(&p).unwrap();
            assert_eq!(back.dims(), (5, 4));
            assert_eq!(back.channels, 3);
            let tol = if sixteen { 1e-4 } else { 2.5e-3 };
            for (a, b) in img.data.iter().zip(&back.data) {
                assert!((a - b).abs() < tol);
            }
        }
    }

    #[test]
    fn psnr_of_identical_is_infinite() {
        let a = Image::filled(3, 3, &[0.2, 0.4, 0.6]);
        assert!(psnr(&a, &a, None).is_infinite());
        let mut b = a.clone();
        b.data[0] += 0.1;
        assert!(psnr(&a, &b, None).is_finite());
    }
}
