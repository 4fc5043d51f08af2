//! Binary portable graymap (P5, maxval 255) I/O and pixel quantisation.

use std::fs;
use std::io::{Cursor, Write};
use std::path::Path;

use image::codecs::pnm::{PnmDecoder, PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ColorType, ExtendedColorType, ImageDecoder, ImageEncoder};

use crate::{Error, Result};

/// 8-bit grayscale raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

/// Pixel value for 8-bit level `k`: `(k + 0.5) / 256`, so 0 ↦ 1/512 and 255 ↦ 1 − 1/512.
#[inline]
pub fn level_to_unit(k: u8) -> f64 {
    (k as f64 + 0.5) / 256.0
}

/// Inverse of [`level_to_unit`] on its image; other values are binned.
#[inline]
pub fn unit_to_level(v: f64) -> u8 {
    (v * 256.0).floor().clamp(0.0, 255.0) as u8
}

/// Rounds `v ∈ [0, 1]` to the nearest representable pixel value.
pub fn quantize_unit(v: f64) -> f64 {
    level_to_unit(unit_to_level(v))
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::dim("image raster", width * height, pixels.len()));
        }
        Ok(GrayImage {
            width,
            height,
            pixels,
        })
    }

    pub fn from_unit(width: usize, height: usize, values: &[f64]) -> Result<Self> {
        Self::new(width, height, values.iter().map(|&v| unit_to_level(v)).collect())
    }

    /// 0 for background, 255 for foreground.
    pub fn from_mask(width: usize, height: usize, mask: &[bool]) -> Result<Self> {
        Self::new(width, height, mask.iter().map(|&m| if m { 255 } else { 0 }).collect())
    }

    /// `round(255 · p)`.
    pub fn from_probabilities(width: usize, height: usize, probs: &[f64]) -> Result<Self> {
        Self::new(
            width,
            height,
            probs
                .iter()
                .map(|&p| (255.0 * p.clamp(0.0, 1.0)).round() as u8)
                .collect(),
        )
    }

    pub fn to_unit(&self) -> Vec<f64> {
        self.pixels.iter().map(|&k| level_to_unit(k)).collect()
    }

    pub fn to_mask(&self) -> Vec<bool> {
        self.pixels.iter().map(|&k| k >= 128).collect()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.pixels.len() + 16);
        PnmEncoder::new(&mut out)
            .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
            .write_image(&self.pixels, self.width as u32, self.height as u32, ExtendedColorType::L8)
            .expect("in-memory PGM encoding");
        out
    }

    /// Parses a binary graymap with maxval 255; other PNM variants are rejected.
    pub fn decode(bytes: &[u8]) -> std::result::Result<Self, String> {
        if !bytes.starts_with(b"P5") {
            return Err("unsupported magic, expected P5".into());
        }
        let decoder = PnmDecoder::new(Cursor::new(bytes)).map_err(|e| e.to_string())?;
        if decoder.color_type() != ColorType::L8 {
            return Err(format!("unsupported sample type {:?}, expected 8-bit gray", decoder.color_type()));
        }
        let (width, height) = decoder.dimensions();
        let mut pixels = vec![0u8; decoder.total_bytes() as usize];
        decoder.read_image(&mut pixels).map_err(|e| e.to_string())?;
        Ok(GrayImage {
            width: width as usize,
            height: height as usize,
            pixels,
        })
    }

    /// Copies a `w × h` window starting at `(x0, y0)`.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<GrayImage> {
        if x0 + w > self.width || y0 + h > self.height {
            return Err(Error::InvalidParameter(format!(
                "crop {w}x{h}+{x0}+{y0} exceeds {}x{}",
                self.width, self.height
            )));
        }
        let pixels = (y0..y0 + h)
            .flat_map(|y| self.pixels[y * self.width + x0..y * self.width + x0 + w].iter().copied())
            .collect();
        GrayImage::new(w, h, pixels)
    }

    /// Box-filter downscale (or nearest upscale) to `w × h`.
    pub fn resize_area(&self, w: usize, h: usize) -> Result<GrayImage> {
        if w == 0 || h == 0 || self.width == 0 || self.height == 0 {
            return Err(Error::InvalidParameter("cannot resize an empty image".into()));
        }
        let mut out = Vec::with_capacity(w * h);
        let (sx, sy) = (self.width as f64 / w as f64, self.height as f64 / h as f64);
        for oy in 0..h {
            let (y0, y1) = (oy as f64 * sy, (oy + 1) as f64 * sy);
            for ox in 0..w {
                let (x0, x1) = (ox as f64 * sx, (ox + 1) as f64 * sx);
                let mut acc = 0.0;
                let mut area = 0.0;
                for y in (y0.floor() as usize)..(y1.ceil() as usize).min(self.height) {
                    let wy = (y1.min(y as f64 + 1.0) - y0.max(y as f64)).max(0.0);
                    for x in (x0.floor() as usize)..(x1.ceil() as usize).min(self.width) {
                        let wx = (x1.min(x as f64 + 1.0) - x0.max(x as f64)).max(0.0);
                        acc += wx * wy * self.pixels[y * self.width + x] as f64;
                        area += wx * wy;
                    }
                }
                out.push((acc / area).round().clamp(0.0, 255.0) as u8);
            }
        }
        GrayImage::new(w, h, out)
    }
}

pub fn read_image(path: &Path) -> Result<GrayImage> {
    let bytes = fs::read(path)?;
    GrayImage::decode(&bytes).map_err(|reason| Error::Image {
        path: path.to_path_buf(),
        reason,
    })
}

pub fn write_image(path: &Path, img: &GrayImage) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&img.encode())?;
    Ok(())
}

/// Tiles equally sized images into a grid with a one-pixel gutter of `gutter` gray.
pub fn tile(images: &[GrayImage], columns: usize, gutter: u8) -> Result<GrayImage> {
    let first = images
        .first()
        .ok_or_else(|| Error::InvalidParameter("nothing to tile".into()))?;
    let (w, h) = (first.width, first.height);
    if images.iter().any(|im| im.width != w || im.height != h) {
        return Err(Error::InvalidParameter("tiles differ in size".into()));
    }
    let columns = columns.max(1).min(images.len());
    let rows = images.len().div_ceil(columns);
    let (tw, th) = (columns * (w + 1) + 1, rows * (h + 1) + 1);
    let mut px = vec![gutter; tw * th];
    for (k, im) in images.iter().enumerate() {
        let (ox, oy) = ((k % columns) * (w + 1) + 1, (k / columns) * (h + 1) + 1);
        for y in 0..h {
            px[(oy + y) * tw + ox..(oy + y) * tw + ox + w].copy_from_slice(&im.pixels[y * w..(y + 1) * w]);
        }
    }
    GrayImage::new(tw, th, px)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantisation_endpoints() {
        assert_eq!(level_to_unit(0), 1.0 / 512.0);
        assert_eq!(level_to_unit(255), 1.0 - 1.0 / 512.0);
        for k in 0..=255u8 {
            assert_eq!(unit_to_level(level_to_unit(k)), k);
        }
    }

    #[test]
    fn mask_round_trip() {
        let mask = vec![true, false, false, true, true, false];
        let img = GrayImage::from_mask(3, 2, &mask).unwrap();
        let back = GrayImage::decode(&img.encode()).unwrap();
        assert_eq!(back.to_mask(), mask);
        assert!(back.pixels.iter().all(|&p| p == 0 || p == 255));
    }

    #[test]
    fn header_with_comments() {
        let mut bytes = b"P5\n# made by hand\n2 1\n# another\n255\n".to_vec();
        bytes.extend([7, 9]);
        let img = GrayImage::decode(&bytes).unwrap();
        assert_eq!((img.width, img.height, img.pixels), (2, 1, vec![7, 9]));
    }

    #[test]
    fn malformed_headers() {
        assert!(GrayImage::decode(b"P2\n1 1\n255\n\x00").is_err());
        assert!(GrayImage::decode(b"P5\n2 2\n255\n\x00").is_err());
        assert!(GrayImage::decode(b"P5\n1 1\n65535\n\x00\x00").is_err());
        assert!(GrayImage::decode(b"P5\n1").is_err());
    }

    #[test]
    fn crop_of_constant_is_constant() {
        let img = GrayImage::new(10, 8, vec![77; 80]).unwrap();
        let c = img.crop(3, 2, 5, 4).unwrap();
        assert!(c.pixels.iter().all(|&p| p == 77));
        assert!(img.crop(6, 0, 5, 4).is_err());
    }

    #[test]
    fn resize_averages_blocks() {
        let img = GrayImage::new(4, 2, vec![0, 100, 200, 200, 0, 100, 200, 200]).unwrap();
        let r = img.resize_area(2, 1).unwrap();
        assert_eq!(r.pixels, vec![50, 200]);
    }
}
