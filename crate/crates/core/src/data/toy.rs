//! Deterministic toy data: textured rectangles and round shapes on cluttered
//! backgrounds, with exact ground-truth masks.
//!
//! * Rectangles: `(w, h) ∈ {4, 6, 8}²` (9 sizes), filled with diagonal
//!   stripes of period 4 (random phase, two random gray levels).
//! * Round shapes: disks of radius 3, 4, 5 and a 5×3 axis-aligned ellipse,
//!   filled with a 2×2-cell checkerboard (random offset and gray levels).
//! * Placement is uniform over all positions that keep the object inside the
//!   patch. Backgrounds are smoothed Gaussian noise or random crops from a
//!   user-supplied image directory.

use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::manifest::{write_dataset, DatasetMeta, Record};
use super::patches::{crop_from_pool, load_gray_images};
use super::pgm::{quantize_unit, GrayImage};
use crate::rng::{stream, DOMAIN_TOY};
use crate::{Error, Result};

pub const GENERATOR_VERSION: &str = "toy-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ToyClass {
    Rectangle,
    Round,
}

impl ToyClass {
    pub fn label(self) -> &'static str {
        match self {
            ToyClass::Rectangle => "rectangle",
            ToyClass::Round => "round",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        match s {
            "rectangle" => Some(ToyClass::Rectangle),
            "round" => Some(ToyClass::Round),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    Rect { w: usize, h: usize },
    /// Pixel centres with `(dx/rx)² + (dy/ry)² ≤ 1`.
    Ellipse { rx: usize, ry: usize },
}

impl Shape {
    pub const RECT_SIDES: [usize; 3] = [4, 6, 8];
    pub const ROUND_KINDS: [(usize, usize); 4] = [(3, 3), (4, 4), (5, 5), (5, 3)];

    pub fn bbox(&self) -> (usize, usize) {
        match *self {
            Shape::Rect { w, h } => (w, h),
            Shape::Ellipse { rx, ry } => (2 * rx + 1, 2 * ry + 1),
        }
    }

    fn contains(&self, dx: usize, dy: usize) -> bool {
        match *self {
            Shape::Rect { w, h } => dx < w && dy < h,
            Shape::Ellipse { rx, ry } => {
                let (fx, fy) = (dx as f64 - rx as f64, dy as f64 - ry as f64);
                (fx * fx) / (rx * rx) as f64 + (fy * fy) / (ry * ry) as f64 <= 1.0
            }
        }
    }

    pub fn class(&self) -> ToyClass {
        match self {
            Shape::Rect { .. } => ToyClass::Rectangle,
            Shape::Ellipse { .. } => ToyClass::Round,
        }
    }
}

/// Texture parameters; the texture family is fixed by the object's class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Texture {
    pub levels: [f64; 2],
    pub phase: (usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyObject {
    pub shape: Shape,
    pub x0: usize,
    pub y0: usize,
    pub texture: Texture,
}

impl ToyObject {
    pub fn random<R: Rng + ?Sized>(patch: usize, rect_fraction: f64, rng: &mut R) -> Self {
        let shape = if rng.random::<f64>() < rect_fraction {
            Shape::Rect {
                w: Shape::RECT_SIDES[rng.random_range(0..3)],
                h: Shape::RECT_SIDES[rng.random_range(0..3)],
            }
        } else {
            let (rx, ry) = Shape::ROUND_KINDS[rng.random_range(0..4)];
            Shape::Ellipse { rx, ry }
        };
        let (bw, bh) = shape.bbox();
        let x0 = rng.random_range(0..=patch - bw);
        let y0 = rng.random_range(0..=patch - bh);
        let dark = rng.random_range(0.05..0.35);
        let bright = rng.random_range(0.65..0.95);
        let levels = if rng.random::<bool>() { [dark, bright] } else { [bright, dark] };
        let phase = (rng.random_range(0..4), rng.random_range(0..4));
        ToyObject {
            shape,
            x0,
            y0,
            texture: Texture { levels, phase },
        }
    }

    pub fn class(&self) -> ToyClass {
        self.shape.class()
    }

    pub fn mask(&self, patch: usize) -> Vec<bool> {
        let (bw, bh) = self.shape.bbox();
        let mut m = vec![false; patch * patch];
        for dy in 0..bh {
            for dx in 0..bw {
                if self.shape.contains(dx, dy) {
                    m[(self.y0 + dy) * patch + self.x0 + dx] = true;
                }
            }
        }
        m
    }

    fn texture_at(&self, x: usize, y: usize) -> f64 {
        let (px, py) = self.texture.phase;
        let k = match self.class() {
            ToyClass::Rectangle => ((x + y + px) / 2) % 2,
            ToyClass::Round => (((x + px % 2) / 2) + ((y + py % 2) / 2)) % 2,
        };
        self.texture.levels[k]
    }

    /// Composites the object over `background`; the result is quantised to 8 bits.
    pub fn render(&self, background: &[f64], patch: usize) -> ToyExample {
        let gt_mask = self.mask(patch);
        let image = (0..patch * patch)
            .map(|i| {
                let v = if gt_mask[i] {
                    self.texture_at(i % patch, i / patch)
                } else {
                    background[i]
                };
                quantize_unit(v)
            })
            .collect();
        let (bw, bh) = self.shape.bbox();
        ToyExample {
            image,
            gt_mask,
            label: self.class(),
            bbox: (self.x0, self.y0, bw, bh),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyExample {
    pub image: Vec<f64>,
    pub gt_mask: Vec<bool>,
    pub label: ToyClass,
    /// `(x0, y0, width, height)`
    pub bbox: (usize, usize, usize, usize),
}

impl ToyExample {
    pub fn to_record(&self, patch: usize) -> Result<Record> {
        Ok(Record {
            image: GrayImage::from_unit(patch, patch, &self.image)?,
            mask: Some(GrayImage::from_mask(patch, patch, &self.gt_mask)?),
            label: Some(self.label.label().to_string()),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BackgroundSource {
    Procedural,
    Directory(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyConfig {
    pub patch_size: usize,
    pub n_train: usize,
    pub n_test: usize,
    /// Object-free background patches for background-model training.
    pub n_background: usize,
    /// Objects rendered on two independent backgrounds each.
    pub n_pairs: usize,
    pub background: BackgroundSource,
    pub seed: u64,
    /// Probability that an example is a rectangle.
    pub rect_fraction: f64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig {
            patch_size: 16,
            n_train: 2000,
            n_test: 1000,
            n_background: 10_000,
            n_pairs: 65,
            background: BackgroundSource::Procedural,
            seed: 0,
            rect_fraction: 0.5,
        }
    }
}

impl ToyConfig {
    pub fn validate(&self) -> Result<()> {
        // the largest object's bounding box is 11 px; keep it strictly inside
        if self.patch_size < 12 {
            return Err(Error::InvalidParameter(format!(
                "patch size {} too small for the toy shapes (need >= 12)",
                self.patch_size
            )));
        }
        if !(0.0..=1.0).contains(&self.rect_fraction) {
            return Err(Error::InvalidParameter("rect fraction must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Source of background patches.
pub enum Backgrounds {
    Procedural,
    Pool(Vec<GrayImage>),
}

impl Backgrounds {
    pub fn from_source(src: &BackgroundSource, patch: usize) -> Result<Self> {
        match src {
            BackgroundSource::Procedural => Ok(Backgrounds::Procedural),
            BackgroundSource::Directory(dir) => {
                let pool: Vec<_> = load_gray_images(dir, patch)?.into_iter().map(|(_, i)| i).collect();
                if pool.is_empty() {
                    return Err(Error::Dataset(format!(
                        "background directory {} has no usable images",
                        dir.display()
                    )));
                }
                Ok(Backgrounds::Pool(pool))
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, patch: usize, rng: &mut R) -> Result<Vec<f64>> {
        match self {
            Backgrounds::Procedural => Ok(procedural_background(patch, rng)),
            Backgrounds::Pool(pool) => Ok(crop_from_pool(pool, patch, rng)?.to_unit()),
        }
    }
}

fn gaussian_kernel(sigma: f64, radius: usize) -> Vec<f64> {
    let k: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            (-0.5 * d * d / (sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|x| x / s).collect()
}

/// Blurred white noise, standardised per patch, with random mean and contrast.
pub fn procedural_background<R: Rng + ?Sized>(patch: usize, rng: &mut R) -> Vec<f64> {
    const PAD: usize = 8;
    let sigma: f64 = rng.random_range(1.0..2.5);
    let mean: f64 = rng.random_range(0.35..0.65);
    let contrast: f64 = rng.random_range(0.03..0.08);
    let g = patch + 2 * PAD;
    let noise: Vec<f64> = (0..g * g).map(|_| StandardNormal.sample(rng)).collect();
    let radius = ((3.0 * sigma).ceil() as usize).min(PAD);
    let kernel = gaussian_kernel(sigma, radius);
    // horizontal pass on all rows, vertical pass on the cropped window only
    let mut horiz = vec![0.0; g * g];
    for y in 0..g {
        for x in radius..g - radius {
            horiz[y * g + x] = kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * noise[y * g + x + k - radius])
                .sum();
        }
    }
    let mut out = Vec::with_capacity(patch * patch);
    for y in PAD..PAD + patch {
        for x in PAD..PAD + patch {
            out.push(
                kernel
                    .iter()
                    .enumerate()
                    .map(|(k, w)| w * horiz[(y + k - radius) * g + x])
                    .sum::<f64>(),
            );
        }
    }
    let n = out.len() as f64;
    let mu = out.iter().sum::<f64>() / n;
    let sd = (out.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n).sqrt().max(1e-12);
    out.into_iter()
        .map(|v| (mean + contrast * (v - mu) / sd).clamp(0.02, 0.98))
        .collect()
}

const SPLIT_TRAIN: u64 = 0;
const SPLIT_TEST: u64 = 1;
const SPLIT_BACKGROUND: u64 = 2;
const SPLIT_PAIR_OBJECT: u64 = 3;
const SPLIT_PAIR_A: u64 = 4;
const SPLIT_PAIR_B: u64 = 5;

/// Generates `n` examples of one split; example `k` uses its own stream.
pub fn generate_split(cfg: &ToyConfig, split: u64, n: usize, backgrounds: &Backgrounds) -> Result<Vec<ToyExample>> {
    cfg.validate()?;
    let p = cfg.patch_size;
    (0..n)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream(cfg.seed, &[DOMAIN_TOY, split, k as u64]);
            let obj = ToyObject::random(p, cfg.rect_fraction, &mut rng);
            let bg = backgrounds.sample(p, &mut rng)?;
            Ok(obj.render(&bg, p))
        })
        .collect()
}

pub fn generate_train(cfg: &ToyConfig, backgrounds: &Backgrounds) -> Result<Vec<ToyExample>> {
    generate_split(cfg, SPLIT_TRAIN, cfg.n_train, backgrounds)
}

pub fn generate_test(cfg: &ToyConfig, backgrounds: &Backgrounds) -> Result<Vec<ToyExample>> {
    generate_split(cfg, SPLIT_TEST, cfg.n_test, backgrounds)
}

/// Object-free background patches, quantised like the toy images.
pub fn generate_backgrounds(cfg: &ToyConfig, backgrounds: &Backgrounds) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    (0..cfg.n_background)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream(cfg.seed, &[DOMAIN_TOY, SPLIT_BACKGROUND, k as u64]);
            Ok(backgrounds
                .sample(cfg.patch_size, &mut rng)?
                .into_iter()
                .map(quantize_unit)
                .collect())
        })
        .collect()
}

/// The same `n_pairs` objects rendered on two independent sets of backgrounds.
pub fn generate_pairs(cfg: &ToyConfig, backgrounds: &Backgrounds) -> Result<(Vec<ToyExample>, Vec<ToyExample>)> {
    cfg.validate()?;
    let p = cfg.patch_size;
    let pairs: Result<Vec<_>> = (0..cfg.n_pairs)
        .into_par_iter()
        .map(|k| {
            let k = k as u64;
            let obj = ToyObject::random(p, cfg.rect_fraction, &mut stream(cfg.seed, &[DOMAIN_TOY, SPLIT_PAIR_OBJECT, k]));
            let bg_a = backgrounds.sample(p, &mut stream(cfg.seed, &[DOMAIN_TOY, SPLIT_PAIR_A, k]))?;
            let bg_b = backgrounds.sample(p, &mut stream(cfg.seed, &[DOMAIN_TOY, SPLIT_PAIR_B, k]))?;
            Ok((obj.render(&bg_a, p), obj.render(&bg_b, p)))
        })
        .collect();
    Ok(pairs?.into_iter().unzip())
}

fn meta(cfg: &ToyConfig, source: &str) -> DatasetMeta {
    DatasetMeta {
        width: cfg.patch_size,
        height: cfg.patch_size,
        seed: Some(cfg.seed),
        generator_version: Some(GENERATOR_VERSION.to_string()),
        source: source.to_string(),
    }
}

fn write_examples(dir: &Path, cfg: &ToyConfig, examples: &[ToyExample], source: &str) -> Result<()> {
    let records = examples
        .iter()
        .map(|e| e.to_record(cfg.patch_size))
        .collect::<Result<Vec<_>>>()?;
    write_dataset(dir, &records, meta(cfg, source))?;
    Ok(())
}

/// Writes `train/`, `test/`, `background/`, `pairs/a/` and `pairs/b/` under `out`.
pub fn gen_toy(cfg: &ToyConfig, out: &Path) -> Result<()> {
    cfg.validate()?;
    let backgrounds = Backgrounds::from_source(&cfg.background, cfg.patch_size)?;
    write_examples(&out.join("train"), cfg, &generate_train(cfg, &backgrounds)?, "toy/train")?;
    write_examples(&out.join("test"), cfg, &generate_test(cfg, &backgrounds)?, "toy/test")?;
    let bg_records = generate_backgrounds(cfg, &backgrounds)?
        .iter()
        .map(|b| {
            Ok(Record {
                image: GrayImage::from_unit(cfg.patch_size, cfg.patch_size, b)?,
                mask: None,
                label: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    write_dataset(&out.join("background"), &bg_records, meta(cfg, "toy/background"))?;
    let (a, b) = generate_pairs(cfg, &backgrounds)?;
    write_examples(&out.join("pairs").join("a"), cfg, &a, "toy/pairs-a")?;
    write_examples(&out.join("pairs").join("b"), cfg, &b, "toy/pairs-b")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ToyConfig {
        ToyConfig {
            n_train: 300,
            n_test: 10,
            n_background: 5,
            n_pairs: 4,
            seed: 7,
            ..ToyConfig::default()
        }
    }

    #[test]
    fn shape_inventory() {
        let areas: Vec<usize> = Shape::ROUND_KINDS
            .iter()
            .map(|&(rx, ry)| {
                let obj = ToyObject {
                    shape: Shape::Ellipse { rx, ry },
                    x0: 0,
                    y0: 0,
                    texture: Texture {
                        levels: [0.1, 0.9],
                        phase: (0, 0),
                    },
                };
                obj.mask(16).iter().filter(|&&m| m).count()
            })
            .collect();
        assert_eq!(areas, vec![29, 49, 81, 45]);
    }

    #[test]
    fn generator_properties() {
        let cfg = small();
        let ex = generate_train(&cfg, &Backgrounds::Procedural).unwrap();
        let n = cfg.patch_size * cfg.patch_size;
        let mut rects = 0;
        for e in &ex {
            let area = e.gt_mask.iter().filter(|&&m| m).count();
            assert!(area >= 9 && area < n);
            assert!(e.image.iter().all(|&v| v > 0.0 && v < 1.0));
            let (x0, y0, w, h) = e.bbox;
            assert!(x0 + w <= cfg.patch_size && y0 + h <= cfg.patch_size);
            if e.label == ToyClass::Rectangle {
                rects += 1;
                assert_eq!(area, w * h);
            }
        }
        assert!(rects > 100 && rects < 200, "{rects}");
    }

    #[test]
    fn same_seed_same_data() {
        let cfg = small();
        let a = generate_train(&cfg, &Backgrounds::Procedural).unwrap();
        let b = generate_train(&cfg, &Backgrounds::Procedural).unwrap();
        assert_eq!(a, b);
        let other = ToyConfig { seed: 8, ..small() };
        assert_ne!(a, generate_train(&other, &Backgrounds::Procedural).unwrap());
    }

    #[test]
    fn pairs_share_objects() {
        let (a, b) = generate_pairs(&small(), &Backgrounds::Procedural).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.gt_mask, y.gt_mask);
            for i in 0..x.image.len() {
                if x.gt_mask[i] {
                    assert_eq!(x.image[i], y.image[i]);
                }
            }
            assert_ne!(x.image, y.image);
        }
    }

    #[test]
    fn missing_background_directory() {
        let cfg = ToyConfig {
            background: BackgroundSource::Directory("/nonexistent/backgrounds".into()),
            ..small()
        };
        let dir = tempfile::tempdir().unwrap();
        assert!(gen_toy(&cfg, dir.path()).is_err());
        let empty = tempfile::tempdir().unwrap();
        let cfg = ToyConfig {
            background: BackgroundSource::Directory(empty.path().to_path_buf()),
            ..small()
        };
        assert!(gen_toy(&cfg, dir.path()).is_err());
    }

    #[test]
    fn too_small_patch_rejected() {
        let cfg = ToyConfig {
            patch_size: 11,
            ..small()
        };
        assert!(cfg.validate().is_err());
    }
}
