//! Random patch cropping from a directory of natural images.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;

use super::pgm::{read_image, GrayImage};
use crate::rng::{stream, DOMAIN_PATCH};
use crate::{Error, Result};

fn decode_any(path: &Path) -> std::result::Result<GrayImage, String> {
    let is_pgm = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
    if is_pgm {
        return read_image(path).map_err(|e| e.to_string());
    }
    let img = image::open(path).map_err(|e| e.to_string())?.into_luma8();
    let (w, h) = img.dimensions();
    GrayImage::new(w as usize, h as usize, img.into_raw()).map_err(|e| e.to_string())
}

/// Decodes every image in `dir` (sorted by name) that is at least
/// `min_size × min_size`; undersized or undecodable files are skipped with a warning.
pub fn load_gray_images(dir: &Path, min_size: usize) -> Result<Vec<(PathBuf, GrayImage)>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::Dataset(format!("cannot read image directory {}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    paths.sort();
    let mut out = Vec::new();
    for p in paths {
        match decode_any(&p) {
            Ok(img) if img.width >= min_size && img.height >= min_size => out.push((p, img)),
            Ok(img) => log::warn!(
                "skipping {}: {}x{} is smaller than {min_size}x{min_size}",
                p.display(),
                img.width,
                img.height
            ),
            Err(e) => log::warn!("skipping {}: {e}", p.display()),
        }
    }
    Ok(out)
}

/// Uniform random crops from a pool of already-decoded images.
pub fn crop_from_pool<R: Rng + ?Sized>(pool: &[GrayImage], size: usize, rng: &mut R) -> Result<GrayImage> {
    if pool.is_empty() {
        return Err(Error::Dataset("no usable background images".into()));
    }
    let img = &pool[rng.random_range(0..pool.len())];
    let x0 = rng.random_range(0..=img.width - size);
    let y0 = rng.random_range(0..=img.height - size);
    img.crop(x0, y0, size, size)
}

/// `n` crops of `size × size`, deterministic in `seed`; crop `k` uses its own stream.
pub fn crop_patches(dir: &Path, size: usize, n: usize, seed: u64) -> Result<Vec<GrayImage>> {
    if size == 0 {
        return Err(Error::InvalidParameter("patch size must be positive".into()));
    }
    if !dir.is_dir() {
        return Err(Error::Dataset(format!("{} is not a directory", dir.display())));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let pool: Vec<GrayImage> = load_gray_images(dir, size)?.into_iter().map(|(_, i)| i).collect();
    if pool.is_empty() {
        return Err(Error::Dataset(format!(
            "no image in {} is at least {size}x{size}",
            dir.display()
        )));
    }
    (0..n)
        .map(|k| crop_from_pool(&pool, size, &mut stream(seed, &[DOMAIN_PATCH, k as u64])))
        .collect()
}

/// Centre crop to `crop × crop` followed by an area downscale to `out × out`
/// (e.g. 250 → 210 → 32 for face images).
pub fn center_crop_resize(img: &GrayImage, crop: usize, out: usize) -> Result<GrayImage> {
    if img.width < crop || img.height < crop {
        return Err(Error::InvalidParameter(format!(
            "image {}x{} smaller than crop {crop}",
            img.width, img.height
        )));
    }
    img.crop((img.width - crop) / 2, (img.height - crop) / 2, crop, crop)?
        .resize_area(out, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::pgm::write_image;

    fn fixture() -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        let grad: Vec<u8> = (0..40 * 30).map(|k| (k % 251) as u8).collect();
        write_image(&dir.path().join("a.pgm"), &GrayImage::new(40, 30, grad).unwrap()).unwrap();
        write_image(&dir.path().join("b.pgm"), &GrayImage::new(20, 20, vec![90; 400]).unwrap()).unwrap();
        write_image(&dir.path().join("tiny.pgm"), &GrayImage::new(4, 4, vec![0; 16]).unwrap()).unwrap();
        dir
    }

    #[test]
    fn deterministic_and_sized() {
        let dir = fixture();
        let a = crop_patches(dir.path(), 16, 25, 3).unwrap();
        let b = crop_patches(dir.path(), 16, 25, 3).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|p| p.width == 16 && p.height == 16));
        assert_ne!(a, crop_patches(dir.path(), 16, 25, 4).unwrap());
    }

    #[test]
    fn zero_requested_is_empty() {
        let dir = fixture();
        assert!(crop_patches(dir.path(), 16, 0, 1).unwrap().is_empty());
    }

    #[test]
    fn no_usable_images_is_an_error() {
        let dir = fixture();
        assert!(crop_patches(dir.path(), 64, 3, 1).is_err());
        assert!(crop_patches(&dir.path().join("missing"), 8, 3, 1).is_err());
    }

    #[test]
    fn constant_source_gives_constant_crops() {
        let pool = vec![GrayImage::new(20, 20, vec![90; 400]).unwrap()];
        let mut rng = stream(1, &[]);
        let p = crop_from_pool(&pool, 8, &mut rng).unwrap();
        assert!(p.pixels.iter().all(|&v| v == 90));
    }

    #[test]
    fn face_style_preprocessing() {
        let img = GrayImage::new(250, 250, vec![120; 250 * 250]).unwrap();
        let out = center_crop_resize(&img, 210, 32).unwrap();
        assert_eq!((out.width, out.height), (32, 32));
        assert!(out.pixels.iter().all(|&v| v == 120));
    }
}
