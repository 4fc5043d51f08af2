//! Dataset directories: `manifest.csv` (`image,mask,label`), `dataset.json`
//! metadata, and PGM files under `images/` and `masks/`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::pgm::{read_image, write_image, GrayImage};
use crate::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.csv";
pub const META_FILE: &str = "dataset.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub image: String,
    pub mask: Option<String>,
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub width: usize,
    pub height: usize,
    pub seed: Option<u64>,
    pub generator_version: Option<String>,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub rows: Vec<ManifestRow>,
    pub meta: DatasetMeta,
}

/// One record to be written: image, optional ground-truth mask, optional label.
pub struct Record {
    pub image: GrayImage,
    pub mask: Option<GrayImage>,
    pub label: Option<String>,
}

/// A dataset loaded into memory with pixels mapped to `(k + 0.5) / 256`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub width: usize,
    pub height: usize,
    pub images: Vec<Vec<f64>>,
    pub masks: Option<Vec<Vec<bool>>>,
    pub labels: Vec<Option<String>>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn n_pix(&self) -> usize {
        self.width * self.height
    }
}

pub fn write_manifest(dir: &Path, manifest: &DatasetManifest) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join(MANIFEST_FILE))?;
    w.write_record(["image", "mask", "label"])?;
    for r in &manifest.rows {
        w.write_record([
            r.image.as_str(),
            r.mask.as_deref().unwrap_or(""),
            r.label.as_deref().unwrap_or(""),
        ])?;
    }
    w.flush()?;
    let mut meta = serde_json::to_string_pretty(&manifest.meta)?;
    meta.push('\n');
    fs::write(dir.join(META_FILE), meta)?;
    Ok(())
}

pub fn read_manifest(dir: &Path) -> Result<DatasetManifest> {
    let meta: DatasetMeta = serde_json::from_slice(&fs::read(dir.join(META_FILE))?)?;
    let mut r = csv::Reader::from_path(dir.join(MANIFEST_FILE))?;
    let headers = r.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["image", "mask", "label"] {
        return Err(Error::Dataset(format!(
            "{}: header must be `image,mask,label`",
            dir.join(MANIFEST_FILE).display()
        )));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let opt = |i: usize| rec.get(i).filter(|s| !s.is_empty()).map(str::to_string);
        rows.push(ManifestRow {
            image: rec.get(0).unwrap_or_default().to_string(),
            mask: opt(1),
            label: opt(2),
        });
    }
    Ok(DatasetManifest { rows, meta })
}

/// Writes records as `images/NNNNN.pgm` (+ `masks/NNNNN.pgm`) with a manifest.
pub fn write_dataset(dir: &Path, records: &[Record], meta: DatasetMeta) -> Result<DatasetManifest> {
    fs::create_dir_all(dir.join("images"))?;
    let mut rows = Vec::with_capacity(records.len());
    for (k, r) in records.iter().enumerate() {
        if r.image.width != meta.width || r.image.height != meta.height {
            return Err(Error::Dataset(format!(
                "record {k} is {}x{}, dataset is {}x{}",
                r.image.width, r.image.height, meta.width, meta.height
            )));
        }
        let image = format!("images/{k:05}.pgm");
        write_image(&dir.join(&image), &r.image)?;
        let mask = match &r.mask {
            Some(m) => {
                let name = format!("masks/{k:05}.pgm");
                write_image(&dir.join(&name), m)?;
                Some(name)
            }
            None => None,
        };
        rows.push(ManifestRow {
            image,
            mask,
            label: r.label.clone(),
        });
    }
    let manifest = DatasetManifest { rows, meta };
    write_manifest(dir, &manifest)?;
    Ok(manifest)
}

fn resolve(dir: &Path, rel: &str) -> PathBuf {
    let p = Path::new(rel);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        dir.join(p)
    }
}

/// Loads every image (and mask, when all rows have one) listed in the manifest.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let manifest = read_manifest(dir)?;
    let (w, h) = (manifest.meta.width, manifest.meta.height);
    let check = |img: &GrayImage, path: &Path| -> Result<()> {
        if img.width != w || img.height != h {
            return Err(Error::Dataset(format!(
                "{} is {}x{}, manifest says {w}x{h}",
                path.display(),
                img.width,
                img.height
            )));
        }
        Ok(())
    };
    let mut images = Vec::with_capacity(manifest.rows.len());
    let mut masks = Vec::with_capacity(manifest.rows.len());
    let mut labels = Vec::with_capacity(manifest.rows.len());
    let all_masks = !manifest.rows.is_empty() && manifest.rows.iter().all(|r| r.mask.is_some());
    for row in &manifest.rows {
        let path = resolve(dir, &row.image);
        if !path.exists() {
            return Err(Error::Dataset(format!("missing image file {}", path.display())));
        }
        let img = read_image(&path)?;
        check(&img, &path)?;
        images.push(img.to_unit());
        if all_masks {
            let mpath = resolve(dir, row.mask.as_deref().unwrap_or_default());
            let m = read_image(&mpath)?;
            check(&m, &mpath)?;
            masks.push(m.to_mask());
        }
        labels.push(row.label.clone());
    }
    Ok(Dataset {
        width: w,
        height: h,
        images,
        masks: all_masks.then_some(masks),
        labels,
    })
}
