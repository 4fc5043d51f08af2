//! Datasets and file formats.

pub mod container;
pub mod manifest;
pub mod patches;
pub mod pgm;
pub mod toy;

pub use container::{read_model, write_model, Container, StoredModel};
pub use manifest::{load_dataset, read_manifest, write_dataset, write_manifest, Dataset, DatasetManifest, DatasetMeta, ManifestRow, Record};
pub use patches::{center_crop_resize, crop_patches};
pub use pgm::{read_image, write_image, GrayImage};
pub use toy::{gen_toy, BackgroundSource, ToyClass, ToyConfig, ToyExample};
