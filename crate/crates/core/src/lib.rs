//! Masked restricted Boltzmann machines for foreground/background modelling.
//!
//! An observed image is explained pixel-wise by one of two latent images: a
//! foreground image whose visibility is controlled by a binary mask, and a
//! background image modelled by a Beta RBM. The foreground model is a mixed
//! RBM with binary shape units and Beta appearance units sharing one hidden
//! layer. Inference is block Gibbs sampling; learning alternates inference
//! with SML updates of the foreground RBM against a frozen background.
//!
//! Module map:
//!
//! * [`rbm`] energies, exact conditionals, samplers and SML for the binary,
//!   Beta and mixed RBMs.
//! * [`masked`] the composed masked model: mask/outlier posteriors, latent
//!   image resampling, Gibbs sweeps, segmentation and foreground sampling.
//! * [`train`] background pretraining and weakly supervised joint training.
//! * [`data`] toy data generation, patch cropping, PGM / CSV / model I/O.
//! * [`eval`] segmentation accuracy, random-mask control, logistic probe and
//!   hidden-code matching.

pub mod data;
pub mod error;
pub mod eval;
pub mod masked;
pub mod rbm;
pub mod rng;
pub mod train;

pub use error::{Error, Result};
pub use masked::{GibbsConfig, LatentState, MaskEstimator, MaskedModel, OutlierConfig};
pub use rbm::{BetaRbmParams, BinaryRbm, BinaryShapeParams, HiddenState, MixedRbmParams};

/// Lower clamp for Beta shape parameters.
pub const EPS_BETA: f64 = 1e-2;

/// Pixel values are kept inside `[EPS_X, 1 - EPS_X]`.
pub const EPS_X: f64 = 1.0 / 512.0;
