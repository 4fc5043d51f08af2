//! Background pretraining and weakly supervised joint training.
//!
//! Joint training keeps one latent state per training image across epochs.
//! Each epoch visits the images in shuffled minibatches; every image in a
//! minibatch gets one Gibbs sweep, after which its `(v^F, m)` is treated as
//! observed data for one SML step of the foreground RBM. The background RBM
//! is frozen throughout. Foreground and background fantasy chains are
//! independent; the background chains only exist during pretraining.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::masked::{LatentState, MaskedModel, OutlierConfig};
use crate::rbm::dist::clamp_pixel;
use crate::rbm::{sml_update, BetaRbmParams, MixedRbmParams, MixedVisible, PersistentChains, SmlHyper};
use crate::rng::{stream, DOMAIN_CHAINS, DOMAIN_ESTEP, DOMAIN_INIT, DOMAIN_MSTEP, DOMAIN_SHUFFLE};
use crate::{Error, Result};

/// When the outlier component is active during joint training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutlierSchedule {
    Off,
    /// Off for epochs `< e0`, on afterwards.
    FromEpoch(usize),
    FromStart,
}

impl OutlierSchedule {
    pub fn active(self, epoch: usize) -> bool {
        match self {
            OutlierSchedule::Off => false,
            OutlierSchedule::FromEpoch(e0) => epoch >= e0,
            OutlierSchedule::FromStart => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_shape: f64,
    pub lr_appearance: f64,
    pub lr_bias: f64,
    pub weight_decay: f64,
    pub n_chains: usize,
    pub outlier_schedule: OutlierSchedule,
    pub outlier_p: f64,
    /// Fraction of pretraining data held out for the free-energy gap.
    pub holdout_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 1000,
            batch_size: 100,
            lr_shape: 1e-2,
            lr_appearance: 1e-3,
            lr_bias: 1e-2,
            weight_decay: 1e-4,
            n_chains: 100,
            outlier_schedule: OutlierSchedule::Off,
            outlier_p: OutlierConfig::DEFAULT_P,
            holdout_fraction: 0.1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidParameter("batch size must be positive".into()));
        }
        if self.n_chains == 0 {
            return Err(Error::InvalidParameter("number of persistent chains must be positive".into()));
        }
        for (name, v) in [
            ("shape learning rate", self.lr_shape),
            ("appearance learning rate", self.lr_appearance),
            ("bias learning rate", self.lr_bias),
            ("weight decay", self.weight_decay),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidParameter(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(Error::InvalidParameter("holdout fraction must lie in [0, 1)".into()));
        }
        OutlierConfig::enabled(self.outlier_p)?;
        Ok(())
    }

    pub fn hyper(&self) -> SmlHyper {
        SmlHyper {
            lr_shape: self.lr_shape,
            lr_appearance: self.lr_appearance,
            lr_bias: self.lr_bias,
            weight_decay: self.weight_decay,
        }
    }

    pub fn outlier_config(&self, epoch: usize) -> OutlierConfig {
        OutlierConfig {
            p: self.outlier_p,
            enabled: self.outlier_schedule.active(epoch),
        }
    }
}

/// One row of the pretraining log. Epoch 0 describes the initialisation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaEpochLog {
    pub epoch: usize,
    /// Mean squared error of the mean-field reconstruction on training data.
    pub recon_train: f64,
    pub recon_holdout: Option<f64>,
    /// Mean free energy on held-out data minus that on an equally sized
    /// training subset; growth indicates overfitting.
    pub free_energy_gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BetaTraining {
    pub params: BetaRbmParams,
    pub log: Vec<BetaEpochLog>,
}

/// Mean squared error between `v` and `E[v | h = E[h | v]]`.
pub fn reconstruction_error(p: &BetaRbmParams, data: &[Vec<f64>]) -> Result<f64> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let total: Result<f64> = data
        .par_iter()
        .map(|v| {
            let q = p.hidden_conditional(v)?;
            let means = p.visible_shapes(&q).means();
            Ok(v.iter().zip(&means).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / v.len() as f64)
        })
        .sum();
    Ok(total? / data.len() as f64)
}

pub fn mean_free_energy(p: &BetaRbmParams, data: &[Vec<f64>]) -> Result<f64> {
    let total: Result<f64> = data.par_iter().map(|v| p.free_energy(v)).sum();
    Ok(total? / data.len().max(1) as f64)
}

fn shuffled(n: usize, seed: u64, coords: &[u64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut stream(seed, coords));
    idx
}

/// Trains a Beta RBM with SML; shared by background and foreground-appearance
/// pretraining.
pub fn pretrain_beta(data: &[Vec<f64>], n_hidden: usize, cfg: &TrainConfig) -> Result<BetaTraining> {
    cfg.validate()?;
    let first = data
        .first()
        .ok_or_else(|| Error::Dataset("pretraining data is empty".into()))?;
    let n_vis = first.len();
    let mut clamped = Vec::with_capacity(data.len());
    for (k, v) in data.iter().enumerate() {
        if v.len() != n_vis {
            return Err(Error::Dataset(format!("example {k} has {} pixels, expected {n_vis}", v.len())));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Dataset(format!("example {k} has non-finite pixels")));
        }
        clamped.push(v.iter().map(|&x| clamp_pixel(x)).collect::<Vec<f64>>());
    }
    let order = shuffled(clamped.len(), cfg.seed, &[DOMAIN_SHUFFLE, u64::MAX]);
    let n_hold = if clamped.len() >= 2 {
        ((clamped.len() as f64 * cfg.holdout_fraction) as usize).min(clamped.len() - 1)
    } else {
        0
    };
    let holdout: Vec<Vec<f64>> = order[..n_hold].iter().map(|&i| clamped[i].clone()).collect();
    let train: Vec<Vec<f64>> = order[n_hold..].iter().map(|&i| clamped[i].clone()).collect();

    let init = BetaRbmParams::init(n_vis, n_hidden, Some(&train), &mut stream(cfg.seed, &[DOMAIN_INIT]))?;
    train_beta_from(init, &train, &holdout, cfg)
}

pub fn pretrain_background(patches: &[Vec<f64>], n_hidden: usize, cfg: &TrainConfig) -> Result<BetaTraining> {
    pretrain_beta(patches, n_hidden, cfg)
}

/// Beta RBM on whole training images, used to initialise the foreground
/// appearance weights.
pub fn pretrain_foreground_appearance(images: &[Vec<f64>], n_hidden: usize, cfg: &TrainConfig) -> Result<BetaTraining> {
    pretrain_beta(images, n_hidden, cfg)
}

fn beta_log_row(p: &BetaRbmParams, epoch: usize, train: &[Vec<f64>], holdout: &[Vec<f64>]) -> Result<BetaEpochLog> {
    let recon_train = reconstruction_error(p, train)?;
    if holdout.is_empty() {
        return Ok(BetaEpochLog {
            epoch,
            recon_train,
            recon_holdout: None,
            free_energy_gap: None,
        });
    }
    let subset = &train[..holdout.len().min(train.len())];
    Ok(BetaEpochLog {
        epoch,
        recon_train,
        recon_holdout: Some(reconstruction_error(p, holdout)?),
        free_energy_gap: Some(mean_free_energy(p, holdout)? - mean_free_energy(p, subset)?),
    })
}

/// SML from given initial parameters on already clamped data.
pub fn train_beta_from(
    init: BetaRbmParams,
    train: &[Vec<f64>],
    holdout: &[Vec<f64>],
    cfg: &TrainConfig,
) -> Result<BetaTraining> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Dataset("training data is empty".into()));
    }
    let mut params = init;
    let hyper = cfg.hyper();
    let mut chains = PersistentChains::init(&params, cfg.n_chains, &mut stream(cfg.seed, &[DOMAIN_CHAINS]));
    let mut log = vec![beta_log_row(&params, 0, train, holdout)?];
    log::info!("epoch 0: recon {:.5}", log[0].recon_train);
    for epoch in 1..=cfg.epochs {
        let last_good = params.clone();
        let order = shuffled(train.len(), cfg.seed, &[DOMAIN_SHUFFLE, epoch as u64]);
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<Vec<f64>> = idx.iter().map(|&i| train[i].clone()).collect();
            let mut rng = stream(cfg.seed, &[DOMAIN_MSTEP, epoch as u64, b as u64]);
            if let Err(e) = sml_update(&mut params, &batch, &mut chains, &hyper, &mut rng) {
                return Err(diverged(e, epoch, crate::error::Checkpoint::Beta(last_good)));
            }
        }
        let row = beta_log_row(&params, epoch, train, holdout)?;
        if !row.recon_train.is_finite() {
            return Err(Error::Diverged {
                epoch,
                block: "reconstruction".into(),
                last_good: Box::new(crate::error::Checkpoint::Beta(last_good)),
            });
        }
        log::info!(
            "epoch {epoch}: recon {:.5} holdout {:?} gap {:?}",
            row.recon_train,
            row.recon_holdout,
            row.free_energy_gap
        );
        log.push(row);
    }
    Ok(BetaTraining { params, log })
}

fn diverged(e: Error, epoch: usize, last_good: crate::error::Checkpoint) -> Error {
    match e {
        Error::NonFinite { block } => Error::Diverged {
            epoch,
            block,
            last_good: Box::new(last_good),
        },
        other => other,
    }
}

/// Per-image latent states persisted across epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentStore {
    pub states: Vec<LatentState>,
}

impl LatentStore {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn mask_mean(&self) -> f64 {
        mean_flag(self.states.iter().map(|s| &s.mask))
    }

    pub fn outlier_mean(&self) -> f64 {
        mean_flag(self.states.iter().map(|s| &s.outlier))
    }
}

fn mean_flag<'a>(it: impl Iterator<Item = &'a Vec<bool>>) -> f64 {
    let (mut on, mut n) = (0usize, 0usize);
    for m in it {
        on += m.iter().filter(|&&b| b).count();
        n += m.len();
    }
    on as f64 / n.max(1) as f64
}

fn latents_finite(s: &LatentState) -> bool {
    s.v_fg.iter().chain(&s.v_bg).all(|v| v.is_finite())
}

/// Initial latents, one per image; image `k` draws from its own stream.
pub fn init_latent_store(images: &[Vec<f64>], model: &MaskedModel, out: &OutlierConfig, seed: u64) -> Result<LatentStore> {
    let states = images
        .par_iter()
        .enumerate()
        .map(|(k, x)| model.init_state(x, out, &mut stream(seed, &[DOMAIN_INIT, 1, k as u64])))
        .collect::<Result<Vec<_>>>()?;
    Ok(LatentStore { states })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FgEpochLog {
    pub epoch: usize,
    pub outliers: bool,
    pub mask_mean: f64,
    pub outlier_mean: f64,
    /// Mean IoU of the stored masks against ground truth, when available.
    pub mask_iou: Option<f64>,
    pub mask_accuracy: Option<f64>,
    /// Latent states that had to be reinitialised this epoch.
    pub resampled: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FgTraining {
    pub params: MixedRbmParams,
    pub latents: LatentStore,
    pub log: Vec<FgEpochLog>,
}

/// Mean IoU and pixel accuracy of `masks` against `truth`. An empty union
/// counts as IoU 1.
pub fn mask_agreement(masks: &[&[bool]], truth: &[Vec<bool>]) -> Result<(f64, f64)> {
    if masks.len() != truth.len() {
        return Err(Error::dim("ground-truth masks", masks.len(), truth.len()));
    }
    let (mut iou, mut acc) = (0.0, 0.0);
    for (m, t) in masks.iter().zip(truth) {
        if m.len() != t.len() {
            return Err(Error::dim("ground-truth mask pixels", m.len(), t.len()));
        }
        let inter = m.iter().zip(t).filter(|(a, b)| **a && **b).count();
        let union = m.iter().zip(t).filter(|(a, b)| **a || **b).count();
        let agree = m.iter().zip(t).filter(|(a, b)| a == b).count();
        iou += if union == 0 { 1.0 } else { inter as f64 / union as f64 };
        acc += agree as f64 / m.len().max(1) as f64;
    }
    let n = masks.len().max(1) as f64;
    Ok((iou / n, acc / n))
}

/// Callback invoked after every epoch of joint training (checkpointing,
/// logging). Returning an error aborts training.
pub type EpochHook<'a> = dyn FnMut(&FgEpochLog, &MixedRbmParams, &LatentStore) -> Result<()> + 'a;

/// Joint training of the foreground model against a frozen background.
pub fn train_foreground(
    images: &[Vec<f64>],
    bg: &BetaRbmParams,
    init: MixedRbmParams,
    cfg: &TrainConfig,
    gt_masks: Option<&[Vec<bool>]>,
) -> Result<FgTraining> {
    train_foreground_with(images, bg, init, cfg, gt_masks, &mut |_, _, _| Ok(()))
}

pub fn train_foreground_with(
    images: &[Vec<f64>],
    bg: &BetaRbmParams,
    init: MixedRbmParams,
    cfg: &TrainConfig,
    gt_masks: Option<&[Vec<bool>]>,
    hook: &mut EpochHook<'_>,
) -> Result<FgTraining> {
    cfg.validate()?;
    if images.is_empty() {
        return Err(Error::Dataset("training set is empty".into()));
    }
    let mut model = MaskedModel::new(init, bg.clone())?;
    let n_pix = model.n_pix();
    for (k, x) in images.iter().enumerate() {
        if x.len() != n_pix {
            return Err(Error::Dataset(format!("image {k} has {} pixels, model expects {n_pix}", x.len())));
        }
    }
    if let Some(gt) = gt_masks {
        if gt.len() != images.len() {
            return Err(Error::dim("ground-truth masks", images.len(), gt.len()));
        }
    }
    let images: Vec<Vec<f64>> = images.iter().map(|x| x.iter().map(|&v| clamp_pixel(v)).collect()).collect();
    let mut store = init_latent_store(&images, &model, &cfg.outlier_config(0), cfg.seed)?;
    let hyper = cfg.hyper();
    let mut chains = PersistentChains::init(&model.fg, cfg.n_chains, &mut stream(cfg.seed, &[DOMAIN_CHAINS]));
    let mut log = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let out = cfg.outlier_config(epoch);
        let last_good = model.fg.clone();
        let order = shuffled(images.len(), cfg.seed, &[DOMAIN_SHUFFLE, epoch as u64]);
        let mut resampled = 0usize;
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let swept: Vec<(LatentState, bool)> = idx
                .par_iter()
                .map(|&k| {
                    let x = &images[k];
                    let mut rng = stream(cfg.seed, &[DOMAIN_ESTEP, epoch as u64, k as u64]);
                    match model.gibbs_sweep(&store.states[k], x, &out, &mut rng) {
                        Ok(s) if latents_finite(&s) => Ok((s, false)),
                        Ok(_) | Err(Error::NonFiniteDensity { .. }) => {
                            let s = model.init_state(x, &out, &mut rng)?;
                            if !latents_finite(&s) {
                                return Err(Error::NonFinite {
                                    block: format!("latent state of image {k}"),
                                });
                            }
                            Ok((s, true))
                        }
                        Err(e) => Err(e),
                    }
                })
                .collect::<Result<_>>()?;
            for (&k, (s, fresh)) in idx.iter().zip(swept) {
                store.states[k] = s;
                resampled += fresh as usize;
            }
            let batch: Vec<MixedVisible> = idx.iter().map(|&k| store.states[k].foreground_visible()).collect();
            let mut rng = stream(cfg.seed, &[DOMAIN_MSTEP, epoch as u64, b as u64]);
            if let Err(e) = sml_update(&mut model.fg, &batch, &mut chains, &hyper, &mut rng) {
                return Err(diverged(e, epoch, crate::error::Checkpoint::Mixed(last_good)));
            }
        }
        let (mask_iou, mask_accuracy) = match gt_masks {
            Some(gt) => {
                let masks: Vec<&[bool]> = store.states.iter().map(|s| s.mask.as_slice()).collect();
                let (iou, acc) = mask_agreement(&masks, gt)?;
                (Some(iou), Some(acc))
            }
            None => (None, None),
        };
        let row = FgEpochLog {
            epoch,
            outliers: out.enabled,
            mask_mean: store.mask_mean(),
            outlier_mean: store.outlier_mean(),
            mask_iou,
            mask_accuracy,
            resampled,
        };
        log::info!(
            "epoch {epoch}: mask {:.3} outlier {:.3} iou {:?} acc {:?}",
            row.mask_mean,
            row.outlier_mean,
            row.mask_iou,
            row.mask_accuracy
        );
        hook(&row, &model.fg, &store)?;
        log.push(row);
    }
    Ok(FgTraining {
        params: model.fg,
        latents: store,
        log,
    })
}
