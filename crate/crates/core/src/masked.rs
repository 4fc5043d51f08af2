//! The composed foreground/background model.
//!
//! Each observed pixel `x_i` is copied from the foreground latent image where
//! the mask is on and from the background latent image where it is off. With
//! the outlier extension an off-mask pixel may instead be explained by a
//! uniform density, in which case the background latent is unconstrained.
//!
//! Gibbs sweeps update three blocks in a fixed order:
//! hidden units `(h^F, h^B)`, then `(m, o)` jointly per pixel with the latent
//! images integrated out, then the latent images `(v^F, v^B)`.

use rand::Rng;
use serde::{Deserialize, Serialize};
use rayon::prelude::*;

use crate::error::check_len;
use crate::rbm::dist::{bernoulli_unchecked, log_sigmoid, log_sum_exp, sigmoid};
use crate::rbm::{sample_units, BetaRbmParams, BetaShapes, MixedRbmParams, MixedVisible, SmlModel};
use crate::rng::{stream, DOMAIN_SEGMENT};
use crate::{Error, Result};

/// Uniform outlier component for background pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutlierConfig {
    pub p: f64,
    pub enabled: bool,
}

impl OutlierConfig {
    pub const DEFAULT_P: f64 = 0.3;

    pub fn disabled() -> Self {
        OutlierConfig {
            p: Self::DEFAULT_P,
            enabled: false,
        }
    }

    pub fn enabled(p: f64) -> Result<Self> {
        let c = OutlierConfig { p, enabled: true };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if (0.0..=1.0).contains(&self.p) {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("outlier probability {} not in [0, 1]", self.p)))
        }
    }

    /// Prior outlier probability actually in force.
    pub fn effective_p(&self) -> f64 {
        if self.enabled {
            self.p
        } else {
            0.0
        }
    }
}

impl Default for OutlierConfig {
    fn default() -> Self {
        Self::disabled()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskEstimator {
    /// Average of mask samples over the post-burn-in sweeps.
    PosteriorMean,
    FinalSample,
}

/// Starting point of a fresh chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ChainInit {
    /// Hidden units from their bias-only priors, then one draw of `(m, o)`.
    #[default]
    Prior,
    /// Everything is background: `m = 0`, `v^B = x`, `v^F` drawn from the
    /// foreground prior. The first sweep then infers `h^B` from the image.
    Background,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GibbsConfig {
    pub n_sweeps: usize,
    pub burn_in: usize,
    pub estimator: MaskEstimator,
    pub init: ChainInit,
    pub seed: u64,
}

impl GibbsConfig {
    pub fn new(n_sweeps: usize, burn_in: usize, seed: u64) -> Result<Self> {
        let c = GibbsConfig {
            n_sweeps,
            burn_in,
            estimator: MaskEstimator::PosteriorMean,
            init: ChainInit::default(),
            seed,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.burn_in < self.n_sweeps {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "burn-in ({}) must be smaller than the number of sweeps ({})",
                self.burn_in, self.n_sweeps
            )))
        }
    }
}

impl Default for GibbsConfig {
    fn default() -> Self {
        GibbsConfig {
            n_sweeps: 100,
            burn_in: 50,
            estimator: MaskEstimator::PosteriorMean,
            init: ChainInit::default(),
            seed: 0,
        }
    }
}

/// Per-image latent variables `(v^F, v^B, m, o)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentState {
    pub v_fg: Vec<f64>,
    pub v_bg: Vec<f64>,
    pub mask: Vec<bool>,
    pub outlier: Vec<bool>,
}

impl LatentState {
    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    /// Delta constraints: `v^F_i = x_i` where `m_i = 1`, `v^B_i = x_i` where
    /// `m_i = 0, o_i = 0`; outliers only off-mask.
    pub fn satisfies_constraints(&self, x: &[f64]) -> bool {
        let n = x.len();
        if [self.v_fg.len(), self.v_bg.len(), self.mask.len(), self.outlier.len()]
            .iter()
            .any(|&l| l != n)
        {
            return false;
        }
        (0..n).all(|i| match (self.mask[i], self.outlier[i]) {
            (true, false) => self.v_fg[i].to_bits() == x[i].to_bits(),
            (true, true) => false,
            (false, false) => self.v_bg[i].to_bits() == x[i].to_bits(),
            (false, true) => true,
        }) && self
            .v_fg
            .iter()
            .chain(&self.v_bg)
            .all(|v| v.is_finite() && *v > 0.0 && *v < 1.0)
    }

    pub fn foreground_visible(&self) -> MixedVisible {
        MixedVisible {
            v: self.v_fg.clone(),
            m: self.mask.clone(),
        }
    }
}

/// Diagnostics collected during one sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepTrace {
    /// `p(h^F | v^F, m)` used to draw `h^F`.
    pub hf_means: Vec<f64>,
    /// `p(m_i = 1 | h^F, h^B, x)` used to draw the mask.
    pub mask_probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    pub mask_probs: Vec<f64>,
    pub hard_mask: Vec<bool>,
    /// Mean foreground hidden activations over the post-burn-in sweeps.
    pub hf_means: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForegroundSample {
    pub appearance_means: Vec<f64>,
    pub mask_means: Vec<f64>,
    /// Appearance mean where the mask mean is at least 0.5, `None` elsewhere.
    pub composite: Vec<Option<f64>>,
}

/// Log-weights of the three valid `(m_i, o_i)` states for one pixel.
#[derive(Debug, Clone, Copy)]
struct PixelTerms {
    /// `m = 1`: `log Beta(x; α^F, β^F) + log p(m = 1 | h^F)`
    fg: f64,
    /// `m = 0, o = 0`: `log(1 - p) + log Beta(x; α^B, β^B) + log p(m = 0 | h^F)`
    bg: f64,
    /// `m = 0, o = 1`: `log p + log U(x) + log p(m = 0 | h^F)`
    outlier: f64,
}

impl PixelTerms {
    fn mask_prob(&self) -> f64 {
        (self.fg - log_sum_exp(&[self.fg, self.bg, self.outlier])).exp()
    }

    fn outlier_prob_off_mask(&self) -> f64 {
        let z = log_sum_exp(&[self.bg, self.outlier]);
        if z == f64::NEG_INFINITY {
            0.0
        } else {
            (self.outlier - z).exp()
        }
    }
}

fn ln_or_neg_inf(p: f64) -> f64 {
    if p > 0.0 {
        p.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// Foreground mixed RBM plus background Beta RBM over the same pixel grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedModel {
    pub fg: MixedRbmParams,
    pub bg: BetaRbmParams,
}

impl MaskedModel {
    pub fn new(fg: MixedRbmParams, bg: BetaRbmParams) -> Result<Self> {
        fg.validate()?;
        bg.validate()?;
        check_len("background pixels", fg.n_pix(), bg.n_vis())?;
        Ok(MaskedModel { fg, bg })
    }

    pub fn n_pix(&self) -> usize {
        self.fg.n_pix()
    }

    fn check_image(&self, x: &[f64]) -> Result<()> {
        check_len("image", self.n_pix(), x.len())?;
        match x.iter().position(|&v| !(v > 0.0 && v < 1.0)) {
            None => Ok(()),
            Some(i) => Err(Error::Domain(format!("image pixel {i} = {} outside (0, 1)", x[i]))),
        }
    }

    fn pixel_terms(&self, hf: &[f64], hb: &[f64], x: &[f64], out: &OutlierConfig) -> Result<Vec<PixelTerms>> {
        let fg_shapes = self.fg.appearance.visible_shapes(hf);
        let bg_shapes = self.bg.visible_shapes(hb);
        let logits = self.fg.shape.mask_logits(hf);
        let p = out.effective_p();
        let (ln_keep, ln_out) = (ln_or_neg_inf(1.0 - p), ln_or_neg_inf(p));
        x.iter()
            .enumerate()
            .map(|(i, &xi)| {
                let lf = fg_shapes.ln_pdf(i, xi);
                let lb = bg_shapes.ln_pdf(i, xi);
                if !lf.is_finite() || !lb.is_finite() {
                    return Err(Error::NonFiniteDensity { pixel: i });
                }
                let off = log_sigmoid(-logits[i]);
                Ok(PixelTerms {
                    fg: lf + log_sigmoid(logits[i]),
                    bg: ln_keep + lb + off,
                    outlier: ln_out + off,
                })
            })
            .collect()
    }

    /// `p(m_i = 1 | h^F, h^B, x)` for every pixel.
    pub fn mask_posterior(&self, hf: &[f64], hb: &[f64], x: &[f64], out: &OutlierConfig) -> Result<Vec<f64>> {
        check_len("foreground hidden", self.fg.n_hid(), hf.len())?;
        check_len("background hidden", self.bg.n_hid(), hb.len())?;
        self.check_image(x)?;
        out.validate()?;
        Ok(self.pixel_terms(hf, hb, x, out)?.iter().map(PixelTerms::mask_prob).collect())
    }

    /// `p(o_i = 1 | m_i = 0, h^B, x)` off-mask; the prior `p` where `m_i = 1`.
    pub fn outlier_posterior(&self, hb: &[f64], x: &[f64], mask: &[bool], out: &OutlierConfig) -> Result<Vec<f64>> {
        check_len("background hidden", self.bg.n_hid(), hb.len())?;
        check_len("mask", self.n_pix(), mask.len())?;
        self.check_image(x)?;
        out.validate()?;
        let p = out.effective_p();
        let (ln_keep, ln_out) = (ln_or_neg_inf(1.0 - p), ln_or_neg_inf(p));
        let bg_shapes = self.bg.visible_shapes(hb);
        x.iter()
            .enumerate()
            .map(|(i, &xi)| {
                if mask[i] {
                    return Ok(p);
                }
                let lb = bg_shapes.ln_pdf(i, xi);
                if !lb.is_finite() {
                    return Err(Error::NonFiniteDensity { pixel: i });
                }
                let terms = PixelTerms {
                    fg: f64::NEG_INFINITY,
                    bg: ln_keep + lb,
                    outlier: ln_out,
                };
                Ok(terms.outlier_prob_off_mask())
            })
            .collect()
    }

    /// Draws the unconstrained latent pixels given the mask and hidden units.
    #[allow(clippy::too_many_arguments)]
    pub fn resample_latent_images<R: Rng + ?Sized>(
        &self,
        mask: &[bool],
        outlier: &[bool],
        hf: &[f64],
        hb: &[f64],
        x: &[f64],
        rng: &mut R,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        check_len("mask", self.n_pix(), mask.len())?;
        check_len("outlier", self.n_pix(), outlier.len())?;
        check_len("foreground hidden", self.fg.n_hid(), hf.len())?;
        check_len("background hidden", self.bg.n_hid(), hb.len())?;
        self.check_image(x)?;
        let fg_shapes = self.fg.appearance.visible_shapes(hf);
        let bg_shapes = self.bg.visible_shapes(hb);
        Ok(resample(&fg_shapes, &bg_shapes, mask, outlier, x, rng))
    }

    /// Initial latents: hidden units from their bias-only priors, one draw of
    /// `(m, o)` from the mask posterior, then the latent images.
    pub fn init_state<R: Rng + ?Sized>(&self, x: &[f64], out: &OutlierConfig, rng: &mut R) -> Result<LatentState> {
        self.check_image(x)?;
        out.validate()?;
        let prior = |b: &[f32]| b.iter().map(|&v| sigmoid(v as f64)).collect::<Vec<_>>();
        let hf = sample_units(&prior(&self.fg.appearance.b_hid), rng);
        let hb = sample_units(&prior(&self.bg.b_hid), rng);
        let terms = self.pixel_terms(&hf, &hb, x, out)?;
        let (mask, outlier) = sample_mask_outlier(&terms, rng);
        let (v_fg, v_bg) = resample(
            &self.fg.appearance.visible_shapes(&hf),
            &self.bg.visible_shapes(&hb),
            &mask,
            &outlier,
            x,
            rng,
        );
        Ok(LatentState {
            v_fg,
            v_bg,
            mask,
            outlier,
        })
    }

    pub fn init_state_with<R: Rng + ?Sized>(
        &self,
        x: &[f64],
        out: &OutlierConfig,
        init: ChainInit,
        rng: &mut R,
    ) -> Result<LatentState> {
        match init {
            ChainInit::Prior => self.init_state(x, out, rng),
            ChainInit::Background => {
                self.check_image(x)?;
                out.validate()?;
                let prior: Vec<f64> = self.fg.appearance.b_hid.iter().map(|&v| sigmoid(v as f64)).collect();
                let hf = sample_units(&prior, rng);
                let mask = vec![false; x.len()];
                let outlier = vec![false; x.len()];
                let hb = vec![0.0; self.bg.n_hid()];
                let (v_fg, v_bg) = resample(
                    &self.fg.appearance.visible_shapes(&hf),
                    &self.bg.visible_shapes(&hb),
                    &mask,
                    &outlier,
                    x,
                    rng,
                );
                Ok(LatentState {
                    v_fg,
                    v_bg,
                    mask,
                    outlier,
                })
            }
        }
    }

    /// One block Gibbs sweep `h → (m, o) → (v^F, v^B)`.
    pub fn gibbs_sweep<R: Rng + ?Sized>(
        &self,
        state: &LatentState,
        x: &[f64],
        out: &OutlierConfig,
        rng: &mut R,
    ) -> Result<LatentState> {
        Ok(self.sweep_traced(state, x, out, rng)?.0)
    }

    pub fn sweep_traced<R: Rng + ?Sized>(
        &self,
        state: &LatentState,
        x: &[f64],
        out: &OutlierConfig,
        rng: &mut R,
    ) -> Result<(LatentState, SweepTrace)> {
        self.check_image(x)?;
        out.validate()?;
        if !state.satisfies_constraints(x) {
            return Err(Error::InvalidParameter("latent state violates the observation constraints".into()));
        }
        let hf_means = self.fg.hidden_means_unchecked(&state.v_fg, &state.mask);
        let hf = sample_units(&hf_means, rng);
        let hb = sample_units(&self.bg.hidden_means(&state.v_bg)?, rng);

        let terms = self.pixel_terms(&hf, &hb, x, out)?;
        let mask_probs = terms.iter().map(PixelTerms::mask_prob).collect();
        let (mask, outlier) = sample_mask_outlier(&terms, rng);

        let (v_fg, v_bg) = resample(
            &self.fg.appearance.visible_shapes(&hf),
            &self.bg.visible_shapes(&hb),
            &mask,
            &outlier,
            x,
            rng,
        );
        let next = LatentState {
            v_fg,
            v_bg,
            mask,
            outlier,
        };
        Ok((next, SweepTrace { hf_means, mask_probs }))
    }

    /// Runs a fresh chain on one image and summarises the mask and `h^F`.
    pub fn segment<R: Rng + ?Sized>(
        &self,
        x: &[f64],
        out: &OutlierConfig,
        cfg: &GibbsConfig,
        rng: &mut R,
    ) -> Result<Segmentation> {
        cfg.validate()?;
        let n = self.n_pix();
        let mut state = self.init_state_with(x, out, cfg.init, rng)?;
        let mut mask_sum = vec![0.0; n];
        let mut hf_sum = vec![0.0; self.fg.n_hid()];
        let mut kept = 0usize;
        let mut last_hf = Vec::new();
        for sweep in 0..cfg.n_sweeps {
            let (next, trace) = self.sweep_traced(&state, x, out, rng)?;
            state = next;
            if sweep >= cfg.burn_in {
                kept += 1;
                for (s, &m) in mask_sum.iter_mut().zip(&state.mask) {
                    *s += m as u8 as f64;
                }
                for (s, &q) in hf_sum.iter_mut().zip(&trace.hf_means) {
                    *s += q;
                }
                last_hf = trace.hf_means;
            }
        }
        let (mask_probs, hf_means) = match cfg.estimator {
            MaskEstimator::PosteriorMean => (
                mask_sum.iter().map(|s| s / kept as f64).collect::<Vec<_>>(),
                hf_sum.iter().map(|s| s / kept as f64).collect(),
            ),
            MaskEstimator::FinalSample => (state.mask.iter().map(|&m| m as u8 as f64).collect(), last_hf),
        };
        let hard_mask = mask_probs.iter().map(|&p| p > 0.5).collect();
        Ok(Segmentation {
            mask_probs,
            hard_mask,
            hf_means,
        })
    }

    /// Segments many images; image `k` uses the stream `(cfg.seed, k)`.
    pub fn segment_batch(&self, images: &[Vec<f64>], out: &OutlierConfig, cfg: &GibbsConfig) -> Result<Vec<Segmentation>> {
        cfg.validate()?;
        images
            .par_iter()
            .enumerate()
            .map(|(k, x)| {
                let mut rng = stream(cfg.seed, &[DOMAIN_SEGMENT, k as u64]);
                self.segment(x, out, cfg, &mut rng)
            })
            .collect()
    }
}

fn sample_mask_outlier<R: Rng + ?Sized>(terms: &[PixelTerms], rng: &mut R) -> (Vec<bool>, Vec<bool>) {
    let mut mask = Vec::with_capacity(terms.len());
    let mut outlier = Vec::with_capacity(terms.len());
    for t in terms {
        if bernoulli_unchecked(t.mask_prob(), rng) {
            mask.push(true);
            outlier.push(false);
        } else {
            mask.push(false);
            outlier.push(bernoulli_unchecked(t.outlier_prob_off_mask(), rng));
        }
    }
    (mask, outlier)
}

fn resample<R: Rng + ?Sized>(
    fg: &BetaShapes,
    bg: &BetaShapes,
    mask: &[bool],
    outlier: &[bool],
    x: &[f64],
    rng: &mut R,
) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    let mut v_fg = Vec::with_capacity(n);
    let mut v_bg = Vec::with_capacity(n);
    for i in 0..n {
        if mask[i] {
            v_fg.push(x[i]);
            v_bg.push(bg.sample(i, rng));
        } else if outlier[i] {
            v_fg.push(fg.sample(i, rng));
            v_bg.push(bg.sample(i, rng));
        } else {
            v_fg.push(fg.sample(i, rng));
            v_bg.push(x[i]);
        }
    }
    (v_fg, v_bg)
}

/// Runs the foreground RBM alone from noise and returns the conditional
/// means given the final hidden sample.
pub fn sample_foreground<R: Rng + ?Sized>(fg: &MixedRbmParams, steps: usize, rng: &mut R) -> Result<ForegroundSample> {
    if steps == 0 {
        return Err(Error::InvalidParameter("sample_foreground needs at least one step".into()));
    }
    let mut vis = fg.random_visible(rng);
    let mut h = Vec::new();
    for step in 0..steps {
        h = sample_units(&fg.hidden_means(&vis)?, rng);
        if step + 1 < steps {
            vis = fg.sample_visible(&h, rng);
        }
    }
    let appearance_means = fg.appearance.visible_shapes(&h).means();
    let mask_means: Vec<f64> = fg.shape.mask_logits(&h).into_iter().map(sigmoid).collect();
    let composite = appearance_means
        .iter()
        .zip(&mask_means)
        .map(|(&a, &m)| (m >= 0.5).then_some(a))
        .collect();
    Ok(ForegroundSample {
        appearance_means,
        mask_means,
        composite,
    })
}
