use rand::Rng;

use super::beta::{check_open_unit, log_pixels};
use super::binary::mask_as_f64;
use super::dist::sigmoid;
use super::{BetaRbmParams, BetaShapes, BinaryShapeParams, ParamBlockMut};
use crate::error::check_len;
use crate::{Error, Result};

/// Joint shape + appearance RBM: `E_mixed(v, m, h) = E_bin(m, h) + E_beta(v, h)`
/// with one hidden layer shared by both visible blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedRbmParams {
    pub shape: BinaryShapeParams,
    pub appearance: BetaRbmParams,
}

/// Visible configuration of the mixed RBM.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedVisible {
    pub v: Vec<f64>,
    pub m: Vec<bool>,
}

impl MixedRbmParams {
    pub fn new(shape: BinaryShapeParams, appearance: BetaRbmParams) -> Result<Self> {
        let p = MixedRbmParams { shape, appearance };
        p.validate()?;
        Ok(p)
    }

    pub fn zeros(n_pix: usize, n_hid: usize) -> Self {
        MixedRbmParams {
            shape: BinaryShapeParams::zeros(n_pix, n_hid),
            appearance: BetaRbmParams::zeros(n_pix, n_hid),
        }
    }

    /// Random weights; uniform appearance and mask prior 0.5 unless an
    /// appearance model is supplied (e.g. from appearance pretraining).
    pub fn init<R: Rng + ?Sized>(
        n_pix: usize,
        n_hid: usize,
        appearance: Option<BetaRbmParams>,
        rng: &mut R,
    ) -> Result<Self> {
        let shape = BinaryShapeParams::init(n_pix, n_hid, rng);
        let appearance = match appearance {
            Some(a) => a,
            None => BetaRbmParams::init(n_pix, n_hid, None, rng)?,
        };
        Self::new(shape, appearance)
    }

    pub fn n_pix(&self) -> usize {
        self.shape.n_pix()
    }

    pub fn n_hid(&self) -> usize {
        self.appearance.n_hid()
    }

    pub fn validate(&self) -> Result<()> {
        self.shape.validate()?;
        self.appearance.validate()?;
        if self.shape.n_hid() != self.appearance.n_hid() {
            return Err(Error::dim("shared hidden layer", self.appearance.n_hid(), self.shape.n_hid()));
        }
        check_len("shape pixels", self.appearance.n_vis(), self.shape.n_pix())
    }

    pub fn blocks_mut(&mut self) -> Vec<ParamBlockMut<'_>> {
        let mut blocks = self.shape.blocks_mut();
        blocks.extend(self.appearance.blocks_mut());
        blocks
    }

    pub fn energy(&self, v: &[f64], m: &[f64], h: &[f64]) -> Result<f64> {
        Ok(self.shape.energy(m, h)? + self.appearance.energy(v, h)?)
    }

    /// `p(h_j = 1 | v, m)`, summing shape and appearance inputs.
    pub fn hidden_conditional(&self, v: &[f64], m: &[bool]) -> Result<Vec<f64>> {
        check_len("visible vector", self.n_pix(), v.len())?;
        check_len("mask", self.n_pix(), m.len())?;
        check_open_unit(v)?;
        Ok(self.hidden_means_unchecked(v, m))
    }

    pub(crate) fn hidden_means_unchecked(&self, v: &[f64], m: &[bool]) -> Vec<f64> {
        let (logv, log1mv) = log_pixels(v);
        let mut input = vec![0.0; self.n_hid()];
        self.appearance.hidden_input_into(&logv, &log1mv, &mut input);
        self.shape.hidden_input_into(&mask_as_f64(m), &mut input);
        input.into_iter().map(sigmoid).collect()
    }

    pub fn mask_conditional(&self, h: &[f64]) -> Result<Vec<f64>> {
        self.shape.mask_conditional(h)
    }

    pub fn appearance_conditional(&self, h: &[f64]) -> Result<BetaShapes> {
        self.appearance.visible_conditional(h)
    }
}
