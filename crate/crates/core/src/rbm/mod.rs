//! Binary, Beta and mixed (shape + appearance) RBMs.
//!
//! All energies carry a leading minus and densities are `p ∝ exp(-E)`.
//! Weight matrices are stored row-major as `[n_vis × n_hid]` in `f32`;
//! arithmetic is done in `f64`.

mod beta;
mod binary;
pub mod dist;
mod mixed;
pub mod sml;

use rand::Rng;

pub use beta::{BetaRbmParams, BetaShapes};
pub use binary::{BinaryRbm, BinaryShapeParams};
pub use dist::{beta_log_density, sample_bernoulli, sample_beta, sigmoid};
pub use mixed::{MixedRbmParams, MixedVisible};
pub use sml::{sml_update, GradientEstimate, PersistentChains, SmlHyper, SmlModel};

/// Learning-rate group a parameter block belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamGroup {
    ShapeWeight,
    AppearanceWeight,
    Bias,
}

impl ParamGroup {
    pub fn is_weight(self) -> bool {
        !matches!(self, ParamGroup::Bias)
    }
}

/// Mutable view of one named parameter array.
pub struct ParamBlockMut<'a> {
    pub name: &'static str,
    pub group: ParamGroup,
    pub values: &'a mut [f32],
}

/// Named read-only view, used by serialisation.
pub struct ParamBlock<'a> {
    pub name: &'static str,
    pub shape: Vec<usize>,
    pub values: &'a [f32],
}

/// Sampled hidden units, optionally with the Bernoulli means they were drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenState {
    pub h: Vec<f64>,
    pub q: Option<Vec<f64>>,
}

impl HiddenState {
    pub fn zeros(n_hid: usize) -> Self {
        HiddenState {
            h: vec![0.0; n_hid],
            q: None,
        }
    }

    pub fn sample<R: Rng + ?Sized>(q: Vec<f64>, rng: &mut R) -> Self {
        let h = sample_units(&q, rng);
        HiddenState { h, q: Some(q) }
    }

    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }
}

pub(crate) fn sample_units<R: Rng + ?Sized>(q: &[f64], rng: &mut R) -> Vec<f64> {
    q.iter()
        .map(|&p| if dist::bernoulli_unchecked(p, rng) { 1.0 } else { 0.0 })
        .collect()
}

pub(crate) fn all_finite(xs: &[f32]) -> bool {
    xs.iter().all(|x| x.is_finite())
}

pub(crate) fn normal_weights<R: Rng + ?Sized>(n: usize, std: f64, rng: &mut R) -> Vec<f32> {
    use rand_distr::{Distribution, Normal};
    let normal = Normal::new(0.0, std).expect("finite std");
    (0..n).map(|_| normal.sample(rng) as f32).collect()
}

/// Adds `Σ_i s_i · W[i, :]` into `out` for a row-major `[n × out.len()]` matrix.
#[inline]
pub(crate) fn accumulate_rows(w: &[f32], s: &[f64], out: &mut [f64]) {
    let n_hid = out.len();
    for (i, &si) in s.iter().enumerate() {
        if si == 0.0 {
            continue;
        }
        let row = &w[i * n_hid..(i + 1) * n_hid];
        for (o, &wij) in out.iter_mut().zip(row) {
            *o += si * wij as f64;
        }
    }
}

/// `W[i, :] · h`.
#[inline]
pub(crate) fn row_dot(w: &[f32], i: usize, h: &[f64]) -> f64 {
    let n_hid = h.len();
    w[i * n_hid..(i + 1) * n_hid]
        .iter()
        .zip(h)
        .map(|(&wij, &hj)| wij as f64 * hj)
        .sum()
}

/// `G[i, j] += scale · s_i · q_j`.
#[inline]
pub(crate) fn outer_add(g: &mut [f64], s: &[f64], q: &[f64], scale: f64) {
    let n_hid = q.len();
    for (i, &si) in s.iter().enumerate() {
        if si == 0.0 {
            continue;
        }
        let f = scale * si;
        for (gij, &qj) in g[i * n_hid..(i + 1) * n_hid].iter_mut().zip(q) {
            *gij += f * qj;
        }
    }
}
