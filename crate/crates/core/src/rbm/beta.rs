use rand::Rng;

use super::dist::{self, clamp_shape, sigmoid, softplus};
use super::{accumulate_rows, all_finite, normal_weights, row_dot, ParamBlock, ParamBlockMut, ParamGroup};
use crate::error::check_len;
use crate::{Error, Result, EPS_BETA};

/// Beta RBM in exponential-family form.
///
/// ```text
/// E(v, h) = -Σ_i [(a_i + Σ_j U_ij h_j) log v_i + (c_i + Σ_j V_ij h_j) log(1 - v_i)] - Σ_j b_j h_j
/// ```
///
/// so that `v_i | h ~ Beta(1 + a_i + U_i·h, 1 + c_i + V_i·h)`, with both
/// shape parameters floored at [`EPS_BETA`].
#[derive(Debug, Clone, PartialEq)]
pub struct BetaRbmParams {
    n_vis: usize,
    n_hid: usize,
    /// Coefficient on `log v_i`, `[n_vis × n_hid]`.
    pub w_logv: Vec<f32>,
    /// Coefficient on `log(1 - v_i)`, `[n_vis × n_hid]`.
    pub w_log1mv: Vec<f32>,
    pub a_vis: Vec<f32>,
    pub c_vis: Vec<f32>,
    pub b_hid: Vec<f32>,
}

/// Per-pixel Beta shape parameters of `p(v | h)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaShapes {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

impl BetaShapes {
    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    pub fn means(&self) -> Vec<f64> {
        self.alpha
            .iter()
            .zip(&self.beta)
            .map(|(a, b)| a / (a + b))
            .collect()
    }

    pub fn variances(&self) -> Vec<f64> {
        self.alpha
            .iter()
            .zip(&self.beta)
            .map(|(a, b)| a * b / ((a + b).powi(2) * (a + b + 1.0)))
            .collect()
    }

    pub fn ln_pdf(&self, i: usize, x: f64) -> f64 {
        dist::beta_ln_pdf_unchecked(self.alpha[i], self.beta[i], x)
    }

    pub fn sample<R: Rng + ?Sized>(&self, i: usize, rng: &mut R) -> f64 {
        dist::sample_beta_unchecked(self.alpha[i], self.beta[i], rng)
    }
}

pub(crate) fn check_open_unit(v: &[f64]) -> Result<()> {
    match v.iter().position(|&x| !(x > 0.0 && x < 1.0)) {
        None => Ok(()),
        Some(i) => Err(Error::Domain(format!(
            "pixel {i} has value {} outside the open unit interval",
            v[i]
        ))),
    }
}

pub(crate) fn log_pixels(v: &[f64]) -> (Vec<f64>, Vec<f64>) {
    (
        v.iter().map(|x| x.ln()).collect(),
        v.iter().map(|x| (-x).ln_1p()).collect(),
    )
}

impl BetaRbmParams {
    /// All-zero parameters: every visible conditional is uniform.
    pub fn zeros(n_vis: usize, n_hid: usize) -> Self {
        BetaRbmParams {
            n_vis,
            n_hid,
            w_logv: vec![0.0; n_vis * n_hid],
            w_log1mv: vec![0.0; n_vis * n_hid],
            a_vis: vec![0.0; n_vis],
            c_vis: vec![0.0; n_vis],
            b_hid: vec![0.0; n_hid],
        }
    }

    /// Weights from `Normal(0, 0.01²)`; visible biases moment-matched to the
    /// per-pixel mean and variance of `data` when given, uniform otherwise.
    pub fn init<R: Rng + ?Sized>(
        n_vis: usize,
        n_hid: usize,
        data: Option<&[Vec<f64>]>,
        rng: &mut R,
    ) -> Result<Self> {
        let mut p = Self::zeros(n_vis, n_hid);
        p.w_logv = normal_weights(n_vis * n_hid, 0.01, rng);
        p.w_log1mv = normal_weights(n_vis * n_hid, 0.01, rng);
        if let Some(data) = data.filter(|d| !d.is_empty()) {
            let (alpha, beta) = moment_match(data, n_vis)?;
            for i in 0..n_vis {
                p.a_vis[i] = (alpha[i] - 1.0) as f32;
                p.c_vis[i] = (beta[i] - 1.0) as f32;
            }
        }
        Ok(p)
    }

    /// Assembles parameters from raw arrays, checking shapes and finiteness.
    pub fn from_parts(
        n_vis: usize,
        n_hid: usize,
        w_logv: Vec<f32>,
        w_log1mv: Vec<f32>,
        a_vis: Vec<f32>,
        c_vis: Vec<f32>,
        b_hid: Vec<f32>,
    ) -> Result<Self> {
        let p = BetaRbmParams {
            n_vis,
            n_hid,
            w_logv,
            w_log1mv,
            a_vis,
            c_vis,
            b_hid,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn n_vis(&self) -> usize {
        self.n_vis
    }

    pub fn n_hid(&self) -> usize {
        self.n_hid
    }

    pub fn validate(&self) -> Result<()> {
        check_len("w_logv", self.n_vis * self.n_hid, self.w_logv.len())?;
        check_len("w_log1mv", self.n_vis * self.n_hid, self.w_log1mv.len())?;
        check_len("a_vis", self.n_vis, self.a_vis.len())?;
        check_len("c_vis", self.n_vis, self.c_vis.len())?;
        check_len("b_hid", self.n_hid, self.b_hid.len())?;
        for b in self.blocks() {
            if !all_finite(b.values) {
                return Err(Error::NonFinite {
                    block: b.name.to_string(),
                });
            }
        }
        Ok(())
    }

    pub fn blocks(&self) -> Vec<ParamBlock<'_>> {
        vec![
            ParamBlock {
                name: "w_logv",
                shape: vec![self.n_vis, self.n_hid],
                values: &self.w_logv,
            },
            ParamBlock {
                name: "w_log1mv",
                shape: vec![self.n_vis, self.n_hid],
                values: &self.w_log1mv,
            },
            ParamBlock {
                name: "a_vis",
                shape: vec![self.n_vis],
                values: &self.a_vis,
            },
            ParamBlock {
                name: "c_vis",
                shape: vec![self.n_vis],
                values: &self.c_vis,
            },
            ParamBlock {
                name: "b_hid",
                shape: vec![self.n_hid],
                values: &self.b_hid,
            },
        ]
    }

    pub fn blocks_mut(&mut self) -> Vec<ParamBlockMut<'_>> {
        vec![
            ParamBlockMut {
                name: "w_logv",
                group: ParamGroup::AppearanceWeight,
                values: &mut self.w_logv,
            },
            ParamBlockMut {
                name: "w_log1mv",
                group: ParamGroup::AppearanceWeight,
                values: &mut self.w_log1mv,
            },
            ParamBlockMut {
                name: "a_vis",
                group: ParamGroup::Bias,
                values: &mut self.a_vis,
            },
            ParamBlockMut {
                name: "c_vis",
                group: ParamGroup::Bias,
                values: &mut self.c_vis,
            },
            ParamBlockMut {
                name: "b_hid",
                group: ParamGroup::Bias,
                values: &mut self.b_hid,
            },
        ]
    }

    pub fn energy(&self, v: &[f64], h: &[f64]) -> Result<f64> {
        check_len("visible vector", self.n_vis, v.len())?;
        check_len("hidden vector", self.n_hid, h.len())?;
        check_open_unit(v)?;
        let mut e = 0.0;
        for i in 0..self.n_vis {
            let sa = self.a_vis[i] as f64 + row_dot(&self.w_logv, i, h);
            let sc = self.c_vis[i] as f64 + row_dot(&self.w_log1mv, i, h);
            e -= sa * v[i].ln() + sc * (-v[i]).ln_1p();
        }
        e -= self.b_hid.iter().zip(h).map(|(&b, &hj)| b as f64 * hj).sum::<f64>();
        Ok(e)
    }

    /// Free energy `F(v) = -log Σ_h exp(-E(v, h))`.
    pub fn free_energy(&self, v: &[f64]) -> Result<f64> {
        check_len("visible vector", self.n_vis, v.len())?;
        check_open_unit(v)?;
        let (logv, log1mv) = log_pixels(v);
        let mut input = vec![0.0; self.n_hid];
        self.hidden_input_into(&logv, &log1mv, &mut input);
        let vis: f64 = (0..self.n_vis)
            .map(|i| self.a_vis[i] as f64 * logv[i] + self.c_vis[i] as f64 * log1mv[i])
            .sum();
        Ok(-vis - input.iter().map(|&x| softplus(x)).sum::<f64>())
    }

    pub fn visible_conditional(&self, h: &[f64]) -> Result<BetaShapes> {
        check_len("hidden vector", self.n_hid, h.len())?;
        Ok(self.visible_shapes(h))
    }

    pub(crate) fn visible_shapes(&self, h: &[f64]) -> BetaShapes {
        let mut alpha = Vec::with_capacity(self.n_vis);
        let mut beta = Vec::with_capacity(self.n_vis);
        for i in 0..self.n_vis {
            alpha.push(clamp_shape(1.0 + self.a_vis[i] as f64 + row_dot(&self.w_logv, i, h)));
            beta.push(clamp_shape(1.0 + self.c_vis[i] as f64 + row_dot(&self.w_log1mv, i, h)));
        }
        BetaShapes { alpha, beta }
    }

    /// Bernoulli means `p(h_j = 1 | v)`.
    pub fn hidden_conditional(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len("visible vector", self.n_vis, v.len())?;
        check_open_unit(v)?;
        let (logv, log1mv) = log_pixels(v);
        let mut input = vec![0.0; self.n_hid];
        self.hidden_input_into(&logv, &log1mv, &mut input);
        Ok(input.into_iter().map(sigmoid).collect())
    }

    /// Total hidden input: `b_j + Σ_i U_ij log v_i + V_ij log(1 - v_i)`, added into `out`.
    pub(crate) fn hidden_input_into(&self, logv: &[f64], log1mv: &[f64], out: &mut [f64]) {
        for (o, &b) in out.iter_mut().zip(&self.b_hid) {
            *o += b as f64;
        }
        accumulate_rows(&self.w_logv, logv, out);
        accumulate_rows(&self.w_log1mv, log1mv, out);
    }

    pub(crate) fn sample_visible_from<R: Rng + ?Sized>(&self, h: &[f64], rng: &mut R) -> Vec<f64> {
        let shapes = self.visible_shapes(h);
        (0..self.n_vis).map(|i| shapes.sample(i, rng)).collect()
    }
}

/// Per-pixel Beta(α, β) matching the sample mean and variance of `data`.
pub(crate) fn moment_match(data: &[Vec<f64>], n_vis: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = data.len() as f64;
    let mut mean = vec![0.0; n_vis];
    for x in data {
        check_len("training vector", n_vis, x.len())?;
        for (m, &xi) in mean.iter_mut().zip(x) {
            *m += xi / n;
        }
    }
    let mut var = vec![0.0; n_vis];
    for x in data {
        for i in 0..n_vis {
            var[i] += (x[i] - mean[i]).powi(2) / n;
        }
    }
    let mut alpha = Vec::with_capacity(n_vis);
    let mut beta = Vec::with_capacity(n_vis);
    for i in 0..n_vis {
        let m = mean[i].clamp(1e-3, 1.0 - 1e-3);
        let vmax = m * (1.0 - m);
        let v = var[i].clamp(1e-6, 0.99 * vmax);
        let concentration = (vmax / v - 1.0).clamp(2.0 * EPS_BETA, 1e3);
        alpha.push((m * concentration).max(EPS_BETA));
        beta.push(((1.0 - m) * concentration).max(EPS_BETA));
    }
    Ok((alpha, beta))
}
