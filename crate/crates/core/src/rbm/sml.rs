//! Stochastic maximum likelihood (persistent contrastive divergence).
//!
//! The log-likelihood gradient of an RBM is the difference between data and
//! model expectations of `-∂E/∂θ`. The positive phase uses the hidden
//! Bernoulli means on the training batch; the negative phase advances each
//! persistent fantasy chain by one full Gibbs step and uses the hidden means
//! at the new visible state.

use rand::Rng;

use super::beta::log_pixels;
use super::binary::mask_as_f64;
use super::dist::clamp_pixel;
use super::{outer_add, sample_units, BetaRbmParams, BinaryRbm, MixedRbmParams, MixedVisible, ParamBlockMut, ParamGroup};
use crate::{Error, Result};

/// Learning rates per parameter group plus L2 weight decay on weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmlHyper {
    pub lr_shape: f64,
    pub lr_appearance: f64,
    pub lr_bias: f64,
    pub weight_decay: f64,
}

impl SmlHyper {
    pub fn uniform(lr: f64, weight_decay: f64) -> Self {
        SmlHyper {
            lr_shape: lr,
            lr_appearance: lr,
            lr_bias: lr,
            weight_decay,
        }
    }

    fn lr(&self, group: ParamGroup) -> f64 {
        match group {
            ParamGroup::ShapeWeight => self.lr_shape,
            ParamGroup::AppearanceWeight => self.lr_appearance,
            ParamGroup::Bias => self.lr_bias,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradBlock {
    pub name: &'static str,
    pub values: Vec<f64>,
}

/// Summed positive-minus-negative statistics, one array per parameter block.
/// Divide by `batch_size` for the per-example gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate {
    pub blocks: Vec<GradBlock>,
    pub batch_size: usize,
}

impl GradientEstimate {
    fn zeros(shapes: &[(&'static str, usize)]) -> Self {
        GradientEstimate {
            blocks: shapes
                .iter()
                .map(|&(name, n)| GradBlock {
                    name,
                    values: vec![0.0; n],
                })
                .collect(),
            batch_size: 0,
        }
    }

    pub fn block(&self, name: &str) -> Option<&[f64]> {
        self.blocks.iter().find(|b| b.name == name).map(|b| b.values.as_slice())
    }

    /// All blocks concatenated and divided by the batch size.
    pub fn flatten(&self) -> Vec<f64> {
        let n = self.batch_size.max(1) as f64;
        self.blocks.iter().flat_map(|b| b.values.iter().map(move |x| x / n)).collect()
    }
}

/// An RBM trainable by SML.
pub trait SmlModel {
    type Visible: Clone + Send + Sync;

    fn n_hidden(&self) -> usize;
    fn hidden_means(&self, v: &Self::Visible) -> Result<Vec<f64>>;
    fn sample_visible<R: Rng + ?Sized>(&self, h: &[f64], rng: &mut R) -> Self::Visible;
    /// Noise initialisation for fantasy particles.
    fn random_visible<R: Rng + ?Sized>(&self, rng: &mut R) -> Self::Visible;
    fn zero_gradient(&self) -> GradientEstimate;
    /// Adds `scale · (-∂E/∂θ)` evaluated at `(v, q)` into `grad`.
    fn accumulate(&self, v: &Self::Visible, q: &[f64], scale: f64, grad: &mut GradientEstimate);
    fn param_blocks_mut(&mut self) -> Vec<ParamBlockMut<'_>>;
}

/// Fantasy particles for one RBM.
#[derive(Debug, Clone, PartialEq)]
pub struct PersistentChains<V> {
    pub visibles: Vec<V>,
    pub hidden: Vec<Vec<f64>>,
}

impl<V: Clone> PersistentChains<V> {
    pub fn init<M, R>(model: &M, n_chains: usize, rng: &mut R) -> Self
    where
        M: SmlModel<Visible = V>,
        R: Rng + ?Sized,
    {
        PersistentChains {
            visibles: (0..n_chains).map(|_| model.random_visible(rng)).collect(),
            hidden: vec![vec![0.0; model.n_hidden()]; n_chains],
        }
    }

    pub fn len(&self) -> usize {
        self.visibles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.visibles.is_empty()
    }

    /// One full Gibbs step `h ~ p(h | v)`, `v ~ p(v | h)` on every chain.
    pub fn advance<M, R>(&mut self, model: &M, rng: &mut R) -> Result<()>
    where
        M: SmlModel<Visible = V>,
        R: Rng + ?Sized,
    {
        for (v, h) in self.visibles.iter_mut().zip(self.hidden.iter_mut()) {
            let q = model.hidden_means(v)?;
            *h = sample_units(&q, rng);
            *v = model.sample_visible(h, rng);
        }
        Ok(())
    }
}

/// Positive minus negative statistics for one minibatch; advances `chains`
/// by exactly one Gibbs step.
pub fn sml_gradient<M, R>(
    model: &M,
    batch: &[M::Visible],
    chains: &mut PersistentChains<M::Visible>,
    rng: &mut R,
) -> Result<GradientEstimate>
where
    M: SmlModel,
    R: Rng + ?Sized,
{
    if batch.is_empty() {
        return Err(Error::InvalidParameter("SML batch is empty".into()));
    }
    if chains.is_empty() {
        return Err(Error::InvalidParameter("SML needs at least one persistent chain".into()));
    }
    let mut grad = model.zero_gradient();
    grad.batch_size = batch.len();
    for v in batch {
        let q = model.hidden_means(v)?;
        model.accumulate(v, &q, 1.0, &mut grad);
    }
    chains.advance(model, rng)?;
    let neg_scale = -(batch.len() as f64) / chains.len() as f64;
    for v in &chains.visibles {
        let q = model.hidden_means(v)?;
        model.accumulate(v, &q, neg_scale, &mut grad);
    }
    Ok(grad)
}

/// `θ += lr · (grad / batch) - lr · decay · θ` (decay on weights only).
pub fn apply_gradient<M: SmlModel>(model: &mut M, grad: &GradientEstimate, hyper: &SmlHyper) -> Result<()> {
    for g in &grad.blocks {
        if g.values.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                block: g.name.to_string(),
            });
        }
    }
    let n = grad.batch_size.max(1) as f64;
    for (p, g) in model.param_blocks_mut().into_iter().zip(&grad.blocks) {
        debug_assert_eq!(p.name, g.name);
        let lr = hyper.lr(p.group);
        if lr == 0.0 {
            continue;
        }
        let decay = if p.group.is_weight() { hyper.weight_decay } else { 0.0 };
        for (theta, &gi) in p.values.iter_mut().zip(&g.values) {
            let t = *theta as f64;
            *theta = (t + lr * (gi / n - decay * t)) as f32;
        }
        if p.values.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                block: p.name.to_string(),
            });
        }
    }
    Ok(())
}

/// One SML step: gradient on `batch`, chains advanced, parameters updated.
pub fn sml_update<M, R>(
    model: &mut M,
    batch: &[M::Visible],
    chains: &mut PersistentChains<M::Visible>,
    hyper: &SmlHyper,
    rng: &mut R,
) -> Result<GradientEstimate>
where
    M: SmlModel,
    R: Rng + ?Sized,
{
    let grad = sml_gradient(model, batch, chains, rng)?;
    apply_gradient(model, &grad, hyper)?;
    Ok(grad)
}

fn add_scaled(dst: &mut [f64], src: &[f64], scale: f64) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += scale * s;
    }
}

fn accumulate_beta(p: &BetaRbmParams, v: &[f64], q: &[f64], scale: f64, blocks: &mut [GradBlock]) {
    let (logv, log1mv) = log_pixels(v);
    outer_add(&mut blocks[0].values, &logv, q, scale);
    outer_add(&mut blocks[1].values, &log1mv, q, scale);
    add_scaled(&mut blocks[2].values, &logv, scale);
    add_scaled(&mut blocks[3].values, &log1mv, scale);
    add_scaled(&mut blocks[4].values, q, scale);
    debug_assert_eq!(blocks[4].values.len(), p.n_hid());
}

fn beta_grad_shapes(p: &BetaRbmParams) -> Vec<(&'static str, usize)> {
    let (nv, nh) = (p.n_vis(), p.n_hid());
    vec![
        ("w_logv", nv * nh),
        ("w_log1mv", nv * nh),
        ("a_vis", nv),
        ("c_vis", nv),
        ("b_hid", nh),
    ]
}

fn noise_pixels<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| clamp_pixel(rng.random::<f64>())).collect()
}

impl SmlModel for BetaRbmParams {
    type Visible = Vec<f64>;

    fn n_hidden(&self) -> usize {
        self.n_hid()
    }

    fn hidden_means(&self, v: &Vec<f64>) -> Result<Vec<f64>> {
        self.hidden_conditional(v)
    }

    fn sample_visible<R: Rng + ?Sized>(&self, h: &[f64], rng: &mut R) -> Vec<f64> {
        self.sample_visible_from(h, rng)
    }

    fn random_visible<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        noise_pixels(self.n_vis(), rng)
    }

    fn zero_gradient(&self) -> GradientEstimate {
        GradientEstimate::zeros(&beta_grad_shapes(self))
    }

    fn accumulate(&self, v: &Vec<f64>, q: &[f64], scale: f64, grad: &mut GradientEstimate) {
        accumulate_beta(self, v, q, scale, &mut grad.blocks);
    }

    fn param_blocks_mut(&mut self) -> Vec<ParamBlockMut<'_>> {
        self.blocks_mut()
    }
}

impl SmlModel for MixedRbmParams {
    type Visible = MixedVisible;

    fn n_hidden(&self) -> usize {
        self.n_hid()
    }

    fn hidden_means(&self, x: &MixedVisible) -> Result<Vec<f64>> {
        self.hidden_conditional(&x.v, &x.m)
    }

    fn sample_visible<R: Rng + ?Sized>(&self, h: &[f64], rng: &mut R) -> MixedVisible {
        let logits = self.shape.mask_logits(h);
        let m = logits
            .into_iter()
            .map(|l| super::dist::bernoulli_unchecked(super::dist::sigmoid(l), rng))
            .collect();
        let v = self.appearance.sample_visible_from(h, rng);
        MixedVisible { v, m }
    }

    fn random_visible<R: Rng + ?Sized>(&self, rng: &mut R) -> MixedVisible {
        let v = noise_pixels(self.n_pix(), rng);
        let m = (0..self.n_pix()).map(|_| rng.random::<bool>()).collect();
        MixedVisible { v, m }
    }

    fn zero_gradient(&self) -> GradientEstimate {
        let np = self.n_pix();
        let mut shapes = vec![("w_shape", np * self.n_hid()), ("b_shape", np)];
        shapes.extend(beta_grad_shapes(&self.appearance));
        GradientEstimate::zeros(&shapes)
    }

    fn accumulate(&self, x: &MixedVisible, q: &[f64], scale: f64, grad: &mut GradientEstimate) {
        let m = mask_as_f64(&x.m);
        let (shape, appearance) = grad.blocks.split_at_mut(2);
        outer_add(&mut shape[0].values, &m, q, scale);
        add_scaled(&mut shape[1].values, &m, scale);
        accumulate_beta(&self.appearance, &x.v, q, scale, appearance);
    }

    fn param_blocks_mut(&mut self) -> Vec<ParamBlockMut<'_>> {
        self.blocks_mut()
    }
}

impl SmlModel for BinaryRbm {
    type Visible = Vec<f64>;

    fn n_hidden(&self) -> usize {
        self.n_hid()
    }

    fn hidden_means(&self, v: &Vec<f64>) -> Result<Vec<f64>> {
        self.hidden_conditional(v)
    }

    fn sample_visible<R: Rng + ?Sized>(&self, h: &[f64], rng: &mut R) -> Vec<f64> {
        let p = self.visible.mask_logits(h);
        p.into_iter()
            .map(|l| {
                if super::dist::bernoulli_unchecked(super::dist::sigmoid(l), rng) {
                    1.0
                } else {
                    0.0
                }
            })
            .collect()
    }

    fn random_visible<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.n_vis()).map(|_| if rng.random::<bool>() { 1.0 } else { 0.0 }).collect()
    }

    fn zero_gradient(&self) -> GradientEstimate {
        let (nv, nh) = (self.n_vis(), self.n_hid());
        GradientEstimate::zeros(&[("w_shape", nv * nh), ("b_shape", nv), ("b_hid", nh)])
    }

    fn accumulate(&self, v: &Vec<f64>, q: &[f64], scale: f64, grad: &mut GradientEstimate) {
        outer_add(&mut grad.blocks[0].values, v, q, scale);
        add_scaled(&mut grad.blocks[1].values, v, scale);
        add_scaled(&mut grad.blocks[2].values, q, scale);
    }

    fn param_blocks_mut(&mut self) -> Vec<ParamBlockMut<'_>> {
        self.blocks_mut()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn zero_learning_rate_leaves_params_but_moves_chains() {
        let mut rng = stream(1, &[]);
        let mut model = BetaRbmParams::init(6, 3, None, &mut rng).unwrap();
        let before = model.clone();
        let mut chains = PersistentChains::init(&model, 4, &mut rng);
        let chains_before = chains.clone();
        let batch = vec![vec![0.3; 6], vec![0.6; 6]];
        let hyper = SmlHyper::uniform(0.0, 1e-4);
        sml_update(&mut model, &batch, &mut chains, &hyper, &mut rng).unwrap();
        assert_eq!(model, before);
        assert_ne!(chains, chains_before);
    }

    #[test]
    fn empty_batch_and_no_chains_rejected() {
        let mut rng = stream(2, &[]);
        let mut model = BinaryRbm::zeros(3, 2);
        let mut chains = PersistentChains::init(&model, 2, &mut rng);
        let hyper = SmlHyper::uniform(0.1, 0.0);
        assert!(sml_update(&mut model, &[], &mut chains, &hyper, &mut rng).is_err());
        let mut empty = PersistentChains::init(&model, 0, &mut rng);
        assert!(sml_update(&mut model, &[vec![1.0, 0.0, 1.0]], &mut empty, &hyper, &mut rng).is_err());
    }

    #[test]
    fn overflowing_gradient_names_block() {
        let model = BetaRbmParams::zeros(2, 1);
        let mut grad = model.zero_gradient();
        grad.batch_size = 1;
        grad.blocks[3].values[1] = f64::INFINITY;
        let mut m = model.clone();
        match apply_gradient(&mut m, &grad, &SmlHyper::uniform(0.1, 0.0)) {
            Err(Error::NonFinite { block }) => assert_eq!(block, "c_vis"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn mixed_gradient_layout_matches_blocks() {
        let mut model = MixedRbmParams::zeros(4, 3);
        let grad = model.zero_gradient();
        let names: Vec<_> = model.param_blocks_mut().iter().map(|b| (b.name, b.values.len())).collect();
        let gnames: Vec<_> = grad.blocks.iter().map(|b| (b.name, b.values.len())).collect();
        assert_eq!(names, gnames);
    }

    #[test]
    fn positive_phase_pulls_biases_toward_data() {
        // data pixels all near 0.9: the log v statistic exceeds its model value
        let mut rng = stream(3, &[]);
        let mut model = BetaRbmParams::zeros(3, 2);
        let mut chains = PersistentChains::init(&model, 20, &mut rng);
        let batch = vec![vec![0.9; 3]; 10];
        let hyper = SmlHyper::uniform(0.05, 0.0);
        for _ in 0..200 {
            sml_update(&mut model, &batch, &mut chains, &hyper, &mut rng).unwrap();
        }
        let shapes = model.visible_conditional(&[0.0, 0.0]).unwrap();
        assert!(shapes.means().iter().all(|&m| m > 0.7), "{:?}", shapes.means());
    }
}
