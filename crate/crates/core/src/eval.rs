//! Segmentation accuracy, the random-mask control, a logistic probe on hidden
//! features, and nearest-neighbour matching of hidden codes.

use std::fmt;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::masked::{GibbsConfig, MaskedModel, OutlierConfig};
use crate::rbm::dist::{clamp_pixel, log_sigmoid, sigmoid};
use crate::rbm::BetaRbmParams;
use crate::rng::{stream, DOMAIN_PROBE};
use crate::{Error, Result};

/// Lowercase hex SHA-256.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub model_hash: String,
}

/// A metric with its sample size and a 95% Wilson interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metric: String,
    pub value: f64,
    pub n: usize,
    pub ci_low: f64,
    pub ci_high: f64,
    pub provenance: Provenance,
}

impl EvalReport {
    /// A proportion over `n` trials.
    pub fn proportion(metric: &str, value: f64, n: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::Domain(format!("{metric} = {value} is not a proportion")));
        }
        let (ci_low, ci_high) = wilson_interval(value, n);
        Ok(EvalReport {
            metric: metric.to_string(),
            value,
            n,
            ci_low,
            ci_high,
            provenance: Provenance::default(),
        })
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    pub const CSV_HEADER: [&'static str; 7] = ["metric", "value", "n", "ci_low", "ci_high", "config_hash", "model_hash"];

    fn csv_row(&self) -> [String; 7] {
        [
            self.metric.clone(),
            format!("{:.6}", self.value),
            self.n.to_string(),
            format!("{:.6}", self.ci_low),
            format!("{:.6}", self.ci_high),
            self.provenance.config_hash.clone(),
            self.provenance.model_hash.clone(),
        ]
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<24} {:.4}  (n = {}, 95% CI [{:.4}, {:.4}])",
            self.metric, self.value, self.n, self.ci_low, self.ci_high
        )
    }
}

pub fn write_reports_csv(path: &Path, reports: &[EvalReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(EvalReport::CSV_HEADER)?;
    for r in reports {
        w.write_record(r.csv_row())?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_reports_text(path: &Path, reports: &[EvalReport]) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    for r in reports {
        writeln!(f, "{r}")?;
    }
    Ok(())
}

/// 95% Wilson score interval for a proportion `p` observed over `n` trials.
pub fn wilson_interval(p: f64, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    const Z: f64 = 1.959_963_984_540_054;
    let n = n as f64;
    let z2 = Z * Z;
    let centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = Z / (1.0 + z2 / n) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Fraction of pixels on which two masks agree.
pub fn seg_accuracy(pred: &[bool], gt: &[bool]) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(Error::dim("mask pixels", gt.len(), pred.len()));
    }
    if gt.is_empty() {
        return Err(Error::Dataset("empty mask".into()));
    }
    Ok(pred.iter().zip(gt).filter(|(a, b)| a == b).count() as f64 / gt.len() as f64)
}

/// Mean per-image accuracy; the report's `n` counts pixels.
pub fn seg_accuracy_batch(preds: &[Vec<bool>], gts: &[Vec<bool>]) -> Result<EvalReport> {
    if preds.len() != gts.len() {
        return Err(Error::dim("masks", gts.len(), preds.len()));
    }
    if preds.is_empty() {
        return Err(Error::Dataset("no masks to evaluate".into()));
    }
    let mut total = 0.0;
    let mut pixels = 0;
    for (p, g) in preds.iter().zip(gts) {
        total += seg_accuracy(p, g)?;
        pixels += g.len();
    }
    EvalReport::proportion("pixel_accuracy", total / preds.len() as f64, pixels)
}

/// A uniformly random cyclic permutation (Sattolo); no element is fixed.
pub fn derangement<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Vec<usize>> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("a derangement needs at least 2 items, got {n}")));
    }
    let mut p: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..i);
        p.swap(i, j);
    }
    Ok(p)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlResult {
    pub inferred: EvalReport,
    pub permuted: EvalReport,
    /// `inferred - permuted`, in accuracy units.
    pub delta: f64,
    /// Image `k` is scored with mask `permutation[k]`.
    pub permutation: Vec<usize>,
}

/// Scores every image with another image's inferred mask.
pub fn random_mask_control(masks: &[Vec<bool>], gts: &[Vec<bool>], seed: u64) -> Result<ControlResult> {
    if masks.len() != gts.len() {
        return Err(Error::dim("masks", gts.len(), masks.len()));
    }
    let permutation = derangement(masks.len(), &mut stream(seed, &[DOMAIN_PROBE, u64::MAX]))?;
    let shuffled: Vec<Vec<bool>> = permutation.iter().map(|&j| masks[j].clone()).collect();
    let inferred = seg_accuracy_batch(masks, gts)?;
    let mut permuted = seg_accuracy_batch(&shuffled, gts)?;
    permuted.metric = "pixel_accuracy_permuted".into();
    Ok(ControlResult {
        delta: inferred.value - permuted.value,
        inferred,
        permuted,
        permutation,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub l2_lambda: f64,
    pub iterations: usize,
    /// Training examples drawn per class.
    pub per_class: usize,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            l2_lambda: 1e-2,
            iterations: 10_000,
            per_class: 10,
            seed: 0,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.l2_lambda.is_finite() || self.l2_lambda < 0.0 {
            return Err(Error::InvalidParameter(format!("l2 lambda must be >= 0, got {}", self.l2_lambda)));
        }
        if self.per_class == 0 {
            return Err(Error::InvalidParameter("probe needs at least one example per class".into()));
        }
        Ok(())
    }
}

/// Binary logistic regression `P(y = 1 | x) = σ(w·x + b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticProbe {
    pub w: Vec<f64>,
    pub b: f64,
}

impl LogisticProbe {
    pub fn logit(&self, x: &[f64]) -> f64 {
        self.b + self.w.iter().zip(x).map(|(w, x)| w * x).sum::<f64>()
    }

    pub fn predict(&self, x: &[f64]) -> bool {
        self.logit(x) > 0.0
    }

    pub fn prob(&self, x: &[f64]) -> f64 {
        sigmoid(self.logit(x))
    }
}

fn check_features(features: &[Vec<f64>]) -> Result<usize> {
    let d = features.first().map(Vec::len).ok_or_else(|| Error::Dataset("no feature vectors".into()))?;
    for (k, f) in features.iter().enumerate() {
        if f.len() != d {
            return Err(Error::dim("feature length", d, f.len()));
        }
        if f.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain(format!("feature vector {k} is not finite")));
        }
    }
    Ok(d)
}

/// Mean cross-entropy plus `λ‖w‖²` (the bias is not penalised).
pub fn probe_loss(probe: &LogisticProbe, features: &[Vec<f64>], labels: &[bool], lambda: f64) -> f64 {
    let ce: f64 = features
        .iter()
        .zip(labels)
        .map(|(x, &y)| {
            let z = probe.logit(x);
            if y {
                -log_sigmoid(z)
            } else {
                -log_sigmoid(-z)
            }
        })
        .sum::<f64>()
        / features.len() as f64;
    ce + lambda * probe.w.iter().map(|w| w * w).sum::<f64>()
}

/// Full-batch gradient descent from zero. The Hessian is bounded by
/// `diag(L + 2λ, …, L + 2λ, L)` with `L = max‖(x, 1)‖² / 4`, so steps of
/// `1/(L + 2λ)` on the weights and `1/L` on the bias never increase the loss.
/// Returns the probe and the loss before each iteration.
pub fn fit_probe_traced(features: &[Vec<f64>], labels: &[bool], cfg: &ProbeConfig) -> Result<(LogisticProbe, Vec<f64>)> {
    cfg.validate()?;
    let d = check_features(features)?;
    if labels.len() != features.len() {
        return Err(Error::dim("labels", features.len(), labels.len()));
    }
    if labels.iter().all(|&y| y) || labels.iter().all(|&y| !y) {
        return Err(Error::Dataset("probe training set contains a single class".into()));
    }
    let n = features.len() as f64;
    let max_sq = features
        .iter()
        .map(|x| 1.0 + x.iter().map(|v| v * v).sum::<f64>())
        .fold(0.0, f64::max);
    let step_w = 1.0 / (0.25 * max_sq + 2.0 * cfg.l2_lambda);
    let step_b = 1.0 / (0.25 * max_sq);
    let mut probe = LogisticProbe { w: vec![0.0; d], b: 0.0 };
    let mut losses = Vec::with_capacity(cfg.iterations + 1);
    let mut gw = vec![0.0; d];
    for _ in 0..cfg.iterations {
        losses.push(probe_loss(&probe, features, labels, cfg.l2_lambda));
        gw.iter_mut().for_each(|g| *g = 0.0);
        let mut gb = 0.0;
        for (x, &y) in features.iter().zip(labels) {
            let r = probe.prob(x) - y as u8 as f64;
            gb += r;
            for (g, v) in gw.iter_mut().zip(x) {
                *g += r * v;
            }
        }
        for (w, g) in probe.w.iter_mut().zip(&gw) {
            *w -= step_w * (g / n + 2.0 * cfg.l2_lambda * *w);
        }
        probe.b -= step_b * gb / n;
    }
    losses.push(probe_loss(&probe, features, labels, cfg.l2_lambda));
    Ok((probe, losses))
}

pub fn fit_probe(features: &[Vec<f64>], labels: &[bool], cfg: &ProbeConfig) -> Result<LogisticProbe> {
    Ok(fit_probe_traced(features, labels, cfg)?.0)
}

pub fn probe_accuracy(probe: &LogisticProbe, features: &[Vec<f64>], labels: &[bool]) -> Result<EvalReport> {
    if labels.len() != features.len() {
        return Err(Error::dim("labels", features.len(), labels.len()));
    }
    let d = check_features(features)?;
    if d != probe.w.len() {
        return Err(Error::dim("feature length", probe.w.len(), d));
    }
    let correct = features.iter().zip(labels).filter(|(x, &y)| probe.predict(x) == y).count();
    EvalReport::proportion("probe_accuracy", correct as f64 / labels.len() as f64, labels.len())
}

/// Indices of `per_class` examples of each class, drawn with the probe seed.
pub fn probe_subset(labels: &[bool], per_class: usize, seed: u64) -> Result<Vec<usize>> {
    let mut rng = stream(seed, &[DOMAIN_PROBE]);
    let mut chosen = Vec::with_capacity(2 * per_class);
    for class in [false, true] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if idx.len() < per_class {
            return Err(Error::Dataset(format!(
                "class {} has {} examples, the probe needs {per_class}",
                class as u8,
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        chosen.extend_from_slice(&idx[..per_class]);
    }
    chosen.sort_unstable();
    Ok(chosen)
}

/// Fits on a seeded class-balanced subset of the training features and scores
/// on the test features.
pub fn probe_experiment(
    train: (&[Vec<f64>], &[bool]),
    test: (&[Vec<f64>], &[bool]),
    cfg: &ProbeConfig,
) -> Result<EvalReport> {
    let idx = probe_subset(train.1, cfg.per_class, cfg.seed)?;
    let xs: Vec<Vec<f64>> = idx.iter().map(|&i| train.0[i].clone()).collect();
    let ys: Vec<bool> = idx.iter().map(|&i| train.1[i]).collect();
    let probe = fit_probe(&xs, &ys, cfg)?;
    probe_accuracy(&probe, test.0, test.1)
}

pub fn rms_distance(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len().max(1) as f64).sqrt()
}

/// For each `a_i`, the index of the nearest `b_j` by RMS distance; ties go to
/// the lowest index.
pub fn nearest_neighbours(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<Vec<usize>> {
    if a.len() != b.len() {
        return Err(Error::dim("feature sets", a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(Error::Dataset("no feature vectors to match".into()));
    }
    let d = check_features(a)?;
    let db = check_features(b)?;
    if d != db {
        return Err(Error::dim("feature length", d, db));
    }
    Ok(a.par_iter()
        .map(|x| {
            let mut best = (0, f64::INFINITY);
            for (j, y) in b.iter().enumerate() {
                let dist = rms_distance(x, y);
                if dist < best.1 {
                    best = (j, dist);
                }
            }
            best.0
        })
        .collect())
}

/// Fraction of items whose nearest neighbour in the other set is themselves.
pub fn match_rate(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<EvalReport> {
    let nn = nearest_neighbours(a, b)?;
    let hits = nn.iter().enumerate().filter(|&(i, &j)| i == j).count();
    EvalReport::proportion("match_rate", hits as f64 / a.len() as f64, a.len())
}

/// Hidden means of a plain Beta RBM on the raw images.
pub fn baseline_features(rbm: &BetaRbmParams, images: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    images
        .par_iter()
        .map(|x| {
            let x: Vec<f64> = x.iter().map(|&v| clamp_pixel(v)).collect();
            rbm.hidden_conditional(&x)
        })
        .collect()
}

/// Posterior-mean foreground hidden activations from segmentation.
pub fn fgbg_features(
    model: &MaskedModel,
    images: &[Vec<f64>],
    out: &OutlierConfig,
    cfg: &GibbsConfig,
) -> Result<Vec<Vec<f64>>> {
    let images: Vec<Vec<f64>> = images.iter().map(|x| x.iter().map(|&v| clamp_pixel(v)).collect()).collect();
    Ok(model
        .segment_batch(&images, out, cfg)?
        .into_iter()
        .map(|s| s.hf_means)
        .collect())
}
