//! Scalar densities and samplers shared by the RBMs.

use rand::Rng;
use rand_distr::Distribution;

use crate::{Error, Result, EPS_BETA, EPS_X};

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(x))` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// `log sigmoid(x)`, finite for every finite `x`.
#[inline]
pub fn log_sigmoid(x: f64) -> f64 {
    -softplus(-x)
}

#[inline]
pub fn ln_beta_fn(alpha: f64, beta: f64) -> f64 {
    libm::lgamma(alpha) + libm::lgamma(beta) - libm::lgamma(alpha + beta)
}

/// Log-sum-exp over a slice; `-inf` entries are ignored.
pub fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

#[inline]
pub(crate) fn beta_ln_pdf_unchecked(alpha: f64, beta: f64, x: f64) -> f64 {
    (alpha - 1.0) * x.ln() + (beta - 1.0) * (-x).ln_1p() - ln_beta_fn(alpha, beta)
}

/// Log of the Beta(alpha, beta) density at `x`, computed through log-gamma.
pub fn beta_log_density(alpha: f64, beta: f64, x: f64) -> Result<f64> {
    if !(alpha.is_finite() && beta.is_finite()) || alpha < EPS_BETA || beta < EPS_BETA {
        return Err(Error::Domain(format!(
            "Beta shape parameters ({alpha}, {beta}) must be finite and >= {EPS_BETA}"
        )));
    }
    if !(x > 0.0 && x < 1.0) {
        return Err(Error::Domain(format!("Beta density argument {x} not in (0, 1)")));
    }
    Ok(beta_ln_pdf_unchecked(alpha, beta, x))
}

/// Clamps a pixel value into `[EPS_X, 1 - EPS_X]`.
#[inline]
pub fn clamp_pixel(x: f64) -> f64 {
    x.clamp(EPS_X, 1.0 - EPS_X)
}

#[inline]
pub(crate) fn clamp_shape(s: f64) -> f64 {
    // NaN maps to the floor as well
    if s >= EPS_BETA {
        s
    } else {
        EPS_BETA
    }
}

pub(crate) fn sample_beta_unchecked<R: Rng + ?Sized>(alpha: f64, beta: f64, rng: &mut R) -> f64 {
    let x = match rand_distr::Beta::new(alpha, beta) {
        Ok(d) => d.sample(rng),
        Err(_) => alpha / (alpha + beta),
    };
    if x.is_nan() {
        return clamp_pixel(alpha / (alpha + beta));
    }
    clamp_pixel(x)
}

/// Draws from Beta(alpha, beta), clamped into `[EPS_X, 1 - EPS_X]`.
pub fn sample_beta<R: Rng + ?Sized>(alpha: f64, beta: f64, rng: &mut R) -> Result<f64> {
    if !(alpha.is_finite() && beta.is_finite()) || alpha <= 0.0 || beta <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "Beta shape parameters ({alpha}, {beta}) must be positive and finite"
        )));
    }
    Ok(sample_beta_unchecked(alpha, beta, rng))
}

#[inline]
pub(crate) fn bernoulli_unchecked<R: Rng + ?Sized>(p: f64, rng: &mut R) -> bool {
    rng.random::<f64>() < p
}

pub fn sample_bernoulli<R: Rng + ?Sized>(p: f64, rng: &mut R) -> Result<bool> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!("Bernoulli probability {p} not in [0, 1]")));
    }
    Ok(bernoulli_unchecked(p, rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    /// Trapezoid rule in logit space; the integrand decays doubly
    /// exponentially at both ends so this is very accurate.
    fn integrate_unit(f: impl Fn(f64) -> f64) -> f64 {
        let (lo, hi, n) = (-30.0, 30.0, 30_000);
        let step = (hi - lo) / n as f64;
        (0..=n)
            .map(|k| {
                let t = lo + step * k as f64;
                let x = sigmoid(t);
                let w = if k == 0 || k == n { 0.5 } else { 1.0 };
                w * f(x) * x * (1.0 - x)
            })
            .sum::<f64>()
            * step
    }

    #[test]
    fn uniform_density_is_zero_everywhere() {
        for x in [0.01, 0.3, 0.5, 0.99] {
            assert!(beta_log_density(1.0, 1.0, x).unwrap().abs() < 1e-14);
        }
    }

    #[test]
    fn linear_density_at_half() {
        // pdf 2x at x = 0.5
        assert!(beta_log_density(2.0, 1.0, 0.5).unwrap().abs() < 1e-14);
    }

    #[test]
    fn density_normalises() {
        for (a, b) in [(1.0, 1.0), (2.0, 5.0), (4.0, 2.0), (30.0, 12.0), (1.5, 1.5)] {
            let z = integrate_unit(|x| beta_log_density(a, b, x).unwrap().exp());
            assert!((z - 1.0).abs() < 1e-8, "({a},{b}) integrates to {z}");
        }
    }

    #[test]
    fn density_domain_errors() {
        assert!(beta_log_density(1.0, 1.0, 0.0).is_err());
        assert!(beta_log_density(1.0, 1.0, 1.0).is_err());
        assert!(beta_log_density(0.001, 1.0, 0.5).is_err());
        assert!(beta_log_density(f64::NAN, 1.0, 0.5).is_err());
    }

    #[test]
    fn bernoulli_extremes() {
        let mut rng = stream(1, &[]);
        for _ in 0..1000 {
            assert!(!sample_bernoulli(0.0, &mut rng).unwrap());
            assert!(sample_bernoulli(1.0, &mut rng).unwrap());
        }
        assert!(sample_bernoulli(1.5, &mut rng).is_err());
    }

    fn check_beta_mean(a: f64, b: f64) {
        let mut rng = stream(11, &[a.to_bits(), b.to_bits()]);
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| sample_beta(a, b, &mut rng).unwrap()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = a * b / ((a + b).powi(2) * (a + b + 1.0));
        let se = (var / n as f64).sqrt();
        assert!((mean - a / (a + b)).abs() < 3.0 * se, "mean {mean} for ({a},{b})");
        assert!(xs.iter().all(|&x| (EPS_X..=1.0 - EPS_X).contains(&x)));
    }

    #[test]
    fn beta_sampler_moments() {
        check_beta_mean(1.0, 1.0);
        check_beta_mean(4.0, 2.0);
    }

    #[test]
    fn beta_sampler_rejects_bad_shapes() {
        let mut rng = stream(1, &[]);
        assert!(sample_beta(0.0, 1.0, &mut rng).is_err());
        assert!(sample_beta(1.0, f64::INFINITY, &mut rng).is_err());
    }

    #[test]
    fn stable_logistic_functions() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(log_sigmoid(-1e4).is_finite());
        assert!((log_sigmoid(-1e4) + 1e4).abs() < 1e-9);
        assert!(log_sigmoid(1e4) == 0.0);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY, 0.0]), 0.0);
    }
}
