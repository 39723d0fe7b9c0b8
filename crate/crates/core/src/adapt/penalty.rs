//! Priors and regularizers on speaker-dependent parameters.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::inference::{log_softmax_rows, softmax_rows};

/// Gaussian prior `N(mu0, sigma0^2)` shared by every LHUC dimension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorSpec {
    pub mu0: f64,
    pub sigma0: f64,
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self { mu0: 0.0, sigma0: 1.0 }
    }
}

impl PriorSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma0 > 0.0 && self.sigma0.is_finite()) || !self.mu0.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "prior needs finite mu0 and sigma0 > 0, got ({}, {})",
                self.mu0, self.sigma0
            )));
        }
        Ok(())
    }
}

/// `KL(N(mu, sigma^2) || prior)` summed over dimensions.
pub fn gaussian_kl(mu: &[f64], sigma: &[f64], prior: &PriorSpec) -> Result<f64> {
    prior.validate()?;
    if mu.len() != sigma.len() {
        return Err(Error::DimensionMismatch {
            what: "sigma length",
            expected: mu.len(),
            got: sigma.len(),
        });
    }
    let s0 = prior.sigma0;
    let mut kl = 0.0;
    for (&m, &s) in mu.iter().zip(sigma) {
        if !(s > 0.0) {
            return Err(Error::InvalidArgument(format!("sigma must be > 0, got {s}")));
        }
        let d = m - prior.mu0;
        kl += (s0 / s).ln() + (s * s + d * d) / (2.0 * s0 * s0) - 0.5;
    }
    Ok(kl)
}

/// KL value and its gradients with respect to `mu` and `log_sigma`.
pub fn gaussian_kl_grads(mu: &[f64], log_sigma: &[f64], prior: &PriorSpec) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let sigma: Vec<f64> = log_sigma.iter().map(|l| l.exp()).collect();
    let kl = gaussian_kl(mu, &sigma, prior)?;
    let v0 = prior.sigma0 * prior.sigma0;
    let dmu = mu.iter().map(|m| (m - prior.mu0) / v0).collect();
    let dls = sigma.iter().map(|s| s * s / v0 - 1.0).collect();
    Ok((kl, dmu, dls))
}

/// `lambda * sum (r - mu0)^2 / (2 sigma0^2)` and its gradient.
pub fn map_penalty(r: &[f64], prior: &PriorSpec, lambda: f64) -> (f64, Vec<f64>) {
    let v0 = prior.sigma0 * prior.sigma0;
    let mut value = 0.0;
    let grad = r
        .iter()
        .map(|&x| {
            let d = x - prior.mu0;
            value += d * d / (2.0 * v0);
            lambda * d / v0
        })
        .collect();
    (lambda * value, grad)
}

/// Frame-averaged `KL(softmax(si) || softmax(adapted))` scaled by `lambda`,
/// with its gradient with respect to the adapted CE-head outputs.
pub fn kl_output_penalty(adapted: &Array2<f64>, si: &Array2<f64>, lambda: f64) -> Result<(f64, Array2<f64>)> {
    if adapted.dim() != si.dim() {
        return Err(Error::DimensionMismatch {
            what: "CE output shape",
            expected: si.len(),
            got: adapted.len(),
        });
    }
    let frames = adapted.nrows();
    if frames == 0 {
        return Err(Error::EmptyInput);
    }
    let scale = lambda / frames as f64;
    let lp_si = log_softmax_rows(si);
    let lp_ad = log_softmax_rows(adapted);
    let mut kl = 0.0;
    for (&a, &b) in lp_si.iter().zip(lp_ad.iter()) {
        let p = a.exp();
        if p > 0.0 {
            kl += p * (a - b);
        }
    }
    let mut grad = softmax_rows(adapted) - softmax_rows(si);
    grad *= scale;
    Ok((scale * kl.max(0.0), grad))
}
