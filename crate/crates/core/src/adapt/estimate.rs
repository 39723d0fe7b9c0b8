//! Test-time estimation of LHUC and Bayesian LHUC parameters by SGD over a
//! speaker's utterances. Only the speaker parameters are updated.

use log::warn;
use ndarray::Array2;
use rand::Rng as _;
use rand_distr::StandardNormal;

use super::adapter::{AdapterParams, SpeakerAdapter};
use super::config::{AdaptConfig, Regularizer};
use super::penalty::{gaussian_kl_grads, kl_output_penalty, map_penalty};
use crate::error::{Error, Result};
use crate::graph::WeightedGraph;
use crate::net::{forward, sgd_step_slice, AcousticNet, GradRequest, LhucParams};
use crate::objective::utterance_objective;
use crate::rng::{hash_id, stream};

/// One supervised adaptation utterance.
#[derive(Debug, Clone)]
pub struct AdaptItem {
    pub id: String,
    pub features: Array2<f64>,
    pub num: WeightedGraph,
    /// SI CE-head outputs, required by the KL-output regularizer.
    pub si_ce: Option<Array2<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EstimateReport {
    /// Mean per-step loss of each completed epoch.
    pub epoch_losses: Vec<f64>,
    pub steps: usize,
    /// Estimation stopped early on a non-finite loss or gradient.
    pub diverged: bool,
}

fn total_frames(items: &[AdaptItem]) -> usize {
    items.iter().map(|i| i.features.nrows()).sum::<usize>().max(1)
}

/// Interpolated criterion on one utterance at LHUC parameters `r`, plus the
/// KL-output penalty if configured. Returns the loss and `d loss / d r`.
fn data_term(net: &AcousticNet, den: &WeightedGraph, item: &AdaptItem, r: &LhucParams, cfg: &AdaptConfig) -> Result<(f64, LhucParams)> {
    let out = forward(net, &item.features, Some(r))?;
    let obj = utterance_objective(&cfg.objective, &item.num, den, &out)?;
    let mut loss = obj.loss.total;
    let mut ce_grad = obj.ce_grad;
    if let Regularizer::KlOutput { lambda } = cfg.regularizer {
        let si = item
            .si_ce
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument(format!("{}: KL regularizer needs SI outputs", item.id)))?;
        let (v, g) = kl_output_penalty(&out.ce, si, lambda)?;
        loss += v;
        ce_grad += &g;
    }
    let lfmmi_grad = (cfg.objective.gamma1 != 0.0).then_some(obj.lfmmi_grad);
    let ce_grad = (cfg.objective.gamma2 != 0.0 || matches!(cfg.regularizer, Regularizer::KlOutput { .. })).then_some(ce_grad);
    let grads = out.tape.backward(net, lfmmi_grad.as_ref(), ce_grad.as_ref(), GradRequest::LHUC)?;
    Ok((loss, grads.lhuc.expect("requested")))
}

/// Per-step LHUC loss and gradient. The MAP penalty is spread over the
/// speaker's `total_frames` so one epoch applies it once per frame-normalized
/// pass over the data.
pub fn lhuc_step_loss(
    net: &AcousticNet,
    den: &WeightedGraph,
    item: &AdaptItem,
    r: &LhucParams,
    cfg: &AdaptConfig,
    total_frames: usize,
) -> Result<(f64, Vec<f64>)> {
    let (mut loss, g) = data_term(net, den, item, r, cfg)?;
    let mut g = g.to_flat();
    if let Regularizer::Map { lambda } = cfg.regularizer {
        let scale = 1.0 / total_frames as f64;
        let (v, pg) = map_penalty(&r.to_flat(), &cfg.prior, lambda);
        loss += scale * v;
        for (a, b) in g.iter_mut().zip(pg) {
            *a += scale * b;
        }
    }
    Ok((loss, g))
}

/// Per-step BLHUC bound with fixed noise samples `eps` (one flat vector per
/// Monte-Carlo sample): `(1/K) sum_k L(mu + sigma * eps_k) + gamma3 KL / frames`.
/// Returns the loss and gradients with respect to `mu` and `log_sigma`.
#[allow(clippy::too_many_arguments)]
pub fn blhuc_step_loss(
    net: &AcousticNet,
    den: &WeightedGraph,
    item: &AdaptItem,
    mu: &LhucParams,
    log_sigma: &LhucParams,
    eps: &[Vec<f64>],
    cfg: &AdaptConfig,
    total_frames: usize,
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let m = mu.to_flat();
    let sigma: Vec<f64> = log_sigma.to_flat().iter().map(|l| l.exp()).collect();
    let n = m.len();
    let mut loss = 0.0;
    let mut gmu = vec![0.0; n];
    let mut gls = vec![0.0; n];
    let mut r = mu.clone();
    for e in eps {
        let sample: Vec<f64> = (0..n).map(|d| m[d] + sigma[d] * e[d]).collect();
        r.set_flat(&sample);
        let (l, g) = data_term(net, den, item, &r, cfg)?;
        loss += l;
        for (d, gd) in g.to_flat().into_iter().enumerate() {
            gmu[d] += gd;
            gls[d] += gd * e[d] * sigma[d];
        }
    }
    let inv_k = 1.0 / eps.len() as f64;
    loss *= inv_k;
    gmu.iter_mut().chain(gls.iter_mut()).for_each(|g| *g *= inv_k);
    let gamma3 = cfg.objective.gamma3;
    if gamma3 != 0.0 {
        let scale = gamma3 / total_frames as f64;
        let (kl, dmu, dls) = gaussian_kl_grads(&m, &log_sigma.to_flat(), &cfg.prior)?;
        loss += scale * kl;
        for d in 0..n {
            gmu[d] += scale * dmu[d];
            gls[d] += scale * dls[d];
        }
    }
    Ok((loss, gmu, gls))
}

/// Noise for BLHUC update `step` of `epoch`; one fresh draw per update.
pub fn blhuc_noise(seed: u64, speaker: &str, epoch: usize, step: usize, samples: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut rng = stream(seed, "blhuc-noise", &[hash_id(speaker), epoch as u64, step as u64]);
    (0..samples)
        .map(|_| (0..dim).map(|_| rng.sample(StandardNormal)).collect())
        .collect()
}

fn is_divergence(e: &Error) -> bool {
    matches!(e, Error::NonFiniteGradient { .. })
}

/// Deterministic LHUC from `r = 0`.
pub fn estimate_lhuc(net: &AcousticNet, den: &WeightedGraph, items: &[AdaptItem], cfg: &AdaptConfig, speaker: &str) -> Result<(SpeakerAdapter, EstimateReport)> {
    estimate_lhuc_traced(net, den, items, cfg, speaker, &mut |_| {})
}

/// As [`estimate_lhuc`], calling `on_step` with the parameters after every update.
pub fn estimate_lhuc_traced(
    net: &AcousticNet,
    den: &WeightedGraph,
    items: &[AdaptItem],
    cfg: &AdaptConfig,
    speaker: &str,
    on_step: &mut dyn FnMut(&LhucParams),
) -> Result<(SpeakerAdapter, EstimateReport)> {
    cfg.validate(net.hidden.len())?;
    let mut r = LhucParams::identity(&net.widths(), &cfg.hooked_layers);
    let mut report = EstimateReport::default();
    let frames = total_frames(items);
    'outer: for _ in 0..cfg.epochs {
        if items.is_empty() {
            break;
        }
        let mut sum = 0.0;
        for item in items {
            let (loss, g) = lhuc_step_loss(net, den, item, &r, cfg, frames)?;
            let mut flat = r.to_flat();
            if !loss.is_finite() {
                report.diverged = true;
            } else if let Err(e) = sgd_step_slice("lhuc r", &mut flat, &g, cfg.learning_rate) {
                if !is_divergence(&e) {
                    return Err(e);
                }
                report.diverged = true;
            }
            if report.diverged {
                warn!("{speaker}: LHUC diverged at step {}; keeping last finite adapter", report.steps);
                break 'outer;
            }
            r.set_flat(&flat);
            on_step(&r);
            sum += loss;
            report.steps += 1;
        }
        report.epoch_losses.push(sum / items.len() as f64);
    }
    Ok((
        SpeakerAdapter {
            speaker_id: speaker.to_string(),
            params: AdapterParams::Deterministic { r },
        },
        report,
    ))
}

/// Bayesian LHUC from `mu = 0`, `log_sigma = cfg.init_log_sigma`.
pub fn estimate_blhuc(net: &AcousticNet, den: &WeightedGraph, items: &[AdaptItem], cfg: &AdaptConfig, speaker: &str) -> Result<(SpeakerAdapter, EstimateReport)> {
    estimate_blhuc_traced(net, den, items, cfg, speaker, &mut |_, _| {})
}

pub fn estimate_blhuc_traced(
    net: &AcousticNet,
    den: &WeightedGraph,
    items: &[AdaptItem],
    cfg: &AdaptConfig,
    speaker: &str,
    on_step: &mut dyn FnMut(&LhucParams, &LhucParams),
) -> Result<(SpeakerAdapter, EstimateReport)> {
    cfg.validate(net.hidden.len())?;
    let mut mu = LhucParams::identity(&net.widths(), &cfg.hooked_layers);
    let mut log_sigma = mu.map(|_| cfg.init_log_sigma);
    let dim = mu.dim();
    let mut report = EstimateReport::default();
    let frames = total_frames(items);
    'outer: for epoch in 0..cfg.epochs {
        if items.is_empty() {
            break;
        }
        let mut sum = 0.0;
        for (step, item) in items.iter().enumerate() {
            let eps = blhuc_noise(cfg.seed, speaker, epoch, step, cfg.mc_samples, dim);
            let (loss, gmu, gls) = blhuc_step_loss(net, den, item, &mu, &log_sigma, &eps, cfg, frames)?;
            let mut m = mu.to_flat();
            let mut ls = log_sigma.to_flat();
            let update = if loss.is_finite() {
                sgd_step_slice("blhuc mu", &mut m, &gmu, cfg.learning_rate)
                    .and_then(|_| sgd_step_slice("blhuc log_sigma", &mut ls, &gls, cfg.learning_rate))
            } else {
                Err(Error::NonFiniteGradient {
                    param: "blhuc loss".into(),
                    index: 0,
                    value: loss,
                })
            };
            if let Err(e) = update {
                if !is_divergence(&e) {
                    return Err(e);
                }
                report.diverged = true;
                warn!("{speaker}: BLHUC diverged at step {}; keeping last finite adapter", report.steps);
                break 'outer;
            }
            mu.set_flat(&m);
            log_sigma.set_flat(&ls);
            on_step(&mu, &log_sigma);
            sum += loss;
            report.steps += 1;
        }
        report.epoch_losses.push(sum / items.len() as f64);
    }
    Ok((
        SpeakerAdapter {
            speaker_id: speaker.to_string(),
            params: AdapterParams::Bayesian { mu, log_sigma },
        },
        report,
    ))
}

/// Dispatches on `cfg.bayesian`.
pub fn estimate_adapter(net: &AcousticNet, den: &WeightedGraph, items: &[AdaptItem], cfg: &AdaptConfig, speaker: &str) -> Result<(SpeakerAdapter, EstimateReport)> {
    if cfg.bayesian {
        estimate_blhuc(net, den, items, cfg, speaker)
    } else {
        estimate_lhuc(net, den, items, cfg, speaker)
    }
}
