//! Sequence-level training criteria and their interpolation.
//!
//! The LF-MMI term is the log ratio of numerator and denominator path sums;
//! the CE term is frame-level cross entropy of the CE head against
//! numerator occupancies, which are treated as constant targets.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::graph::WeightedGraph;
use crate::inference::{forward_backward, log_softmax_rows, softmax_rows, FrameScores, PosteriorTable};
use crate::net::NetOutput;

/// Interpolation scales. `gamma3` weights the BLHUC KL term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveConfig {
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: f64,
}

impl ObjectiveConfig {
    /// KL scale defaults to `gamma1 + gamma2`.
    pub fn new(gamma1: f64, gamma2: f64) -> Result<Self> {
        Self::with_kl(gamma1, gamma2, gamma1 + gamma2)
    }

    pub fn with_kl(gamma1: f64, gamma2: f64, gamma3: f64) -> Result<Self> {
        let cfg = Self { gamma1, gamma2, gamma3 };
        cfg.validate()?;
        Ok(cfg)
    }

    /// LF-MMI plus CE smoothing.
    pub fn mmi_ce() -> Self {
        Self::new(1.0, 0.1).expect("valid")
    }

    /// CE only.
    pub fn ce_only() -> Self {
        Self::new(0.0, 0.1).expect("valid")
    }

    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        for (name, v) in [("gamma1", self.gamma1), ("gamma2", self.gamma2), ("gamma3", self.gamma3)] {
            if !(v.is_finite() && v >= 0.0) {
                bad.push(format!("{name} must be a finite value >= 0, got {v}"));
            }
        }
        if self.gamma1 == 0.0 && self.gamma2 == 0.0 {
            bad.push("gamma1 and gamma2 cannot both be zero".into());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(bad))
        }
    }
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        Self::mmi_ce()
    }
}

/// Loss components. `lfmmi_term` is the log probability ratio (<= 0),
/// `ce_term` the cross entropy (>= 0), and
/// `total = -gamma1 * lfmmi_term + gamma2 * ce_term + gamma3 * kl_term`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub lfmmi_term: f64,
    pub ce_term: f64,
    pub kl_term: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn add(&mut self, other: &LossBreakdown) {
        self.lfmmi_term += other.lfmmi_term;
        self.ce_term += other.ce_term;
        self.kl_term += other.kl_term;
        self.total += other.total;
    }
}

fn check_shapes(a: &FrameScores, b: &FrameScores) -> Result<()> {
    if a.frames() != b.frames() || a.pdfs() != b.pdfs() {
        return Err(Error::DimensionMismatch {
            what: "score matrix shape",
            expected: a.frames() * a.pdfs(),
            got: b.frames() * b.pdfs(),
        });
    }
    Ok(())
}

/// Returns `-(log num - log den)` and its gradient with respect to the
/// LF-MMI head, `den_posterior - num_occupancy`.
pub fn lfmmi_loss_and_headgrad(
    num: &WeightedGraph,
    den: &WeightedGraph,
    scores: &FrameScores,
) -> Result<(f64, Array2<f64>)> {
    let (loss, grad, _) = lfmmi_with_occupancies(num, den, scores)?;
    Ok((loss, grad))
}

/// As [`lfmmi_loss_and_headgrad`], also returning the numerator occupancies.
pub fn lfmmi_with_occupancies(
    num: &WeightedGraph,
    den: &WeightedGraph,
    scores: &FrameScores,
) -> Result<(f64, Array2<f64>, PosteriorTable)> {
    let num_fb = forward_backward(num, scores)?;
    let den_fb = forward_backward(den, scores)?;
    let loss = -(num_fb.log_total - den_fb.log_total);
    let grad = den_fb.occupancies.matrix() - num_fb.occupancies.matrix();
    Ok((loss, grad, num_fb.occupancies))
}

/// Numerator occupancies used as the CE targets.
pub fn numerator_targets(num: &WeightedGraph, scores: &FrameScores) -> Result<PosteriorTable> {
    Ok(forward_backward(num, scores)?.occupancies)
}

/// Cross entropy of `softmax(ce_scores)` against fixed targets, and its
/// gradient `softmax(ce_scores) - targets`.
pub fn ce_loss_and_headgrad(targets: &PosteriorTable, ce_scores: &FrameScores) -> Result<(f64, Array2<f64>)> {
    let t = targets.matrix();
    let s = ce_scores.matrix();
    if t.dim() != s.dim() {
        return Err(Error::DimensionMismatch {
            what: "CE target shape",
            expected: s.len(),
            got: t.len(),
        });
    }
    let logp = log_softmax_rows(s);
    let mut loss = 0.0;
    for (&p, &l) in t.iter().zip(logp.iter()) {
        if p > 0.0 {
            loss -= p * l;
        }
    }
    Ok((loss, softmax_rows(s) - t))
}

/// Per-utterance objective and head gradients, both normalized by the
/// frame count and already scaled by `gamma1` / `gamma2`.
#[derive(Debug, Clone)]
pub struct UtteranceObjective {
    pub loss: LossBreakdown,
    pub lfmmi_grad: Array2<f64>,
    pub ce_grad: Array2<f64>,
}

/// Combines raw (unnormalized) components for a `frames`-long utterance.
pub fn interpolated_loss(cfg: &ObjectiveConfig, lfmmi_loss: f64, ce_loss: f64, kl: f64, frames: usize) -> LossBreakdown {
    let norm = 1.0 / frames as f64;
    let lfmmi_term = -lfmmi_loss * norm;
    let ce_term = ce_loss * norm;
    let mut total = -cfg.gamma1 * lfmmi_term + cfg.gamma2 * ce_term;
    if cfg.gamma3 != 0.0 {
        total += cfg.gamma3 * kl;
    }
    LossBreakdown {
        lfmmi_term,
        ce_term,
        kl_term: kl,
        total,
    }
}

/// Evaluates the interpolated criterion on a forward pass. The CE targets
/// are the numerator occupancies under the LF-MMI head.
pub fn utterance_objective(
    cfg: &ObjectiveConfig,
    num: &WeightedGraph,
    den: &WeightedGraph,
    out: &NetOutput,
) -> Result<UtteranceObjective> {
    let lfmmi_scores = out.lfmmi_scores()?;
    let ce_scores = out.ce_scores()?;
    check_shapes(&lfmmi_scores, &ce_scores)?;
    let frames = lfmmi_scores.frames();
    let (mmi, mut lfmmi_grad, targets) = lfmmi_with_occupancies(num, den, &lfmmi_scores)?;
    let (ce, mut ce_grad) = ce_loss_and_headgrad(&targets, &ce_scores)?;
    let norm = 1.0 / frames as f64;
    lfmmi_grad *= cfg.gamma1 * norm;
    ce_grad *= cfg.gamma2 * norm;
    Ok(UtteranceObjective {
        loss: interpolated_loss(cfg, mmi, ce, 0.0, frames),
        lfmmi_grad,
        ce_grad,
    })
}
