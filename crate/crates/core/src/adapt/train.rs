//! Speaker-independent training and speaker-adaptive training (SAT).
//!
//! Minibatch SGD on the interpolated criterion. Per-utterance gradients of a
//! batch are computed through [`crate::exec::map`] and summed in batch order,
//! so parallel and sequential builds give identical networks.

use log::info;
use ndarray::Array2;
use rand::seq::SliceRandom;

use super::adapter::{AdapterParams, SpeakerAdapter};
use crate::error::{Error, Result};
use crate::exec;
use crate::graph::WeightedGraph;
use crate::net::{forward, sgd_step, sgd_step_slice, AcousticNet, GradRequest, LhucParams};
use crate::objective::{utterance_objective, ObjectiveConfig};
use crate::rng::stream;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Learning rate of the last epoch relative to the first; the rate
    /// decays geometrically in between.
    pub final_lr_ratio: f64,
    pub batch_size: usize,
    pub objective: ObjectiveConfig,
    /// Layers carrying per-speaker LHUC vectors during SAT.
    pub sat_layers: Vec<usize>,
    pub sat_learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 8,
            learning_rate: 0.2,
            final_lr_ratio: 1.0,
            batch_size: 8,
            objective: ObjectiveConfig::mmi_ce(),
            sat_layers: vec![0],
            sat_learning_rate: 0.5,
            seed: 42,
        }
    }
}

impl TrainConfig {
    /// Network learning rate of `epoch`; the SAT rate follows the same decay.
    pub fn epoch_rate(&self, epoch: usize) -> f64 {
        if self.epochs <= 1 {
            return self.learning_rate;
        }
        self.learning_rate * self.final_lr_ratio.powf(epoch as f64 / (self.epochs - 1) as f64)
    }

    pub fn validate(&self, num_layers: usize) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            bad.push(format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        if !(self.final_lr_ratio.is_finite() && self.final_lr_ratio > 0.0) {
            bad.push(format!("final_lr_ratio must be > 0, got {}", self.final_lr_ratio));
        }
        if !(self.sat_learning_rate.is_finite() && self.sat_learning_rate >= 0.0) {
            bad.push(format!("sat_learning_rate must be >= 0, got {}", self.sat_learning_rate));
        }
        if self.batch_size == 0 {
            bad.push("batch_size must be >= 1".into());
        }
        if let Err(Error::InvalidConfig(v)) = self.objective.validate() {
            bad.extend(v);
        }
        if let Some(l) = self.sat_layers.iter().find(|&&l| l >= num_layers) {
            bad.push(format!("SAT layer {l} >= layer count {num_layers}"));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(bad))
        }
    }
}

/// One supervised training utterance; `speaker` indexes the SAT adapters.
#[derive(Debug, Clone)]
pub struct TrainItem {
    pub speaker: usize,
    pub features: Array2<f64>,
    pub num: WeightedGraph,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    /// Mean per-utterance (frame-normalized) loss of each epoch.
    pub epoch_losses: Vec<f64>,
    pub updates: usize,
}

fn run(
    net: &mut AcousticNet,
    den: &WeightedGraph,
    items: &[TrainItem],
    cfg: &TrainConfig,
    mut sat: Option<&mut Vec<LhucParams>>,
) -> Result<TrainReport> {
    cfg.validate(net.hidden.len())?;
    if items.is_empty() {
        return Err(Error::EmptyInput);
    }
    let request = if sat.is_some() { GradRequest::BOTH } else { GradRequest::NET };
    let mut report = TrainReport::default();
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..items.len()).collect();
        order.shuffle(&mut stream(cfg.seed, "train-order", &[epoch as u64]));
        let lr = cfg.epoch_rate(epoch);
        let sat_lr = cfg.sat_learning_rate * lr / cfg.learning_rate;
        let mut sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let snapshot: &AcousticNet = net;
            let adapters: Option<&Vec<LhucParams>> = sat.as_deref();
            let results = exec::map(batch, |&i| {
                let item = &items[i];
                let lhuc = adapters.map(|a| &a[item.speaker]);
                let out = forward(snapshot, &item.features, lhuc)?;
                let obj = utterance_objective(&cfg.objective, &item.num, den, &out)?;
                let lg = (cfg.objective.gamma1 != 0.0).then_some(&obj.lfmmi_grad);
                let cg = (cfg.objective.gamma2 != 0.0).then_some(&obj.ce_grad);
                let grads = out.tape.backward(snapshot, lg, cg, request)?;
                Ok::<_, Error>((obj.loss.total, grads))
            });
            let scale = 1.0 / batch.len() as f64;
            let mut acc = net.zeros_like();
            let mut sat_acc: Vec<(usize, Vec<f64>)> = Vec::new();
            for (&i, res) in batch.iter().zip(results) {
                let (loss, grads) = res?;
                sum += loss;
                acc.add_scaled(grads.net.as_ref().expect("requested"), scale);
                if let Some(g) = grads.lhuc {
                    let spk = items[i].speaker;
                    let flat = g.to_flat();
                    match sat_acc.iter_mut().find(|(s, _)| *s == spk) {
                        Some((_, a)) => a.iter_mut().zip(&flat).for_each(|(x, y)| *x += scale * y),
                        None => sat_acc.push((spk, flat.iter().map(|y| scale * y).collect())),
                    }
                }
            }
            sgd_step(net, &acc, lr)?;
            if let Some(adapters) = sat.as_deref_mut() {
                for (spk, g) in sat_acc {
                    let mut flat = adapters[spk].to_flat();
                    sgd_step_slice("sat r", &mut flat, &g, sat_lr)?;
                    adapters[spk].set_flat(&flat);
                }
            }
            report.updates += 1;
        }
        let mean = sum / items.len() as f64;
        info!("epoch {epoch}: mean loss {mean:.5}");
        report.epoch_losses.push(mean);
    }
    Ok(report)
}

/// Trains all network parameters on the interpolated criterion.
pub fn train_si(net: &mut AcousticNet, den: &WeightedGraph, items: &[TrainItem], cfg: &TrainConfig) -> Result<TrainReport> {
    run(net, den, items, cfg, None)
}

/// Joint training of the network and one LHUC vector per training speaker
/// on `cfg.sat_layers`. Unseen speakers decode with the identity there.
pub fn sat_train(
    net: &mut AcousticNet,
    den: &WeightedGraph,
    items: &[TrainItem],
    speakers: &[String],
    cfg: &TrainConfig,
) -> Result<(TrainReport, Vec<SpeakerAdapter>)> {
    if let Some(bad) = items.iter().find(|i| i.speaker >= speakers.len()) {
        return Err(Error::InvalidArgument(format!("speaker index {} out of range", bad.speaker)));
    }
    let mut adapters = vec![LhucParams::identity(&net.widths(), &cfg.sat_layers); speakers.len()];
    let report = run(net, den, items, cfg, Some(&mut adapters))?;
    let adapters = speakers
        .iter()
        .zip(adapters)
        .map(|(s, r)| SpeakerAdapter {
            speaker_id: s.clone(),
            params: AdapterParams::Deterministic { r },
        })
        .collect();
    Ok((report, adapters))
}
