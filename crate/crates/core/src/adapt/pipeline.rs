//! Unsupervised adaptation loop: first-pass decode, confidence selection,
//! hypothesis supervision and speaker parameter estimation.

use log::{info, warn};

use super::adapter::SpeakerAdapter;
use super::config::{AdaptConfig, Regularizer};
use super::estimate::{estimate_adapter, AdaptItem, EstimateReport};
use super::select::{bucket_utterance_lengths, confidence_score, select_by_confidence};
use crate::corpus::{silence_pad, SilenceModel, Utterance};
use crate::error::{Error, Result};
use crate::exec;
use crate::graph::{GraphSet, TokenId};
use crate::inference::{generate_lattice_with, viterbi_best_path, BestPath, LatticeOptions};
use crate::net::{forward, AcousticNet, LhucParams};
use crate::rng::{hash_id, stream};

/// Where adaptation labels come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Supervision {
    /// First-pass decoding hypotheses.
    Hypothesis,
    /// Reference labels (supervised upper bound).
    Oracle,
}

/// One speaker's adaptation data.
#[derive(Debug, Clone)]
pub struct SpeakerData<'a> {
    pub speaker: String,
    pub utterances: Vec<&'a Utterance>,
}

/// Silence model and bucket table used to pad supervision utterances.
#[derive(Debug, Clone, Copy)]
pub struct Padding<'a> {
    pub silence: &'a SilenceModel,
    pub buckets: &'a [usize],
}

#[derive(Debug, Clone, PartialEq)]
pub struct FirstPass {
    pub id: String,
    /// Decoded tokens without silence.
    pub hypothesis: Vec<TokenId>,
    pub confidence: f64,
}

#[derive(Debug, Clone)]
pub struct AdaptationOutcome {
    pub adapter: SpeakerAdapter,
    pub first_pass: Vec<FirstPass>,
    /// Ids of the utterances used for estimation.
    pub used: Vec<String>,
    /// Utterances dropped because their supervision was infeasible.
    pub dropped: usize,
    pub report: EstimateReport,
}

/// Viterbi decode; returns the best path (tokens include silence).
pub fn decode_best_path(
    net: &AcousticNet,
    graphs: &GraphSet,
    features: &ndarray::Array2<f64>,
    lhuc: Option<&LhucParams>,
) -> Result<BestPath> {
    let out = forward(net, features, lhuc)?;
    viterbi_best_path(&graphs.dec, &out.lfmmi_scores()?)
}

/// Decoded tokens without silence.
pub fn decode_tokens(
    net: &AcousticNet,
    graphs: &GraphSet,
    features: &ndarray::Array2<f64>,
    lhuc: Option<&LhucParams>,
) -> Result<Vec<TokenId>> {
    Ok(graphs.strip_silence(&decode_best_path(net, graphs, features, lhuc)?.tokens))
}

/// First-pass hypothesis and its lattice confidence.
pub fn first_pass(net: &AcousticNet, graphs: &GraphSet, utt: &Utterance, cfg: &AdaptConfig) -> Result<FirstPass> {
    let out = forward(net, &utt.features, None)?;
    let scores = out.lfmmi_scores()?;
    let best = viterbi_best_path(&graphs.dec, &scores)?;
    let lattice = generate_lattice_with(
        &graphs.dec,
        &scores,
        LatticeOptions {
            beam: cfg.beam,
            max_paths: cfg.max_lattice_paths,
        },
    )?;
    Ok(FirstPass {
        id: utt.id.clone(),
        hypothesis: graphs.strip_silence(&best.tokens),
        confidence: confidence_score(&lattice, &best)?,
    })
}

fn supervision_item(
    net: &AcousticNet,
    graphs: &GraphSet,
    utt: &Utterance,
    labels: Vec<TokenId>,
    cfg: &AdaptConfig,
    padding: Option<Padding<'_>>,
) -> Result<Option<AdaptItem>> {
    let labels = if labels.is_empty() { vec![graphs.inventory.silence()] } else { labels };
    let mut u = Utterance {
        labels,
        ..utt.clone()
    };
    if let Some(p) = padding.filter(|_| cfg.bucket) {
        if let Ok(target) = bucket_utterance_lengths(u.frames(), p.buckets) {
            let mut rng = stream(cfg.seed, "pad", &[hash_id(&u.id)]);
            u = silence_pad(&u, target, p.silence, graphs.inventory.silence(), &mut rng)?;
        }
    }
    let num = match graphs.numerator(&u.labels, u.frames()) {
        Ok(g) => g,
        Err(Error::InfeasibleSupervision { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    let si_ce = match cfg.regularizer {
        Regularizer::KlOutput { .. } => Some(forward(net, &u.features, None)?.ce),
        _ => None,
    };
    Ok(Some(AdaptItem {
        id: u.id,
        features: u.features,
        num,
        si_ce,
    }))
}

fn adapt_speaker(
    net: &AcousticNet,
    graphs: &GraphSet,
    data: &SpeakerData<'_>,
    cfg: &AdaptConfig,
    supervision: Supervision,
    padding: Option<Padding<'_>>,
) -> Result<AdaptationOutcome> {
    let mut first = Vec::new();
    let chosen: Vec<(&Utterance, Vec<TokenId>)> = match supervision {
        Supervision::Oracle => data.utterances.iter().map(|u| (*u, u.labels.clone())).collect(),
        Supervision::Hypothesis => {
            for u in &data.utterances {
                first.push(first_pass(net, graphs, u, cfg)?);
            }
            let scored: Vec<(&str, f64)> = first.iter().map(|f| (f.id.as_str(), f.confidence)).collect();
            select_by_confidence(&scored, cfg.selection_rate)?
                .into_iter()
                .map(|i| (data.utterances[i], first[i].hypothesis.clone()))
                .collect()
        }
    };
    let mut items = Vec::with_capacity(chosen.len());
    let mut dropped = 0;
    for (u, labels) in chosen {
        match supervision_item(net, graphs, u, labels, cfg, padding)? {
            Some(item) => items.push(item),
            None => dropped += 1,
        }
    }
    if dropped > 0 {
        info!("{}: dropped {dropped} infeasible utterances", data.speaker);
    }
    let used = items.iter().map(|i| i.id.clone()).collect();
    let (adapter, report) = if items.is_empty() {
        warn!("{}: no usable adaptation data; returning identity adapter", data.speaker);
        (
            SpeakerAdapter::identity(&data.speaker, &net.widths(), &cfg.hooked_layers, cfg.bayesian),
            EstimateReport::default(),
        )
    } else {
        estimate_adapter(net, &graphs.den, &items, cfg, &data.speaker)?
    };
    Ok(AdaptationOutcome {
        adapter,
        first_pass: first,
        used,
        dropped,
        report,
    })
}

/// Runs the adaptation loop for every speaker (in parallel across speakers).
/// The SI network is only read.
pub fn run_unsupervised_adaptation(
    net: &AcousticNet,
    graphs: &GraphSet,
    speakers: &[SpeakerData<'_>],
    cfg: &AdaptConfig,
    supervision: Supervision,
    padding: Option<Padding<'_>>,
) -> Result<Vec<AdaptationOutcome>> {
    cfg.validate(net.hidden.len())?;
    exec::map(speakers, |s| adapt_speaker(net, graphs, s, cfg, supervision, padding))
        .into_iter()
        .collect()
}
