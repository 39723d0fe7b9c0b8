//! The reproducible end-to-end experiment: corpora, SI and SAT training,
//! every configured adaptation condition, decoding and scoring.

use std::collections::BTreeMap;
use std::time::Instant;

use log::info;
use serde::{Deserialize, Serialize};

use crate::adapt::{
    default_bucket_table, run_unsupervised_adaptation, sat_train, select_by_confidence, train_si, AdaptationOutcome,
    FirstPass, Padding, SpeakerAdapter, SpeakerData, Supervision, TrainConfig, TrainItem,
};
use crate::adapt::decode_tokens;
use crate::config::{Condition, ExperimentConfig};
use crate::corpus::{generate_corpus, Corpus, Utterance};
use crate::error::{Error, Result};
use crate::exec;
use crate::graph::{GraphSet, TokenId};
use crate::metrics::{align, score_token_error_rate, ScoreReport};
use crate::net::{AcousticNet, LhucParams, NetConfig};
use crate::rng::stream;

/// Oracle token accuracy of first-pass hypotheses split by the selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionStats {
    pub selected: usize,
    pub rejected: usize,
    /// Mean per-utterance `1 - errors / reference length`.
    pub selected_accuracy: Option<f64>,
    pub rejected_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionResult {
    pub name: String,
    pub method: String,
    pub criterion: Option<String>,
    pub supervision: Option<String>,
    pub selection_rate: Option<f64>,
    /// Adaptation utterances per speaker; `None` means all of them.
    pub adaptation_utterances: Option<usize>,
    pub sat: bool,
    pub test_set: String,
    pub ter: f64,
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
    pub reference_tokens: usize,
    pub per_speaker: BTreeMap<String, SpeakerScore>,
    pub relative_reduction: Option<f64>,
    pub selection: Option<SelectionStats>,
    pub dropped_utterances: usize,
    pub diverged_speakers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerScore {
    pub ter: f64,
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
    pub reference_tokens: usize,
}

/// Deterministic metrics; wall-clock times are kept in [`Timing`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub format_version: u32,
    pub seed: u64,
    pub baseline: String,
    pub baseline_ter: f64,
    pub si_train_losses: Vec<f64>,
    pub sat_train_losses: Vec<f64>,
    pub conditions: Vec<ConditionResult>,
    pub sweep: Vec<ConditionResult>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub stages: Vec<(String, f64)>,
    pub total_seconds: f64,
}

/// SAT network with the training speakers' adapters.
pub struct SatModel {
    pub net: AcousticNet,
    pub losses: Vec<f64>,
    pub adapters: Vec<SpeakerAdapter>,
}

/// Everything trained once and shared by the conditions.
pub struct Prepared {
    pub graphs: GraphSet,
    pub train: Corpus,
    pub test: Corpus,
    pub si: AcousticNet,
    pub si_losses: Vec<f64>,
    pub sat: Option<SatModel>,
}

/// Supervision-ready training items, dropping infeasible utterances.
pub fn train_items(graphs: &GraphSet, corpus: &Corpus) -> Result<(Vec<TrainItem>, Vec<String>)> {
    let speakers = corpus.speakers();
    let index: BTreeMap<&str, usize> = speakers.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let built = exec::map(&corpus.utterances, |u| {
        match graphs.numerator(&u.labels, u.frames()) {
            Ok(num) => Ok(Some(TrainItem {
                speaker: index[u.speaker.as_str()],
                features: u.features.clone(),
                num,
            })),
            Err(Error::InfeasibleSupervision { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    });
    let mut items = Vec::with_capacity(built.len());
    for b in built {
        if let Some(i) = b? {
            items.push(i);
        }
    }
    Ok((items, speakers))
}

pub fn initial_net(cfg: &ExperimentConfig, pdf_count: usize) -> Result<AcousticNet> {
    let nc = NetConfig::new(cfg.dim, cfg.hidden.clone(), pdf_count);
    AcousticNet::new(&nc, &mut stream(cfg.seed, "init", &[]))
}

/// Bucket table spanning the corpus utterance length range.
pub fn bucket_table(cfg: &ExperimentConfig) -> Vec<usize> {
    let min = 2 * cfg.min_silence + cfg.min_tokens * cfg.min_duration;
    let max = 2 * cfg.max_silence + cfg.max_tokens * cfg.max_duration;
    default_bucket_table(min, max, cfg.bucket_count)
}

pub fn train_si_model(cfg: &ExperimentConfig, graphs: &GraphSet, items: &[TrainItem]) -> Result<(AcousticNet, Vec<f64>)> {
    let mut net = initial_net(cfg, graphs.pdf_count())?;
    let report = train_si(&mut net, &graphs.den, items, &cfg.train_config()?)?;
    Ok((net, report.epoch_losses))
}

/// SAT from `init` (fine-tuning at its final learning rate) or from the
/// initial network.
pub fn train_sat_model(
    cfg: &ExperimentConfig,
    graphs: &GraphSet,
    items: &[TrainItem],
    speakers: &[String],
    init: Option<&AcousticNet>,
) -> Result<SatModel> {
    let tc = cfg.train_config()?;
    let (mut net, sc) = match init {
        Some(si) => (
            si.clone(),
            TrainConfig {
                epochs: cfg.sat_epochs,
                learning_rate: tc.epoch_rate(tc.epochs.saturating_sub(1)),
                final_lr_ratio: 1.0,
                ..tc
            },
        ),
        None => (
            initial_net(cfg, graphs.pdf_count())?,
            TrainConfig {
                epochs: cfg.sat_epochs,
                ..tc
            },
        ),
    };
    let (report, adapters) = sat_train(&mut net, &graphs.den, items, speakers, &sc)?;
    Ok(SatModel {
        net,
        losses: report.epoch_losses,
        adapters,
    })
}

pub fn prepare(cfg: &ExperimentConfig, timing: &mut Timing) -> Result<Prepared> {
    cfg.validate()?;
    let conditions = cfg.parsed_conditions()?;
    let clock = Instant::now();
    let inventory = cfg.inventory()?;
    let train = generate_corpus(&inventory, &cfg.corpus_spec("train", cfg.train_speakers))?;
    let test = generate_corpus(&inventory, &cfg.corpus_spec("test", cfg.test_speakers))?;
    let graphs = GraphSet::from_references(inventory, cfg.states_per_unit, cfg.lm_order, &train.label_corpus())?;
    timing.stages.push(("corpus".into(), clock.elapsed().as_secs_f64()));

    let clock = Instant::now();
    let (items, speakers) = train_items(&graphs, &train)?;
    let (si, si_losses) = train_si_model(cfg, &graphs, &items)?;
    timing.stages.push(("train-si".into(), clock.elapsed().as_secs_f64()));

    let sat = if conditions.iter().any(|c| c.sat) {
        let clock = Instant::now();
        let init = cfg.sat_from_si.then_some(&si);
        let sat = train_sat_model(cfg, &graphs, &items, &speakers, init)?;
        timing.stages.push(("train-sat".into(), clock.elapsed().as_secs_f64()));
        Some(sat)
    } else {
        None
    };
    Ok(Prepared {
        graphs,
        train,
        test,
        si,
        si_losses,
        sat,
    })
}

/// Hypotheses for every utterance, each speaker decoded with its adapter.
pub fn decode_corpus(
    net: &AcousticNet,
    graphs: &GraphSet,
    corpus: &Corpus,
    adapters: &BTreeMap<String, LhucParams>,
) -> Result<BTreeMap<String, Vec<TokenId>>> {
    let hyps = exec::map(&corpus.utterances, |u| {
        decode_tokens(net, graphs, &u.features, adapters.get(&u.speaker)).map(|h| (u.id.clone(), h))
    });
    hyps.into_iter().collect()
}

pub fn references(corpus: &Corpus) -> BTreeMap<String, (String, Vec<TokenId>)> {
    corpus
        .utterances
        .iter()
        .map(|u| (u.id.clone(), (u.speaker.clone(), u.labels.clone())))
        .collect()
}

fn token_accuracy(reference: &[TokenId], hypothesis: &[TokenId]) -> f64 {
    let c = align(reference, hypothesis);
    1.0 - c.errors() as f64 / c.reference.max(1) as f64
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Splits first-pass oracle accuracy by the confidence selection.
pub fn selection_stats(
    outcomes: &[AdaptationOutcome],
    corpus: &Corpus,
    rate: f64,
) -> Result<SelectionStats> {
    let labels: BTreeMap<&str, &[TokenId]> = corpus.utterances.iter().map(|u| (u.id.as_str(), u.labels.as_slice())).collect();
    let (mut sel, mut rej) = (Vec::new(), Vec::new());
    for o in outcomes {
        let scored: Vec<(&str, f64)> = o.first_pass.iter().map(|f| (f.id.as_str(), f.confidence)).collect();
        let chosen = select_by_confidence(&scored, rate)?;
        for (i, f) in o.first_pass.iter().enumerate() {
            let acc = token_accuracy(labels[f.id.as_str()], &f.hypothesis);
            if chosen.binary_search(&i).is_ok() {
                sel.push(acc);
            } else {
                rej.push(acc);
            }
        }
    }
    Ok(SelectionStats {
        selected: sel.len(),
        rejected: rej.len(),
        selected_accuracy: mean(&sel),
        rejected_accuracy: mean(&rej),
    })
}

fn speaker_data<'a>(corpus: &'a Corpus, limit: Option<usize>) -> Vec<SpeakerData<'a>> {
    corpus
        .by_speaker()
        .into_iter()
        .map(|(speaker, utts)| {
            let utterances: Vec<&Utterance> = match limit {
                Some(n) => utts.into_iter().take(n).collect(),
                None => utts,
            };
            SpeakerData { speaker, utterances }
        })
        .collect()
}

fn result_from_score(c: &Condition, score: &ScoreReport, test_set: &str) -> ConditionResult {
    ConditionResult {
        name: c.name.clone(),
        method: c.method.map_or("si".to_string(), |m| m.name().to_string()),
        criterion: c.method.map(|_| c.criterion.name().to_string()),
        supervision: c.method.map(|_| {
            match c.supervision {
                Supervision::Hypothesis => "hypothesis",
                Supervision::Oracle => "oracle",
            }
            .to_string()
        }),
        selection_rate: c
            .method
            .filter(|_| c.supervision == Supervision::Hypothesis)
            .map(|_| c.selection_rate),
        adaptation_utterances: c.max_utts,
        sat: c.sat,
        test_set: test_set.to_string(),
        ter: score.ter,
        substitutions: score.total.substitutions,
        insertions: score.total.insertions,
        deletions: score.total.deletions,
        reference_tokens: score.total.reference,
        per_speaker: score
            .per_speaker
            .iter()
            .map(|(s, e)| {
                (
                    s.clone(),
                    SpeakerScore {
                        ter: e.ter(),
                        substitutions: e.substitutions,
                        insertions: e.insertions,
                        deletions: e.deletions,
                        reference_tokens: e.reference,
                    },
                )
            })
            .collect(),
        relative_reduction: None,
        selection: None,
        dropped_utterances: 0,
        diverged_speakers: 0,
    }
}

/// Adapts every speaker of `corpus` for one condition (nothing for SI).
pub fn adapt_corpus(
    cfg: &ExperimentConfig,
    net: &AcousticNet,
    graphs: &GraphSet,
    corpus: &Corpus,
    condition: &Condition,
) -> Result<(Vec<AdaptationOutcome>, Option<SelectionStats>)> {
    let Some(method) = condition.method else {
        return Ok((Vec::new(), None));
    };
    let acfg = cfg.adapt_config(method, condition.criterion, condition.selection_rate)?;
    let data = speaker_data(corpus, condition.max_utts);
    let buckets = bucket_table(cfg);
    let padding = Padding {
        silence: &corpus.meta.silence_model,
        buckets: &buckets,
    };
    let outcomes = run_unsupervised_adaptation(net, graphs, &data, &acfg, condition.supervision, Some(padding))?;
    let stats = if condition.supervision == Supervision::Hypothesis {
        Some(selection_stats(&outcomes, corpus, condition.selection_rate)?)
    } else {
        None
    };
    Ok((outcomes, stats))
}

fn net_for<'a>(prepared: &'a Prepared, condition: &Condition) -> Result<&'a AcousticNet> {
    if condition.sat {
        prepared
            .sat
            .as_ref()
            .map(|s| &s.net)
            .ok_or_else(|| Error::InvalidArgument("SAT model was not trained".into()))
    } else {
        Ok(&prepared.si)
    }
}

pub fn evaluate(cfg: &ExperimentConfig, prepared: &Prepared, condition: &Condition) -> Result<ConditionResult> {
    let net = net_for(prepared, condition)?;
    let (outcomes, stats) = adapt_corpus(cfg, net, &prepared.graphs, &prepared.test, condition)?;
    let adapters: BTreeMap<String, LhucParams> = outcomes
        .iter()
        .map(|o| (o.adapter.speaker_id.clone(), o.adapter.lhuc().clone()))
        .collect();
    let hyps = decode_corpus(net, &prepared.graphs, &prepared.test, &adapters)?;
    let score = score_token_error_rate(&hyps, &references(&prepared.test))?;
    let mut r = result_from_score(condition, &score, &prepared.test.meta.spec.split);
    r.selection = stats;
    r.dropped_utterances = outcomes.iter().map(|o| o.dropped).sum();
    r.diverged_speakers = outcomes.iter().filter(|o| o.report.diverged).count();
    info!("{}: TER {:.4}", r.name, r.ter);
    Ok(r)
}

/// Adapted parameters per speaker, in speaker order.
pub fn adapters_of(outcomes: &[AdaptationOutcome]) -> Vec<SpeakerAdapter> {
    outcomes.iter().map(|o| o.adapter.clone()).collect()
}

/// First-pass records of every speaker, in speaker order.
pub fn first_passes(outcomes: &[AdaptationOutcome]) -> Vec<FirstPass> {
    outcomes.iter().flat_map(|o| o.first_pass.iter().cloned()).collect()
}

/// Runs every condition and the optional data-amount sweep.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<(MetricsReport, Timing)> {
    let start = Instant::now();
    let mut timing = Timing::default();
    let prepared = prepare(cfg, &mut timing)?;
    let mut conditions = Vec::new();
    for c in cfg.parsed_conditions()? {
        let clock = Instant::now();
        conditions.push(evaluate(cfg, &prepared, &c)?);
        timing.stages.push((c.name.clone(), clock.elapsed().as_secs_f64()));
    }
    let mut sweep = Vec::new();
    for m in &cfg.sweep_methods {
        for &n in &cfg.sweep_counts {
            let c = Condition::parse(&format!("{m}-n{n}"), cfg.criterion, cfg.selection_rate)?;
            let clock = Instant::now();
            sweep.push(evaluate(cfg, &prepared, &c)?);
            timing.stages.push((c.name.clone(), clock.elapsed().as_secs_f64()));
        }
    }
    let baseline_ter = conditions
        .iter()
        .find(|c| c.name == cfg.baseline)
        .map(|c| c.ter)
        .ok_or_else(|| Error::InvalidArgument(format!("baseline {:?} not evaluated", cfg.baseline)))?;
    for r in conditions.iter_mut().chain(sweep.iter_mut()) {
        r.relative_reduction = (baseline_ter > 0.0).then(|| (baseline_ter - r.ter) / baseline_ter);
    }
    timing.total_seconds = start.elapsed().as_secs_f64();
    Ok((
        MetricsReport {
            format_version: 1,
            seed: cfg.seed,
            baseline: cfg.baseline.clone(),
            baseline_ter,
            si_train_losses: prepared.si_losses.clone(),
            sat_train_losses: prepared.sat.as_ref().map(|s| s.losses.clone()).unwrap_or_default(),
            conditions,
            sweep,
        },
        timing,
    ))
}
