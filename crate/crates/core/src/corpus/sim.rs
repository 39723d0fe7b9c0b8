//! Frame-level Gaussian corpus with per-speaker affine distortions.
//!
//! Every non-silence token has two segment means (first and second half of
//! its duration), drawn once from the `classes` stream so train and test
//! splits of the same seed share them. A speaker maps a clean frame `m + n`
//! to `scale * m + offset + noise`; silence frames are speaker independent.
//! Each utterance is `silence, tokens..., silence`; the stored label is the
//! token sequence without silence.

use ndarray::Array2;
use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{TokenId, TokenInventory};
use crate::rng::{stream, Rng};

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub speaker: String,
    /// `frames x dim`
    pub features: Array2<f64>,
    /// Reference or hypothesis tokens.
    pub labels: Vec<TokenId>,
    pub confidence: Option<f64>,
}

impl Utterance {
    pub fn frames(&self) -> usize {
        self.features.nrows()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerProfile {
    pub speaker_id: String,
    pub scale: Vec<f64>,
    pub offset: Vec<f64>,
    pub noise: f64,
}

impl SpeakerProfile {
    pub fn identity(speaker_id: String, dim: usize, noise: f64) -> Self {
        Self {
            speaker_id,
            scale: vec![1.0; dim],
            offset: vec![0.0; dim],
            noise,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SilenceModel {
    pub mean: Vec<f64>,
    pub std: f64,
}

impl SilenceModel {
    pub fn sample(&self, frames: usize, rng: &mut Rng) -> Array2<f64> {
        let d = self.mean.len();
        Array2::from_shape_fn((frames, d), |(_, j)| self.mean[j] + self.std * rng.sample::<f64, _>(StandardNormal))
    }
}

/// Segment means of every token (index = token id); silence rows unused.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassModel {
    pub means: Vec<[Vec<f64>; 2]>,
}

/// Generator settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub dim: usize,
    pub n_speakers: usize,
    pub utts_per_speaker: usize,
    /// Inclusive range of label length in tokens.
    pub min_tokens: usize,
    pub max_tokens: usize,
    /// Inclusive range of frames per token.
    pub min_duration: usize,
    pub max_duration: usize,
    /// Inclusive range of silence frames at each end.
    pub min_silence: usize,
    pub max_silence: usize,
    /// Standard deviation of class means.
    pub separation: f64,
    /// Per-speaker frame noise drawn uniformly from this range.
    pub noise: (f64, f64),
    /// Per-dimension scales are `exp(u)` with `u ~ U(-ln s, ln s)`; 1 disables.
    pub max_scale: f64,
    pub offset_std: f64,
    /// Fraction of dimensions a speaker distorts.
    pub distorted_fraction: f64,
    pub seed: u64,
    /// Split name, e.g. `train` or `test`; selects disjoint speaker streams.
    pub split: String,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            dim: 12,
            n_speakers: 4,
            utts_per_speaker: 10,
            min_tokens: 3,
            max_tokens: 7,
            min_duration: 2,
            max_duration: 5,
            min_silence: 2,
            max_silence: 4,
            separation: 1.0,
            noise: (0.6, 0.9),
            max_scale: 1.8,
            offset_std: 0.6,
            distorted_fraction: 1.0,
            seed: 42,
            split: "train".into(),
        }
    }
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.dim == 0 {
            bad.push("dim must be >= 1".to_string());
        }
        if self.min_tokens == 0 || self.min_tokens > self.max_tokens {
            bad.push(format!("token range {}..={} invalid", self.min_tokens, self.max_tokens));
        }
        if self.min_duration == 0 || self.min_duration > self.max_duration {
            bad.push(format!("duration range {}..={} invalid", self.min_duration, self.max_duration));
        }
        if self.min_silence > self.max_silence {
            bad.push("silence range invalid".into());
        }
        if !(self.separation > 0.0) {
            bad.push("separation must be > 0".into());
        }
        if !(self.noise.0 >= 0.0 && self.noise.0 <= self.noise.1) {
            bad.push("noise range invalid".into());
        }
        if !(self.max_scale >= 1.0) {
            bad.push("max_scale must be >= 1".into());
        }
        if !(self.offset_std >= 0.0) {
            bad.push("offset_std must be >= 0".into());
        }
        if !(0.0..=1.0).contains(&self.distorted_fraction) {
            bad.push("distorted_fraction must be in [0, 1]".into());
        }
        if self.split.is_empty() || self.split.contains(char::is_whitespace) {
            bad.push("split must be a non-empty word".into());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(bad))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusMeta {
    pub tokens: Vec<String>,
    pub silence: String,
    pub dim: usize,
    pub silence_model: SilenceModel,
    pub spec: CorpusSpec,
    pub speakers: Vec<SpeakerProfile>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub meta: CorpusMeta,
    pub utterances: Vec<Utterance>,
}

impl Corpus {
    pub fn speakers(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for u in &self.utterances {
            if out.last() != Some(&u.speaker) && !out.contains(&u.speaker) {
                out.push(u.speaker.clone());
            }
        }
        out
    }

    /// Utterances grouped by speaker, speakers in first-appearance order.
    pub fn by_speaker(&self) -> Vec<(String, Vec<&Utterance>)> {
        self.speakers()
            .into_iter()
            .map(|s| {
                let utts = self.utterances.iter().filter(|u| u.speaker == s).collect();
                (s, utts)
            })
            .collect()
    }

    pub fn total_frames(&self) -> usize {
        self.utterances.iter().map(Utterance::frames).sum()
    }

    pub fn label_corpus(&self) -> Vec<Vec<TokenId>> {
        self.utterances.iter().map(|u| u.labels.clone()).collect()
    }
}

fn class_model(inv: &TokenInventory, spec: &CorpusSpec) -> (ClassModel, SilenceModel) {
    let mut rng = stream(spec.seed, "classes", &[]);
    let normal = Normal::new(0.0, spec.separation).expect("valid std");
    let draw = |rng: &mut Rng| (0..spec.dim).map(|_| normal.sample(rng)).collect::<Vec<f64>>();
    let means = (0..inv.len()).map(|_| [draw(&mut rng), draw(&mut rng)]).collect();
    let sil = SilenceModel {
        mean: vec![0.0; spec.dim],
        std: 0.3 * spec.separation,
    };
    (ClassModel { means }, sil)
}

/// Fixed random bigram over non-silence tokens, shared by all splits.
fn label_lm(inv: &TokenInventory, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = stream(seed, "label-lm", &[]);
    let n = inv.len();
    (0..=n)
        .map(|_| {
            let w: Vec<f64> = (0..n)
                .map(|k| {
                    if k as TokenId == inv.silence() {
                        0.0
                    } else {
                        0.2 + rng.random::<f64>().powi(2)
                    }
                })
                .collect();
            let z: f64 = w.iter().sum();
            w.into_iter().map(|x| x / z).collect()
        })
        .collect()
}

fn sample_categorical(p: &[f64], rng: &mut Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return i;
        }
    }
    p.iter().rposition(|&x| x > 0.0).unwrap_or(0)
}

fn speaker_profile(spec: &CorpusSpec, index: usize) -> SpeakerProfile {
    let id = format!("{}-s{:03}", spec.split, index);
    let mut rng = stream(spec.seed, "speaker", &[crate::rng::hash_id(&spec.split), index as u64]);
    let ln = spec.max_scale.ln();
    let n_distorted = (spec.distorted_fraction * spec.dim as f64).round() as usize;
    let mut scale = vec![1.0; spec.dim];
    let mut offset = vec![0.0; spec.dim];
    for d in 0..n_distorted {
        scale[d] = (ln * (2.0 * rng.random::<f64>() - 1.0)).exp();
        offset[d] = spec.offset_std * rng.sample::<f64, _>(StandardNormal);
    }
    let noise = spec.noise.0 + (spec.noise.1 - spec.noise.0) * rng.random::<f64>();
    SpeakerProfile {
        speaker_id: id,
        scale,
        offset,
        noise,
    }
}

/// Frames for one labelled utterance of `speaker`.
fn render(
    labels: &[TokenId],
    classes: &ClassModel,
    sil: &SilenceModel,
    speaker: &SpeakerProfile,
    spec: &CorpusSpec,
    rng: &mut Rng,
) -> Array2<f64> {
    let lead = rng.random_range(spec.min_silence..=spec.max_silence);
    let durations: Vec<usize> = labels
        .iter()
        .map(|_| rng.random_range(spec.min_duration..=spec.max_duration))
        .collect();
    let trail = rng.random_range(spec.min_silence..=spec.max_silence);
    let frames = lead + durations.iter().sum::<usize>() + trail;
    let mut x = Array2::zeros((frames, spec.dim));
    x.slice_mut(ndarray::s![..lead, ..]).assign(&sil.sample(lead, rng));
    let mut t = lead;
    for (&tok, &d) in labels.iter().zip(&durations) {
        let mid = d.div_ceil(2);
        for k in 0..d {
            let m = &classes.means[tok as usize][usize::from(k >= mid)];
            for j in 0..spec.dim {
                let n: f64 = rng.sample(StandardNormal);
                x[[t, j]] = speaker.scale[j] * m[j] + speaker.offset[j] + speaker.noise * n;
            }
            t += 1;
        }
    }
    x.slice_mut(ndarray::s![t.., ..]).assign(&sil.sample(trail, rng));
    x
}

/// Deterministic per `spec.seed` and `spec.split`.
pub fn generate_corpus(inventory: &TokenInventory, spec: &CorpusSpec) -> Result<Corpus> {
    spec.validate()?;
    let (classes, sil) = class_model(inventory, spec);
    let lm = label_lm(inventory, spec.seed);
    let bos = inventory.len();
    let speakers: Vec<SpeakerProfile> = (0..spec.n_speakers).map(|i| speaker_profile(spec, i)).collect();
    let mut utterances = Vec::with_capacity(spec.n_speakers * spec.utts_per_speaker);
    for (si, profile) in speakers.iter().enumerate() {
        for ui in 0..spec.utts_per_speaker {
            let mut rng = stream(spec.seed, "utterance", &[crate::rng::hash_id(&spec.split), si as u64, ui as u64]);
            let len = rng.random_range(spec.min_tokens..=spec.max_tokens);
            let mut prev = bos;
            let labels: Vec<TokenId> = (0..len)
                .map(|_| {
                    let w = sample_categorical(&lm[prev], &mut rng);
                    prev = w;
                    w as TokenId
                })
                .collect();
            let features = render(&labels, &classes, &sil, profile, spec, &mut rng);
            utterances.push(Utterance {
                id: format!("{}-u{:03}", profile.speaker_id, ui),
                speaker: profile.speaker_id.clone(),
                features,
                labels,
                confidence: None,
            });
        }
    }
    Ok(Corpus {
        meta: CorpusMeta {
            tokens: inventory.tokens().to_vec(),
            silence: inventory.name(inventory.silence()).to_string(),
            dim: spec.dim,
            silence_model: sil,
            spec: spec.clone(),
            speakers,
        },
        utterances,
    })
}

/// Appends `target - frames` silence frames and a trailing silence label.
/// Unchanged when already at `target`.
pub fn silence_pad(utt: &Utterance, target: usize, silence: &SilenceModel, silence_token: TokenId, rng: &mut Rng) -> Result<Utterance> {
    let frames = utt.frames();
    if target < frames {
        return Err(Error::InvalidArgument(format!(
            "cannot pad {} from {frames} down to {target} frames",
            utt.id
        )));
    }
    if target == frames {
        return Ok(utt.clone());
    }
    if silence.mean.len() != utt.features.ncols() {
        return Err(Error::DimensionMismatch {
            what: "silence model dimension",
            expected: utt.features.ncols(),
            got: silence.mean.len(),
        });
    }
    let pad = silence.sample(target - frames, rng);
    let features = ndarray::concatenate(ndarray::Axis(0), &[utt.features.view(), pad.view()]).expect("same width");
    let mut labels = utt.labels.clone();
    labels.push(silence_token);
    Ok(Utterance {
        features,
        labels,
        ..utt.clone()
    })
}
