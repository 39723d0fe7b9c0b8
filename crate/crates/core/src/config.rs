//! Flat `key = value` experiment configuration.
//!
//! One setting per line, `#` starts a comment, unknown keys are errors.
//! Every key and its default is listed by [`ExperimentConfig::to_text`].

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::adapt::{AdaptConfig, AdaptMethod, PriorSpec, Regularizer, Supervision, TrainConfig};
use crate::corpus::CorpusSpec;
use crate::error::{Error, Result};
use crate::graph::{ContextMode, TokenInventory};
use crate::objective::ObjectiveConfig;

/// Adaptation training criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Criterion {
    Ce,
    MmiCe,
}

impl Criterion {
    pub fn objective(self, gamma3: Option<f64>) -> Result<ObjectiveConfig> {
        let base = match self {
            Criterion::Ce => ObjectiveConfig::ce_only(),
            Criterion::MmiCe => ObjectiveConfig::mmi_ce(),
        };
        match gamma3 {
            Some(g3) => ObjectiveConfig::with_kl(base.gamma1, base.gamma2, g3),
            None => Ok(base),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Criterion::Ce => "ce",
            Criterion::MmiCe => "mmi+ce",
        }
    }
}

impl FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ce" => Ok(Criterion::Ce),
            "mmi+ce" | "mmice" => Ok(Criterion::MmiCe),
            _ => Err(Error::InvalidArgument(format!("unknown criterion {s:?} (ce|mmi+ce)"))),
        }
    }
}

/// One evaluated system. Names follow `base[-modifier...]` with base
/// `si | lhuc | blhuc | map | kl` and modifiers `ce`, `mmice`, `oracle`,
/// `all` (no selection), `selNN` (keep NN percent), `nK` (first K
/// utterances per speaker as adaptation data) and `sat` (SAT model).
#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    pub name: String,
    pub method: Option<AdaptMethod>,
    pub criterion: Criterion,
    pub supervision: Supervision,
    pub selection_rate: f64,
    pub max_utts: Option<usize>,
    pub sat: bool,
}

impl Condition {
    pub fn parse(name: &str, criterion: Criterion, selection_rate: f64) -> Result<Self> {
        let bad = |m: &str| Error::InvalidArgument(format!("condition {name:?}: {m}"));
        let mut parts = name.split('-');
        let method = match parts.next().unwrap_or("") {
            "si" => None,
            m => Some(m.parse::<AdaptMethod>().map_err(|_| bad("unknown base"))?),
        };
        let mut c = Condition {
            name: name.to_string(),
            method,
            criterion,
            supervision: Supervision::Hypothesis,
            selection_rate,
            max_utts: None,
            sat: false,
        };
        for p in parts {
            match p {
                "ce" => c.criterion = Criterion::Ce,
                "mmice" => c.criterion = Criterion::MmiCe,
                "oracle" => c.supervision = Supervision::Oracle,
                "all" => c.selection_rate = 1.0,
                "sat" => c.sat = true,
                _ if p.starts_with("sel") => {
                    let pct: f64 = p[3..].parse().map_err(|_| bad("bad selection percent"))?;
                    if !(pct > 0.0 && pct <= 100.0) {
                        return Err(bad("selection percent must be in (0, 100]"));
                    }
                    c.selection_rate = pct / 100.0;
                }
                _ if p.starts_with('n') => {
                    let n: usize = p[1..].parse().map_err(|_| bad("bad utterance count"))?;
                    if n == 0 {
                        return Err(bad("utterance count must be >= 1"));
                    }
                    c.max_utts = Some(n);
                }
                _ => return Err(bad(&format!("unknown modifier {p:?}"))),
            }
        }
        if c.method.is_none() && (c.supervision == Supervision::Oracle || c.max_utts.is_some()) {
            return Err(bad("si takes no adaptation modifiers"));
        }
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub tokens: Vec<String>,
    pub silence: String,
    pub context_mode: ContextMode,
    pub states_per_unit: usize,
    pub lm_order: usize,

    pub dim: usize,
    pub train_speakers: usize,
    pub test_speakers: usize,
    pub utts_per_speaker: usize,
    pub min_tokens: usize,
    pub max_tokens: usize,
    pub min_duration: usize,
    pub max_duration: usize,
    pub min_silence: usize,
    pub max_silence: usize,
    pub separation: f64,
    pub noise_min: f64,
    pub noise_max: f64,
    pub max_scale: f64,
    pub offset_std: f64,
    pub distorted_fraction: f64,

    pub hidden: Vec<usize>,
    pub train_epochs: usize,
    pub train_learning_rate: f64,
    pub train_final_lr_ratio: f64,
    pub batch_size: usize,
    pub train_gamma1: f64,
    pub train_gamma2: f64,
    /// SAT starts from the trained SI network (`true`) or from the initial one.
    pub sat_from_si: bool,
    pub sat_epochs: usize,
    pub sat_layers: Vec<usize>,
    pub sat_learning_rate: f64,

    pub criterion: Criterion,
    pub gamma3: Option<f64>,
    pub adapt_epochs: usize,
    pub adapt_learning_rate: f64,
    pub mc_samples: usize,
    pub selection_rate: f64,
    pub hooked_layers: Vec<usize>,
    pub prior_mu: f64,
    pub prior_sigma: f64,
    pub map_lambda: f64,
    pub kl_lambda: f64,
    pub beam: f64,
    pub max_lattice_paths: usize,
    pub bucket: bool,
    pub bucket_count: usize,

    pub conditions: Vec<String>,
    pub baseline: String,
    pub sweep_methods: Vec<String>,
    pub sweep_counts: Vec<usize>,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let c = CorpusSpec::default();
        Self {
            seed: 42,
            tokens: ["sil", "a", "b", "c", "d", "e"].map(String::from).to_vec(),
            silence: "sil".into(),
            context_mode: ContextMode::Mono,
            states_per_unit: 2,
            lm_order: 2,
            dim: c.dim,
            train_speakers: 20,
            test_speakers: 8,
            utts_per_speaker: 50,
            min_tokens: c.min_tokens,
            max_tokens: c.max_tokens,
            min_duration: c.min_duration,
            max_duration: c.max_duration,
            min_silence: c.min_silence,
            max_silence: c.max_silence,
            separation: c.separation,
            noise_min: 0.9,
            noise_max: 1.1,
            max_scale: c.max_scale,
            offset_std: c.offset_std,
            distorted_fraction: c.distorted_fraction,
            hidden: vec![64, 64, 64],
            train_epochs: 16,
            train_learning_rate: TrainConfig::default().learning_rate,
            train_final_lr_ratio: 0.1,
            batch_size: TrainConfig::default().batch_size,
            train_gamma1: 1.0,
            train_gamma2: 0.1,
            sat_from_si: true,
            sat_epochs: 4,
            sat_layers: vec![0],
            sat_learning_rate: 20.0,
            criterion: Criterion::MmiCe,
            gamma3: None,
            adapt_epochs: 7,
            adapt_learning_rate: 0.1,
            mc_samples: 1,
            selection_rate: 0.8,
            hooked_layers: vec![0, 1, 2],
            prior_mu: 0.0,
            prior_sigma: 1.0,
            map_lambda: 1.0,
            kl_lambda: 0.5,
            beam: 8.0,
            max_lattice_paths: 1000,
            bucket: true,
            bucket_count: 40,
            conditions: ["si", "lhuc", "lhuc-all", "lhuc-oracle", "lhuc-n5", "blhuc-n5", "lhuc-ce", "lhuc-ce-sat"]
                .map(String::from)
                .to_vec(),
            baseline: "si".into(),
            sweep_methods: Vec::new(),
            sweep_counts: Vec::new(),
            output_dir: PathBuf::from("out"),
        }
    }
}

fn list<T: FromStr>(v: &str) -> std::result::Result<Vec<T>, String> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|_| format!("bad list item {s:?}")))
        .collect()
}

fn one<T: FromStr>(v: &str) -> std::result::Result<T, String> {
    v.parse::<T>().map_err(|_| format!("cannot parse {v:?}"))
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    /// Sets one key from its text value.
    pub fn set(&mut self, key: &str, v: &str) -> std::result::Result<(), String> {
        let v = v.trim();
        match key {
            "seed" => self.seed = one(v)?,
            "tokens" => self.tokens = list(v)?,
            "silence" => self.silence = v.to_string(),
            "context_mode" => self.context_mode = v.parse().map_err(|e: Error| e.to_string())?,
            "states_per_unit" => self.states_per_unit = one(v)?,
            "lm_order" => self.lm_order = one(v)?,
            "dim" => self.dim = one(v)?,
            "train_speakers" => self.train_speakers = one(v)?,
            "test_speakers" => self.test_speakers = one(v)?,
            "utts_per_speaker" => self.utts_per_speaker = one(v)?,
            "min_tokens" => self.min_tokens = one(v)?,
            "max_tokens" => self.max_tokens = one(v)?,
            "min_duration" => self.min_duration = one(v)?,
            "max_duration" => self.max_duration = one(v)?,
            "min_silence" => self.min_silence = one(v)?,
            "max_silence" => self.max_silence = one(v)?,
            "separation" => self.separation = one(v)?,
            "noise_min" => self.noise_min = one(v)?,
            "noise_max" => self.noise_max = one(v)?,
            "max_scale" => self.max_scale = one(v)?,
            "offset_std" => self.offset_std = one(v)?,
            "distorted_fraction" => self.distorted_fraction = one(v)?,
            "hidden" => self.hidden = list(v)?,
            "train_epochs" => self.train_epochs = one(v)?,
            "train_learning_rate" => self.train_learning_rate = one(v)?,
            "train_final_lr_ratio" => self.train_final_lr_ratio = one(v)?,
            "batch_size" => self.batch_size = one(v)?,
            "train_gamma1" => self.train_gamma1 = one(v)?,
            "train_gamma2" => self.train_gamma2 = one(v)?,
            "sat_from_si" => self.sat_from_si = one(v)?,
            "sat_epochs" => self.sat_epochs = one(v)?,
            "sat_layers" => self.sat_layers = list(v)?,
            "sat_learning_rate" => self.sat_learning_rate = one(v)?,
            "criterion" => self.criterion = v.parse().map_err(|e: Error| e.to_string())?,
            "gamma3" => self.gamma3 = if v == "auto" { None } else { Some(one(v)?) },
            "adapt_epochs" => self.adapt_epochs = one(v)?,
            "adapt_learning_rate" => self.adapt_learning_rate = one(v)?,
            "mc_samples" => self.mc_samples = one(v)?,
            "selection_rate" => self.selection_rate = one(v)?,
            "hooked_layers" => self.hooked_layers = list(v)?,
            "prior_mu" => self.prior_mu = one(v)?,
            "prior_sigma" => self.prior_sigma = one(v)?,
            "map_lambda" => self.map_lambda = one(v)?,
            "kl_lambda" => self.kl_lambda = one(v)?,
            "beam" => self.beam = one(v)?,
            "max_lattice_paths" => self.max_lattice_paths = one(v)?,
            "bucket" => self.bucket = one(v)?,
            "bucket_count" => self.bucket_count = one(v)?,
            "conditions" => self.conditions = list(v)?,
            "baseline" => self.baseline = v.to_string(),
            "sweep_methods" => self.sweep_methods = list(v)?,
            "sweep_counts" => self.sweep_counts = list(v)?,
            "output_dir" => self.output_dir = PathBuf::from(v),
            _ => return Err("unknown key".into()),
        }
        Ok(())
    }

    /// Parses and validates a config file body on top of the defaults.
    pub fn from_text(text: &str) -> Result<Self> {
        let cfg = Self::parse(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses a config file body without semantic validation.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut bad = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            match line.split_once('=') {
                Some((k, v)) => {
                    if let Err(e) = cfg.set(k.trim(), v) {
                        bad.push(format!("line {}: {}: {e}", n + 1, k.trim()));
                    }
                }
                None => bad.push(format!("line {}: expected key = value", n + 1)),
            }
        }
        if !bad.is_empty() {
            return Err(Error::InvalidConfig(bad));
        }
        Ok(cfg)
    }

    /// Reads a config file and applies `overrides` before validating.
    pub fn load_with_overrides<S: AsRef<str>>(path: Option<&Path>, overrides: &[S]) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => Self::parse(&std::fs::read_to_string(p)?)?,
            None => Self::default(),
        };
        cfg.apply_overrides(overrides)?;
        Ok(cfg)
    }

    /// Applies `key=value` overrides then revalidates.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        let mut bad = Vec::new();
        for o in overrides {
            match o.as_ref().split_once('=') {
                Some((k, v)) => {
                    if let Err(e) = self.set(k.trim(), v) {
                        bad.push(format!("{}: {e}", k.trim()));
                    }
                }
                None => bad.push(format!("override {:?} is not key=value", o.as_ref())),
            }
        }
        if !bad.is_empty() {
            return Err(Error::InvalidConfig(bad));
        }
        self.validate()
    }

    /// Every setting, one per line, in a form [`Self::from_text`] accepts.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("seed", self.seed.to_string());
        kv("tokens", self.tokens.join(","));
        kv("silence", self.silence.clone());
        kv("context_mode", self.context_mode.to_string());
        kv("states_per_unit", self.states_per_unit.to_string());
        kv("lm_order", self.lm_order.to_string());
        kv("dim", self.dim.to_string());
        kv("train_speakers", self.train_speakers.to_string());
        kv("test_speakers", self.test_speakers.to_string());
        kv("utts_per_speaker", self.utts_per_speaker.to_string());
        kv("min_tokens", self.min_tokens.to_string());
        kv("max_tokens", self.max_tokens.to_string());
        kv("min_duration", self.min_duration.to_string());
        kv("max_duration", self.max_duration.to_string());
        kv("min_silence", self.min_silence.to_string());
        kv("max_silence", self.max_silence.to_string());
        kv("separation", self.separation.to_string());
        kv("noise_min", self.noise_min.to_string());
        kv("noise_max", self.noise_max.to_string());
        kv("max_scale", self.max_scale.to_string());
        kv("offset_std", self.offset_std.to_string());
        kv("distorted_fraction", self.distorted_fraction.to_string());
        kv("hidden", join(&self.hidden));
        kv("train_epochs", self.train_epochs.to_string());
        kv("train_learning_rate", self.train_learning_rate.to_string());
        kv("train_final_lr_ratio", self.train_final_lr_ratio.to_string());
        kv("batch_size", self.batch_size.to_string());
        kv("train_gamma1", self.train_gamma1.to_string());
        kv("train_gamma2", self.train_gamma2.to_string());
        kv("sat_from_si", self.sat_from_si.to_string());
        kv("sat_epochs", self.sat_epochs.to_string());
        kv("sat_layers", join(&self.sat_layers));
        kv("sat_learning_rate", self.sat_learning_rate.to_string());
        kv("criterion", self.criterion.name().to_string());
        kv("gamma3", self.gamma3.map_or("auto".to_string(), |g| g.to_string()));
        kv("adapt_epochs", self.adapt_epochs.to_string());
        kv("adapt_learning_rate", self.adapt_learning_rate.to_string());
        kv("mc_samples", self.mc_samples.to_string());
        kv("selection_rate", self.selection_rate.to_string());
        kv("hooked_layers", join(&self.hooked_layers));
        kv("prior_mu", self.prior_mu.to_string());
        kv("prior_sigma", self.prior_sigma.to_string());
        kv("map_lambda", self.map_lambda.to_string());
        kv("kl_lambda", self.kl_lambda.to_string());
        kv("beam", self.beam.to_string());
        kv("max_lattice_paths", self.max_lattice_paths.to_string());
        kv("bucket", self.bucket.to_string());
        kv("bucket_count", self.bucket_count.to_string());
        kv("conditions", self.conditions.join(","));
        kv("baseline", self.baseline.clone());
        kv("sweep_methods", self.sweep_methods.join(","));
        kv("sweep_counts", join(&self.sweep_counts));
        kv("output_dir", self.output_dir.display().to_string());
        s
    }

    pub fn inventory(&self) -> Result<TokenInventory> {
        TokenInventory::new(&self.tokens, &self.silence, self.context_mode)
    }

    pub fn corpus_spec(&self, split: &str, n_speakers: usize) -> CorpusSpec {
        CorpusSpec {
            dim: self.dim,
            n_speakers,
            utts_per_speaker: self.utts_per_speaker,
            min_tokens: self.min_tokens,
            max_tokens: self.max_tokens,
            min_duration: self.min_duration,
            max_duration: self.max_duration,
            min_silence: self.min_silence,
            max_silence: self.max_silence,
            separation: self.separation,
            noise: (self.noise_min, self.noise_max),
            max_scale: self.max_scale,
            offset_std: self.offset_std,
            distorted_fraction: self.distorted_fraction,
            seed: self.seed,
            split: split.to_string(),
        }
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        Ok(TrainConfig {
            epochs: self.train_epochs,
            learning_rate: self.train_learning_rate,
            final_lr_ratio: self.train_final_lr_ratio,
            batch_size: self.batch_size,
            objective: ObjectiveConfig::new(self.train_gamma1, self.train_gamma2)?,
            sat_layers: self.sat_layers.clone(),
            sat_learning_rate: self.sat_learning_rate,
            seed: self.seed,
        })
    }

    pub fn adapt_config(&self, method: AdaptMethod, criterion: Criterion, selection_rate: f64) -> Result<AdaptConfig> {
        let mut cfg = AdaptConfig {
            epochs: self.adapt_epochs,
            learning_rate: self.adapt_learning_rate,
            mc_samples: self.mc_samples,
            selection_rate,
            regularizer: Regularizer::None,
            objective: criterion.objective(self.gamma3)?,
            hooked_layers: self.hooked_layers.clone(),
            bayesian: false,
            prior: PriorSpec {
                mu0: self.prior_mu,
                sigma0: self.prior_sigma,
            },
            init_log_sigma: 0.0,
            map_lambda: self.map_lambda,
            kl_lambda: self.kl_lambda,
            beam: self.beam,
            max_lattice_paths: self.max_lattice_paths,
            bucket: self.bucket,
            seed: self.seed,
        };
        method.configure(&mut cfg);
        Ok(cfg)
    }

    pub fn parsed_conditions(&self) -> Result<Vec<Condition>> {
        self.conditions
            .iter()
            .map(|n| Condition::parse(n, self.criterion, self.selection_rate))
            .collect()
    }

    /// Lists every violated constraint.
    pub fn validate(&self) -> Result<()> {
        let mut bad: Vec<String> = Vec::new();
        let nested = |group: &str, r: Result<()>, bad: &mut Vec<String>| match r {
            Err(Error::InvalidConfig(v)) => bad.extend(v.into_iter().map(|m| format!("{group}: {m}"))),
            Err(Error::InvalidArgument(m)) => bad.push(format!("{group}: {m}")),
            Err(e) => bad.push(format!("{group}: {e}")),
            Ok(()) => {}
        };
        nested("tokens", self.inventory().map(|_| ()), &mut bad);
        if self.states_per_unit == 0 {
            bad.push("states_per_unit must be >= 1".into());
        }
        if self.lm_order == 0 {
            bad.push("lm_order must be >= 1".into());
        }
        nested("corpus", self.corpus_spec("train", self.train_speakers.max(1)).validate(), &mut bad);
        for (k, v) in [
            ("train_speakers", self.train_speakers),
            ("test_speakers", self.test_speakers),
            ("utts_per_speaker", self.utts_per_speaker),
        ] {
            if v == 0 {
                bad.push(format!("{k} must be >= 1"));
            }
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            bad.push("hidden must list positive widths".into());
        }
        let train = self.train_config().and_then(|t| t.validate(self.hidden.len()));
        nested("train", train, &mut bad);
        let adapt = self
            .adapt_config(AdaptMethod::Lhuc, self.criterion, self.selection_rate)
            .and_then(|a| a.validate(self.hidden.len()));
        nested("adapt", adapt, &mut bad);
        if self.bucket_count == 0 {
            bad.push("bucket_count must be >= 1".into());
        }
        match self.parsed_conditions() {
            Ok(cs) => {
                if !cs.iter().any(|c| c.name == self.baseline) {
                    bad.push(format!("baseline {:?} is not a listed condition", self.baseline));
                }
                for c in cs.iter().filter(|c| c.max_utts.is_some_and(|n| n > self.utts_per_speaker)) {
                    bad.push(format!("conditions: {} asks for more utterances than each speaker has", c.name));
                }
            }
            Err(e) => nested("conditions", Err(e), &mut bad),
        }
        for m in &self.sweep_methods {
            nested("sweep_methods", m.parse::<AdaptMethod>().map(|_| ()), &mut bad);
        }
        if self.sweep_counts.iter().any(|&n| n == 0 || n > self.utts_per_speaker) {
            bad.push("sweep_counts must be in 1..=utts_per_speaker".into());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(bad))
        }
    }
}
