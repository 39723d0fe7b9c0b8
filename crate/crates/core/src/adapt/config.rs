use std::fmt;
use std::str::FromStr;

use super::penalty::PriorSpec;
use crate::error::{Error, Result};
use crate::objective::ObjectiveConfig;

/// Extra penalty on deterministic LHUC estimation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regularizer {
    None,
    /// L2 pull toward the prior mean (MAP-LHUC).
    Map { lambda: f64 },
    /// KL between SI and adapted CE-head distributions (KL-LHUC).
    KlOutput { lambda: f64 },
}

/// The four adaptation recipes exposed on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AdaptMethod {
    Lhuc,
    Blhuc,
    Map,
    Kl,
}

impl AdaptMethod {
    pub const ALL: [AdaptMethod; 4] = [Self::Lhuc, Self::Blhuc, Self::Map, Self::Kl];

    /// Sets the estimation mode and regularizer of `cfg` for this method.
    pub fn configure(self, cfg: &mut AdaptConfig) {
        cfg.bayesian = self == Self::Blhuc;
        cfg.regularizer = match self {
            Self::Lhuc | Self::Blhuc => Regularizer::None,
            Self::Map => Regularizer::Map { lambda: cfg.map_lambda },
            Self::Kl => Regularizer::KlOutput { lambda: cfg.kl_lambda },
        };
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Lhuc => "lhuc",
            Self::Blhuc => "blhuc",
            Self::Map => "map",
            Self::Kl => "kl",
        }
    }
}

impl fmt::Display for AdaptMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AdaptMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown adaptation method {s:?} (lhuc|blhuc|map|kl)")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Monte-Carlo samples per BLHUC update.
    pub mc_samples: usize,
    /// Fraction of utterances kept by confidence selection; 1 keeps all.
    pub selection_rate: f64,
    pub regularizer: Regularizer,
    pub objective: ObjectiveConfig,
    pub hooked_layers: Vec<usize>,
    pub bayesian: bool,
    pub prior: PriorSpec,
    /// Initial `log_sigma` of BLHUC; `-inf` pins sigma at zero.
    pub init_log_sigma: f64,
    pub map_lambda: f64,
    pub kl_lambda: f64,
    /// Lattice beam used for confidence scores.
    pub beam: f64,
    pub max_lattice_paths: usize,
    /// Pad utterances with silence up to the bucket table before building
    /// supervision.
    pub bucket: bool,
    pub seed: u64,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        Self {
            epochs: 7,
            learning_rate: 0.1,
            mc_samples: 1,
            selection_rate: 0.8,
            regularizer: Regularizer::None,
            objective: ObjectiveConfig::mmi_ce(),
            hooked_layers: vec![0, 1, 2],
            bayesian: false,
            prior: PriorSpec::default(),
            init_log_sigma: 0.0,
            map_lambda: 1.0,
            kl_lambda: 0.5,
            beam: 8.0,
            max_lattice_paths: 1000,
            bucket: true,
            seed: 42,
        }
    }
}

impl AdaptConfig {
    pub fn for_method(method: AdaptMethod) -> Self {
        let mut cfg = Self::default();
        method.configure(&mut cfg);
        cfg
    }

    /// Lists every violated setting. Zero epochs is allowed and yields
    /// identity adapters.
    pub fn validate(&self, num_layers: usize) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            bad.push(format!("learning_rate must be >= 0, got {}", self.learning_rate));
        }
        if self.mc_samples == 0 {
            bad.push("mc_samples must be >= 1".into());
        }
        if !(self.selection_rate > 0.0 && self.selection_rate <= 1.0) {
            bad.push(format!("selection_rate must be in (0, 1], got {}", self.selection_rate));
        }
        if let Err(Error::InvalidConfig(v)) = self.objective.validate() {
            bad.extend(v);
        }
        if let Err(e) = self.prior.validate() {
            bad.push(e.to_string());
        }
        if self.hooked_layers.is_empty() {
            bad.push("hooked_layers is empty".into());
        }
        if let Some(l) = self.hooked_layers.iter().find(|&&l| l >= num_layers) {
            bad.push(format!("hooked layer {l} >= layer count {num_layers}"));
        }
        match self.regularizer {
            Regularizer::Map { lambda } | Regularizer::KlOutput { lambda } if !(lambda >= 0.0 && lambda.is_finite()) => {
                bad.push(format!("regularizer weight must be >= 0, got {lambda}"));
            }
            _ => {}
        }
        if self.bayesian && self.regularizer != Regularizer::None {
            bad.push("BLHUC does not take an extra regularizer".into());
        }
        if self.init_log_sigma.is_nan() || self.init_log_sigma == f64::INFINITY {
            bad.push("init_log_sigma must be finite or -inf".into());
        }
        if !(self.beam > 0.0) {
            bad.push("beam must be > 0".into());
        }
        if self.max_lattice_paths == 0 {
            bad.push("max_lattice_paths must be >= 1".into());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(bad))
        }
    }
}
