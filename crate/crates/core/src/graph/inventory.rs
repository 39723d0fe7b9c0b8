use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense token index into a [`TokenInventory`].
pub type TokenId = u32;

/// How HMM units are keyed on context.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ContextMode {
    /// One HMM per token (BPE-style setting).
    Mono,
    /// One HMM per (left token, token) pair, no state tying (bi-phone setting).
    LeftBiContext,
}

impl std::str::FromStr for ContextMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mono" => Ok(ContextMode::Mono),
            "left-bicontext" | "bicontext" => Ok(ContextMode::LeftBiContext),
            other => Err(Error::InvalidArgument(format!("unknown context mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for ContextMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ContextMode::Mono => "mono",
            ContextMode::LeftBiContext => "left-bicontext",
        })
    }
}

/// Ordered set of modelling units plus the designated silence unit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenInventory {
    tokens: Vec<String>,
    silence: TokenId,
    context: ContextMode,
    #[serde(skip)]
    index: HashMap<String, TokenId>,
}

impl TokenInventory {
    pub fn new<S: AsRef<str>>(tokens: &[S], silence: &str, context: ContextMode) -> Result<Self> {
        if tokens.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "token inventory needs at least 2 tokens, got {}",
                tokens.len()
            )));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            let t = t.as_ref();
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                return Err(Error::InvalidArgument(format!("bad token name {t:?}")));
            }
            if index.insert(t.to_string(), i as TokenId).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate token {t:?}")));
            }
        }
        let silence = *index
            .get(silence)
            .ok_or_else(|| Error::InvalidArgument(format!("silence token {silence:?} not in inventory")))?;
        Ok(Self {
            tokens: tokens.iter().map(|t| t.as_ref().to_string()).collect(),
            silence,
            context,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn silence(&self) -> TokenId {
        self.silence
    }

    pub fn context_mode(&self) -> ContextMode {
        self.context
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn name(&self, id: TokenId) -> &str {
        &self.tokens[id as usize]
    }

    /// Parses whitespace-separated token names.
    pub fn parse(&self, text: &str) -> Result<Vec<TokenId>> {
        text.split_whitespace()
            .map(|t| {
                self.id(t)
                    .ok_or_else(|| Error::InvalidArgument(format!("token {t:?} not in inventory")))
            })
            .collect()
    }

    pub fn render(&self, ids: &[TokenId]) -> String {
        ids.iter().map(|&i| self.name(i)).collect::<Vec<_>>().join(" ")
    }

    /// Number of distinct output pdfs for the given HMM size.
    pub fn pdf_count(&self, states_per_unit: usize) -> usize {
        match self.context {
            ContextMode::Mono => self.len() * states_per_unit,
            ContextMode::LeftBiContext => self.len() * self.len() * states_per_unit,
        }
    }

    /// Pdf of HMM state `state` of `token` entered after `left`.
    pub fn pdf_id(&self, left: TokenId, token: TokenId, state: usize, states_per_unit: usize) -> u32 {
        let unit = match self.context {
            ContextMode::Mono => token as usize,
            ContextMode::LeftBiContext => left as usize * self.len() + token as usize,
        };
        (unit * states_per_unit + state) as u32
    }

    /// Inverse of [`pdf_id`](Self::pdf_id): the token a pdf belongs to.
    pub fn pdf_token(&self, pdf: u32, states_per_unit: usize) -> TokenId {
        let unit = pdf as usize / states_per_unit;
        (unit % self.len()) as TokenId
    }

    /// Rebuilds the lookup index after deserialization.
    pub fn reindex(&mut self) {
        self.index = self
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as TokenId))
            .collect();
    }
}
