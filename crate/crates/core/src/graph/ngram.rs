//! Token n-gram LM with interpolated absolute discounting.
//!
//! For a history `h` with `c(h)` observations and `N1+(h)` distinct
//! followers,
//!
//! ```text
//! P(w | h) = max(c(h,w) - d, 0) / c(h) + d * N1+(h) / c(h) * P(w | h')
//! ```
//!
//! where `h'` drops the oldest token. Unseen histories back off entirely to
//! `h'`. The recursion bottoms out at a uniform distribution over the
//! vocabulary, so every history is normalized by construction. Histories may
//! start with a sentence-begin marker (`bos()`), which is never predicted.

use std::collections::BTreeMap;

use super::inventory::TokenId;
use crate::error::{Error, Result};

pub const DEFAULT_DISCOUNT: f64 = 0.5;

#[derive(Debug, Clone, Default, PartialEq)]
struct ContextCounts {
    total: u64,
    followers: BTreeMap<TokenId, u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TokenNgramLm {
    order: usize,
    vocab: usize,
    discount: f64,
    // keyed by context (oldest first); contexts of every length < order
    counts: BTreeMap<Vec<TokenId>, ContextCounts>,
}

/// Maximum-likelihood counts with absolute-discount backoff (d = 0.5).
pub fn estimate_token_ngram(corpus: &[Vec<TokenId>], vocab: usize, order: usize) -> Result<TokenNgramLm> {
    estimate_with_discount(corpus, vocab, order, DEFAULT_DISCOUNT)
}

pub fn estimate_with_discount(corpus: &[Vec<TokenId>], vocab: usize, order: usize, discount: f64) -> Result<TokenNgramLm> {
    if order < 1 {
        return Err(Error::InvalidArgument("n-gram order must be >= 1".into()));
    }
    if corpus.is_empty() {
        return Err(Error::InvalidArgument("n-gram corpus is empty".into()));
    }
    if !(0.0..1.0).contains(&discount) {
        return Err(Error::InvalidArgument(format!("discount {discount} outside [0,1)")));
    }
    let bos = vocab as TokenId;
    let mut counts: BTreeMap<Vec<TokenId>, ContextCounts> = BTreeMap::new();
    for seq in corpus {
        let mut full = Vec::with_capacity(seq.len() + 1);
        full.push(bos);
        for &w in seq {
            if w as usize >= vocab {
                return Err(Error::InvalidArgument(format!("token {w} outside vocabulary of {vocab}")));
            }
            let avail = full.len();
            for k in 0..order.min(avail + 1) {
                let ctx = full[avail - k..].to_vec();
                let entry = counts.entry(ctx).or_default();
                entry.total += 1;
                *entry.followers.entry(w).or_insert(0) += 1;
            }
            full.push(w);
        }
    }
    Ok(TokenNgramLm {
        order,
        vocab,
        discount,
        counts,
    })
}

impl TokenNgramLm {
    /// LM with no observations: uniform for every history.
    pub fn uniform(vocab: usize, order: usize) -> Self {
        Self {
            order: order.max(1),
            vocab,
            discount: DEFAULT_DISCOUNT,
            counts: BTreeMap::new(),
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    /// Sentence-begin marker id (one past the last token).
    pub fn bos(&self) -> TokenId {
        self.vocab as TokenId
    }

    /// Raw count ratio `c(h,w)/c(h)` without discounting.
    pub fn ml_prob(&self, context: &[TokenId], w: TokenId) -> Option<f64> {
        let c = self.counts.get(context)?;
        Some(c.followers.get(&w).copied().unwrap_or(0) as f64 / c.total as f64)
    }

    pub fn prob(&self, history: &[TokenId], w: TokenId) -> f64 {
        let keep = history.len().min(self.order - 1);
        self.level_prob(&history[history.len() - keep..], w)
    }

    pub fn log_prob(&self, history: &[TokenId], w: TokenId) -> f64 {
        self.prob(history, w).ln()
    }

    fn level_prob(&self, ctx: &[TokenId], w: TokenId) -> f64 {
        let lower = if ctx.is_empty() {
            1.0 / self.vocab as f64
        } else {
            self.level_prob(&ctx[1..], w)
        };
        match self.counts.get(ctx) {
            Some(c) if c.total > 0 => {
                let n = c.total as f64;
                let cw = c.followers.get(&w).copied().unwrap_or(0) as f64;
                let n1 = c.followers.len() as f64;
                (cw - self.discount).max(0.0) / n + self.discount * n1 / n * lower
            }
            _ => lower,
        }
    }

    /// History reached after emitting `w` from `history`.
    pub fn next_history(&self, history: &[TokenId], w: TokenId) -> Vec<TokenId> {
        let mut h = history.to_vec();
        h.push(w);
        let keep = h.len().min(self.order - 1);
        h.split_off(h.len() - keep)
    }

    /// Initial history (the sentence-begin marker, truncated to the order).
    pub fn initial_history(&self) -> Vec<TokenId> {
        if self.order > 1 {
            vec![self.bos()]
        } else {
            Vec::new()
        }
    }

    /// All histories reachable from the initial one, in BFS order.
    pub fn histories(&self) -> Vec<Vec<TokenId>> {
        let mut seen = BTreeMap::new();
        let mut out = vec![self.initial_history()];
        seen.insert(out[0].clone(), 0usize);
        let mut i = 0;
        while i < out.len() {
            for w in 0..self.vocab as TokenId {
                let nh = self.next_history(&out[i], w);
                if !seen.contains_key(&nh) {
                    seen.insert(nh.clone(), out.len());
                    out.push(nh);
                }
            }
            i += 1;
        }
        out
    }
}
