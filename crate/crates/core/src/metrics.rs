//! Token error rate by Levenshtein alignment.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::TokenId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EditCounts {
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
    /// Reference token count.
    pub reference: usize,
}

impl EditCounts {
    pub fn errors(&self) -> usize {
        self.substitutions + self.insertions + self.deletions
    }

    /// `(S + I + D) / N`; zero-length references score 0 when error free
    /// and count every insertion otherwise.
    pub fn ter(&self) -> f64 {
        if self.reference == 0 {
            return self.errors() as f64;
        }
        self.errors() as f64 / self.reference as f64
    }

    pub fn add(&mut self, o: &EditCounts) {
        self.substitutions += o.substitutions;
        self.insertions += o.insertions;
        self.deletions += o.deletions;
        self.reference += o.reference;
    }
}

/// Unit-cost edit alignment. On equal cost the backtrace prefers a
/// substitution (diagonal) over deletion, and deletion over insertion.
pub fn align(reference: &[TokenId], hypothesis: &[TokenId]) -> EditCounts {
    let (n, m) = (reference.len(), hypothesis.len());
    let w = m + 1;
    let mut d = vec![0usize; (n + 1) * w];
    for i in 0..=n {
        d[i * w] = i;
    }
    for j in 0..=m {
        d[j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let sub = d[(i - 1) * w + j - 1] + usize::from(reference[i - 1] != hypothesis[j - 1]);
            let del = d[(i - 1) * w + j] + 1;
            let ins = d[i * w + j - 1] + 1;
            d[i * w + j] = sub.min(del).min(ins);
        }
    }
    let mut c = EditCounts {
        reference: n,
        ..EditCounts::default()
    };
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = d[i * w + j];
        if i > 0 && j > 0 {
            let diff = usize::from(reference[i - 1] != hypothesis[j - 1]);
            if d[(i - 1) * w + j - 1] + diff == here {
                c.substitutions += diff;
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && d[(i - 1) * w + j] + 1 == here {
            c.deletions += 1;
            i -= 1;
        } else {
            c.insertions += 1;
            j -= 1;
        }
    }
    c
}

/// Scores for one set of hypotheses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub total: EditCounts,
    pub ter: f64,
    pub per_speaker: BTreeMap<String, EditCounts>,
}

/// `references` maps utterance id to `(speaker, tokens)`.
pub fn score_token_error_rate(
    hypotheses: &BTreeMap<String, Vec<TokenId>>,
    references: &BTreeMap<String, (String, Vec<TokenId>)>,
) -> Result<ScoreReport> {
    let h: BTreeSet<&String> = hypotheses.keys().collect();
    let r: BTreeSet<&String> = references.keys().collect();
    if h != r {
        return Err(Error::IdMismatch {
            missing_hyp: r.difference(&h).map(|s| s.to_string()).collect(),
            missing_ref: h.difference(&r).map(|s| s.to_string()).collect(),
        });
    }
    let mut total = EditCounts::default();
    let mut per_speaker: BTreeMap<String, EditCounts> = BTreeMap::new();
    for (id, (speaker, reference)) in references {
        let c = align(reference, &hypotheses[id]);
        total.add(&c);
        per_speaker.entry(speaker.clone()).or_default().add(&c);
    }
    Ok(ScoreReport {
        ter: total.ter(),
        total,
        per_speaker,
    })
}
