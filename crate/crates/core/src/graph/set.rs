use super::compile::{build_decoding_graph, build_denominator_graph, build_lm_numerator_graph};
use super::inventory::{TokenId, TokenInventory};
use super::ngram::{estimate_token_ngram, TokenNgramLm};
use super::topology::{build_hmm_topology, HmmTopology};
use super::wfst::WeightedGraph;
use crate::error::Result;

/// Everything needed to supervise and decode with one model: the shared
/// denominator and decoding graphs plus what numerators are built from.
#[derive(Debug, Clone)]
pub struct GraphSet {
    pub inventory: TokenInventory,
    pub topology: HmmTopology,
    pub den: WeightedGraph,
    pub dec: WeightedGraph,
}

impl GraphSet {
    pub fn new(inventory: TokenInventory, topology: HmmTopology, lm: &TokenNgramLm) -> Result<Self> {
        let den = build_denominator_graph(lm, &topology, &inventory)?;
        let dec = build_decoding_graph(lm, &topology, &inventory)?;
        Ok(Self {
            inventory,
            topology,
            den,
            dec,
        })
    }

    /// Reassembles a set from stored graphs, checking they fit the inventory.
    pub fn from_parts(inventory: TokenInventory, topology: HmmTopology, den: WeightedGraph, dec: WeightedGraph) -> Result<Self> {
        let pdfs = inventory.pdf_count(topology.states_per_unit());
        for (what, g) in [("denominator pdf count", &den), ("decoding pdf count", &dec)] {
            if g.pdf_count() != pdfs {
                return Err(crate::error::Error::DimensionMismatch {
                    what,
                    expected: pdfs,
                    got: g.pdf_count(),
                });
            }
        }
        Ok(Self {
            inventory,
            topology,
            den,
            dec,
        })
    }

    /// Estimates the token LM on silence-wrapped references.
    pub fn from_references(
        inventory: TokenInventory,
        states_per_unit: usize,
        order: usize,
        references: &[Vec<TokenId>],
    ) -> Result<Self> {
        let text = wrap_with_silence(references, inventory.silence());
        let lm = estimate_token_ngram(&text, inventory.len(), order)?;
        Self::new(inventory, build_hmm_topology(states_per_unit)?, &lm)
    }

    pub fn pdf_count(&self) -> usize {
        self.inventory.pdf_count(self.topology.states_per_unit())
    }

    /// LM-weighted numerator graph for `labels` over `frames` frames.
    pub fn numerator(&self, labels: &[TokenId], frames: usize) -> Result<WeightedGraph> {
        build_lm_numerator_graph(labels, &self.dec, &self.topology, &self.inventory, frames)
    }

    /// Drops silence tokens from a decoded token sequence.
    pub fn strip_silence(&self, tokens: &[TokenId]) -> Vec<TokenId> {
        let sil = self.inventory.silence();
        tokens.iter().copied().filter(|&t| t != sil).collect()
    }
}

/// `[sil] + ref + [sil]` for every reference.
pub fn wrap_with_silence(references: &[Vec<TokenId>], silence: TokenId) -> Vec<Vec<TokenId>> {
    references
        .iter()
        .map(|r| {
            let mut v = Vec::with_capacity(r.len() + 2);
            v.push(silence);
            v.extend_from_slice(r);
            v.push(silence);
            v
        })
        .collect()
}
