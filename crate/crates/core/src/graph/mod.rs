//! Flat-start HMM topologies and the weighted graphs built from them.

mod compile;
mod inventory;
mod ngram;
mod set;
mod topology;
mod wfst;

pub use compile::{build_decoding_graph, build_denominator_graph, build_lm_numerator_graph, build_numerator_graph, min_frames};
pub use inventory::{ContextMode, TokenId, TokenInventory};
pub use ngram::{estimate_token_ngram, estimate_with_discount, TokenNgramLm, DEFAULT_DISCOUNT};
pub use set::{wrap_with_silence, GraphSet};
pub use topology::{build_hmm_topology, HmmTopology, Transition};
pub use wfst::{Arc, GraphBuilder, StateId, WeightedGraph};
