//! Flat-start LF-MMI acoustic model training with LHUC-family speaker
//! adaptation, at desk scale.
//!
//! The crate is organised bottom-up:
//!
//! - [`graph`]: token inventories, HMM topologies, n-gram token LMs and the
//!   numerator / denominator / decoding graphs built from them.
//! - [`inference`]: forward-backward, Viterbi, lattices and frame posteriors.
//! - [`net`]: a small feed-forward acoustic model with LHUC hooks and two
//!   output heads, with handwritten backprop.
//! - [`objective`]: LF-MMI and CE criteria and their interpolation.
//! - [`adapt`]: LHUC, Bayesian LHUC, MAP-LHUC, KL-LHUC, SAT, confidence
//!   based data selection and the unsupervised adaptation loop.
//! - [`corpus`]: synthetic multi-speaker corpora and their on-disk format.
//! - [`metrics`], [`report`], [`config`], [`experiment`]: scoring and the
//!   reproducible experiment harness used by the CLI.

pub mod adapt;
pub mod config;
pub mod corpus;
pub mod error;
pub mod exec;
pub mod experiment;
pub mod graph;
pub mod inference;
pub mod metrics;
pub mod net;
pub mod objective;
pub mod report;
pub mod rng;
pub mod store;

pub use error::{Error, Result};
