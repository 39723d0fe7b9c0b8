//! Log-semiring inference over [`WeightedGraph`](crate::graph::WeightedGraph)s.

mod forward_backward;
mod lattice;
mod scores;
mod viterbi;

pub use forward_backward::{forward_backward, log_total, ForwardBackward};
pub use lattice::{
    generate_lattice, generate_lattice_with, lattice_frame_posteriors, Lattice, LatticeArc, LatticeOptions, LatticePath,
};
pub use scores::{log_add, log_softmax_rows, log_sum_exp, softmax_rows, FrameScores, PosteriorTable};
pub use viterbi::{viterbi_best_path, BestPath};
