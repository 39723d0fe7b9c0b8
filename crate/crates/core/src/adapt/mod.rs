//! Speaker adaptation: LHUC, Bayesian LHUC, MAP-LHUC and KL-LHUC
//! estimation, SAT, confidence-based selection and the unsupervised loop.

mod adapter;
mod config;
mod estimate;
mod penalty;
mod pipeline;
mod select;
mod train;

pub use adapter::{AdapterParams, SpeakerAdapter};
pub use config::{AdaptConfig, AdaptMethod, Regularizer};
pub use estimate::{
    blhuc_noise, blhuc_step_loss, estimate_adapter, estimate_blhuc, estimate_blhuc_traced, estimate_lhuc,
    estimate_lhuc_traced, lhuc_step_loss, AdaptItem, EstimateReport,
};
pub use penalty::{gaussian_kl, gaussian_kl_grads, kl_output_penalty, map_penalty, PriorSpec};
pub use pipeline::{
    decode_best_path, decode_tokens, first_pass, run_unsupervised_adaptation, AdaptationOutcome, FirstPass, Padding,
    SpeakerData, Supervision,
};
pub use select::{bucket_utterance_lengths, confidence_score, default_bucket_table, select_by_confidence};
pub use train::{sat_train, train_si, TrainConfig, TrainItem, TrainReport};
