//! Acoustic network, LHUC hooks, SGD and the model checkpoint format.

mod checkpoint;
mod lhuc;
mod model;
mod sgd;

pub use checkpoint::{read_checkpoint, write_checkpoint, load_checkpoint, save_checkpoint};
pub use lhuc::{lhuc_scale, lhuc_scale_grad, LhucParams};
pub use model::{
    forward, AcousticNet, Affine, GradRequest, GradientTape, Gradients, NetConfig, NetGrads, NetOutput, ParamKind,
};
pub use sgd::{check_finite, sgd_step, sgd_step_slice};
