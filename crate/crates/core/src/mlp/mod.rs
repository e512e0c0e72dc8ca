//! Fully connected regression network trained with Adam.
//!
//! Each hidden layer is dense, then ReLU, then batch normalization. The head
//! is a dense layer followed by a sigmoid scaled to `[0, output_scale]`.

pub mod checkpoint;
pub mod gradcheck;
mod model;
pub mod optim;
pub mod schedule;
pub mod train;

pub use checkpoint::{read_checkpoint, write_checkpoint};
pub use gradcheck::{compare_gradients, gradient_check, GradCheckConfig, GradientCheckReport};
pub use model::{
    count_parameters, dense_parameters, mse_loss, BatchNorm, Dense, ForwardCache, Gradients, HiddenLayer,
    MlpModel, Mode, ModelConfig, ParamId, ParamKind, BN_EPSILON, BN_MOMENTUM, DEFAULT_HIDDEN_WIDTH,
    DEFAULT_N_HIDDEN, INIT_SCHEME,
};
pub use optim::{adam_step, AdamState};
pub use schedule::{cycle_boundaries, lr_at};
pub use train::{train, BatchRule, StopReason, TrainConfig, TrainReport, DEFAULT_MAX_STEPS};
