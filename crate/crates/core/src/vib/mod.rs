// SPDX-License-Identifier: Apache-2.0

//! Per-layer variational information bottleneck classifier.

mod checkpoint;
mod gradcheck;
mod model;
mod train;

pub use checkpoint::{
    checkpoint_bytes, checkpoint_from_bytes, load_checkpoint, save_checkpoint, CHECKPOINT_VERSION,
};
pub use gradcheck::{gradient_check, GradCheckReport};
pub use model::{
    bce_with_logit, reparameterize, sigmoid, standard_normal, Architecture, IbLossBreakdown, Mode,
    RunningStats, VibModel, VibParams, TENSOR_NAMES,
};
pub use train::{
    dataset, smooth, train, train_layers, Adam, EpochRecord, TrainConfig, TrainOutcome,
};
