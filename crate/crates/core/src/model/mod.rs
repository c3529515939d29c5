//! Annotator-level Deep & Cross Network, evaluation metrics, and baselines.

mod baselines;
mod checkpoint;
mod dcn;
mod metrics;
mod train;

pub use baselines::{LogisticRegression, MostFrequentClass, DEFAULT_L2_C};
pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, MAGIC};
pub use dcn::{
    batch_inputs, bce_with_logit, build_input, fill_input, forward, forward_batch, loss_and_grad, sigmoid, Activations,
    AdamConfig, DcnConfig, DcnParams, InputMask, TrainExample, GROUP_DIM,
};
pub use metrics::{auc, classification_metrics, Metrics};
pub use train::{build_examples, train, DcnModel, EpochLog, GroupScaler, TrainOutcome};
