//! Matrix completion with coupled row/column autoencoders.
//!
//! The crate implements two models over partially observed rating matrices:
//!
//! - a single-branch masked autoencoder that reconstructs user rows (or item
//!   columns) and trains only on observed coordinates, and
//! - a two-branch hybrid whose row and column hidden codes are tied together
//!   by a cosine-similarity head, so the similarity of the codes predicts
//!   the (scaled) rating itself. The extra head acts as a data-dependent
//!   regularizer.
//!
//! Training is minibatch Adam with a step-decay schedule, written from
//! scratch so the gradients stay inspectable; a finite-difference oracle is
//! part of the public surface for verification.

pub mod autorec;
pub mod checkpoint;
pub mod data;
pub mod eval;
pub mod hybrid;
pub mod net;
pub mod optim;
mod seeds;
pub mod trainer;

pub use autorec::{AutoRecModel, ModelError, Orientation};
pub use checkpoint::{Checkpoint, CheckpointError};
pub use data::{
    load_movielens, split, DataError, DataSplit, FileFormat, RatingDataset, RatingScale,
    RatingTriple, TrainingView,
};
pub use eval::{
    evaluate, mae, rmse, run_splits, run_splits_hybrid, EvalError, EvalReport, ModelKind,
    ModelRef, SplitMetrics,
};
pub use hybrid::{
    joint_backward, joint_forward, joint_loss, EntryBatch, HybridModel, JointForward, PredictMode,
};
pub use net::{
    backward_cosine, backward_reconstruction, cosine_similarity, finite_difference_gradient,
    init_params, AutoencoderParams, DenseLayer, GradientBuffer, Matrix, NetError, TensorId,
};
pub use optim::{apply_l2, AdamState, OptimError, Schedule};
pub use trainer::{
    generalization_gap, sample_batches, train_autorec, train_autorec_with, train_hybrid,
    train_hybrid_multi, CurveLog, EpochRecord, MultiOutcome, TrainConfig, TrainError,
    TrainOutcome,
};
