//! Small convolutional classifier: model description, f64 forward/backward,
//! SGD training with layer freezing, and a binary checkpoint format.

mod checkpoint;
mod engine;
mod model;
mod train;

pub use checkpoint::{load_model, read_model, save_model, write_model, MODEL_MAGIC, MODEL_VERSION};
pub use engine::{
    argmax, batch_gradient, cross_entropy_loss, forward, forward_with, gradient_check, logit_gradient, predict_batch,
    sample_loss, softmax, BatchGradient, GradientCheck, Mode, Params, CHUNK_SIZE, LOSS_EPSILON,
};
pub use model::{
    build_selector_cnn, flop_estimate, make_transfer_model, CnnSettings, FlopEstimate, Layer, LayerKind, NetworkModel,
    Padding, Shape,
};
pub use train::{learning_rate_at, train, EpochStats, StopReason, TrainConfig, TrainReport};
