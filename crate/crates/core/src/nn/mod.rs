//! Convolutional classifier trained from scratch.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod layers;
pub mod model;
pub mod scalar;
pub mod train;

pub use adam::{adam_step, AdamState};
pub use model::{init_model, Architecture, Model, Params};
pub use scalar::Scalar;
pub use train::{train, Callbacks, DataSet, EpochRecord, TrainConfig, TrainHistory};
