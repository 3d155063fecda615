//! Multi-label LSTM detector: network, optimiser, data preparation and
//! training.

pub mod adam;
pub mod checkpoint;
pub mod mix;
pub mod network;
pub mod scaler;
pub mod sequence;
pub mod train;

pub use adam::{clip_gradient_norm, AdamConfig, AdamState};
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use mix::block_mix;
pub use network::{backward, forward, loss, NetworkParams, Reduction};
pub use scaler::Scaler;
pub use sequence::{join_sequences, split_sequences, SequenceBatch, DEFAULT_SEQUENCE_LENGTH};
pub use train::{
    threshold_posteriors, train, EpochRecord, LabeledFeatures, Model, TrainConfig, TrainState, Trainer, TrainingLog,
};
