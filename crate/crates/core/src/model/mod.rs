//! Target-selection classifiers: context encoders (plain or pairwise
//! relation), a bidirectional recurrent dialogue encoder, and training and
//! evaluation around them.

pub mod config;
pub mod eval;
pub mod file;
pub mod network;
pub mod optim;
pub mod params;
pub mod train;

pub use config::{ModelConfig, Variant};
pub use eval::{
    accuracy, evaluate, paired_ttest, predict, EvalReport, PairTest, TrainedModel, VariantScores,
};
pub use file::{ModelFile, ModelFileError, MODEL_FORMAT};
pub use network::{
    cross_entropy, encode_context, encode_dialogue, gradcheck, relation_sum, softmax, Inputs, Mode,
};
pub use params::{ParamError, Parameters, TensorDump};
pub use train::{train, EpochLog, TrainError, TrainOutcome};
