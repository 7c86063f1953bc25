//! Feed-forward sigmoid networks: inference, training and MAC accounting.

pub mod activation;
pub mod codec;
pub mod mlp;
pub mod train;

pub use activation::{pwl_sigmoid, sigmoid, ActivationKind, PwlTable};
pub use codec::{decode_model, encode_model, load_model, save_model};
pub use mlp::{argmax, count_mac, init_mlp, Layer, MlpModel, Topology};
pub use train::{
    dataset_loss, gradient_check, gradient_check_entries, train_sgd, GradientEntry, LossKind, ParamKind, Sample,
    TrainConfig, TrainStats,
};
