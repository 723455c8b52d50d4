//! Minimal trainable network, losses, augmentation and datasets.

mod augment;
mod checkpoint;
mod data;
mod eval;
mod loss;
mod matrix;
mod mlp;
mod optim;
mod train;

pub use augment::{augment, blend, MASK_RATE};
pub use checkpoint::{decode_network, encode_network};
pub use data::{Dataset, SyntheticSpec};
pub use eval::{accuracy, evaluate, Predictor};
pub use loss::{
    cross_entropy, distillation_loss, l2_normalize_rows, log_softmax, mine_triplets, softmax,
    softmax_entropy, triplet_contrastive_loss, triplet_loss, LossGrad, Mining, Triplet,
};
pub use matrix::{argmax, axpy, dot, l2_norm, Matrix};
pub use mlp::{Activation, Forward, MlpNetwork, NetSpec};
pub use optim::Sgd;
pub use train::{shuffled_batches, train_loop, TrainConfig};
