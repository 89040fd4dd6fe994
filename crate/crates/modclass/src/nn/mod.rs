//! Minimal dense-tensor engine: forward and backward passes for exactly the
//! layer set the network layouts use, plus SGD with momentum.

pub mod gradcheck;
mod graph;
mod init;
mod kernels;
mod layers;
mod loss;
mod optim;
mod tensor;

pub use graph::{layer_out_shape, FeatShape, GraphCache, Layer, LayerCache, ModelGraph, Stage};
pub use init::init_he_uniform;
pub use layers::{BatchNorm, BnCache, Conv1d, Dense, SELU_ALPHA, SELU_LAMBDA};
pub use loss::{softmax_rows, softmax_xent};
pub use optim::SgdMomentum;
pub use tensor::{DType, Mode, Real, Tensor};
