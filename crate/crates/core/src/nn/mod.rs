//! Fully-connected network substrate: dense layers with optional batch
//! normalization, a fixed activation set, manual backpropagation, Adam and
//! the two losses the encoders and classifier need.

mod adam;
pub mod checkpoint;
mod layer;
mod loss;
mod net;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use layer::{Activation, BatchNorm, Dense};
pub use loss::{
    l2_normalize_backward, l2_normalize_rows, l2_normalize_rows_with_norms, log_sum_exp,
    softmax_cross_entropy, softmax_rows, ZERO_NORM,
};
pub use net::{DenseNet, ForwardCache, Gradients, LayerGrads, LayerSpec, Mode};
