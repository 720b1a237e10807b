//! Small differentiable substrate: dense layers, relu, dense residual blocks
//! and softmax, with explicit forward/backward passes and FLOPs accounting.
//!
//! Every layer treats the last tensor axis as features and all leading axes
//! as batch. Backward passes replay a [`Tape`] recorded by the matching
//! forward pass; a tape from older parameters is rejected.

mod layer;
mod net;
mod tensor;

pub use layer::{
    flops_estimate, init_params, params_from_layers, validate_chain, Dense, Gradients, LayerKind,
    LayerParams, LayerSpec, NetParams,
};
pub use net::{
    apply_sgd, backward, backward_into, forward, forward_range, infer, infer_range, sgd_step,
    Momentum, Tape,
};
pub use tensor::Tensor;
