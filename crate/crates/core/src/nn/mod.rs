//! Minimal differentiable substrate: tensors, a reverse-mode tape, the layers
//! the encoder and denoiser need, AdamW, gradient checking and checkpoints.

pub mod checkpoint;
pub mod functional;
pub mod gradcheck;
mod graph;
pub mod layers;
pub mod optim;
mod params;
mod tensor;

pub use functional::{cross_entropy, softmax, Target};
pub use gradcheck::{gradient_check, GradCheckReport};
pub use graph::{Graph, Var, LAYER_NORM_EPS};
pub(crate) use graph::gelu;
pub use layers::{linear_forward, Embedding, FeedForward, LayerNorm, Linear, MultiHeadAttention, TransformerLayer};
pub use optim::{clip_grad_norm, AdamW, AdamWConfig};
pub use params::{ParamId, ParamStore, Parameter};
pub use tensor::{matmul_into, Tensor};
