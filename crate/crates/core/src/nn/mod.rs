//! Minimal differentiable kernel: tensors, a reverse-mode tape, layers,
//! Adam, time embeddings and checkpoints.

pub mod embed;
pub mod gradcheck;
pub mod graph;
pub mod layers;
pub mod optim;
pub mod params;
pub mod tensor;

pub use embed::{sinusoidal_embed, TimeEmbedding};
pub use gradcheck::{grad_check, GradCheckOptions};
pub use graph::{Activation, ConvGeometry, Gradients, Graph, Var};
pub use layers::{Conv1d, ConvTranspose1d, Linear};
pub use optim::Adam;
pub use params::{hex_digest, kaiming_uniform, ParamId, Params};
pub use tensor::Tensor;
