//! Tensors, reverse-mode differentiation, MLPs and the Adam optimizer.

pub mod adam;
pub mod checkpoint;
pub mod mlp;
pub mod tape;
pub mod tensor;

pub use adam::{adam_step, AdamState};
pub use checkpoint::Checkpoint;
pub use mlp::{Activation, BoundMlp, Mlp};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
