//! Dense tensors, reverse-mode differentiation, gradient checking and the
//! checkpoint container.

mod checkpoint;
mod gradcheck;
mod graph;
mod optim;
mod tensor;

pub use checkpoint::{load_params, read_checkpoint, save_params, write_checkpoint, CHECKPOINT_MAGIC};
pub(crate) use checkpoint::ByteReader;
pub use gradcheck::{grad_check, relative_error, GradCheckReport};
pub use graph::{Gradients, Graph, Reduction, Var};
pub use optim::Adam;
pub use tensor::{ParamId, ParamStore, Parameter, Tensor};
