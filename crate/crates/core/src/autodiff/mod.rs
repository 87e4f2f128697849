//! Dense reverse-mode differentiation, parameters, optimizers and
//! checkpoints.

mod checkpoint;
mod graph;
mod optim;
mod params;
mod tensor;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC};
pub use graph::{Elementwise, Graph, Var, NORM_EPS};
pub use optim::{OptimizerKind, OptimizerState};
pub use params::{Bound, Param, ParamSet};
pub use tensor::Tensor;

#[cfg(test)]
mod gradcheck;
