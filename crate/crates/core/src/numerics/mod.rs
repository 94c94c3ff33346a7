//! Dense tensors, reverse-mode differentiation, finite-difference checks,
//! seeded randomness and the checkpoint container.

pub mod checkpoint;
pub mod gradcheck;
pub mod graph;
pub mod params;
pub mod rng;
pub mod tensor;

pub use gradcheck::{finite_diff_check, CheckOptions, CheckReport};
pub use graph::{Fault, Graph, Var};
pub use params::{Gradients, ParamId, ParamStore, Parameter};
pub use rng::Rng;
pub use tensor::{masked_softmax, Tensor};
