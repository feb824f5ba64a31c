//! Tape-based reverse-mode differentiation over dense matrices.
//!
//! The engine is deliberately narrow: 2-D tensors, an explicit operation
//! tape, and exactly the layers a multi-view trajectory model needs
//! (linear maps, embeddings, layer norm, packed multi-head attention,
//! GRU recurrences, single-layer graph attention), plus AdamW and a
//! finite-difference gradient checker.
//!
//! ```
//! use trajfuse_autograd::{Graph, Tensor};
//!
//! let mut g = Graph::<f64>::new();
//! let x = g.variable(Tensor::scalar(3.0));
//! let y = g.mul(x, x).unwrap();
//! let grads = g.backward(y);
//! assert_eq!(grads.wrt(x).unwrap().item(), 6.0);
//! ```

pub mod checkpoint;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod kernels;
pub mod layers;
pub mod optim;
pub mod params;
pub mod scalar;
pub mod tensor;

pub use error::{Result, TensorError};
pub use gradcheck::{grad_check, grad_check_params, GradCheckError, GradCheckReport};
pub use graph::{Activation, Gradients, Graph, Var};
pub use kernels::attention::AttnGroup;
pub use optim::{AdamW, OptimError, OptimizerState};
pub use params::{Init, ParamId, ParamStore, Parameter};
pub use scalar::Scalar;
pub use tensor::Tensor;
