//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! A [`Graph`] records operations eagerly: every op computes its value
//! immediately and appends a node to the tape. [`Graph::backward`] walks the
//! tape in reverse from a scalar output. Parameters live outside the tape in
//! a [`ParamSet`] and are bound onto a fresh graph each step.
//!
//! ```
//! use advtex_autograd::{Graph, Tensor};
//!
//! let g = Graph::new();
//! let x = g.leaf(Tensor::new(&[2], vec![1.0, -2.0]));
//! let y = x.mul(x).sum();
//! let grads = g.backward(y);
//! assert_eq!(grads.get(x).unwrap().data(), &[2.0, -4.0]);
//! ```

mod graph;
mod kernels;
mod params;
mod tensor;

pub use graph::{sigmoid, smooth_abs, softplus, Gradients, Graph, SparseMap, SparseMapBuilder, Unary, Var};
pub use params::{Adam, Bound, ParamSet};
pub use tensor::Tensor;
