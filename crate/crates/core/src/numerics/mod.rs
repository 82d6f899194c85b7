//! Tensor arithmetic, reverse-mode differentiation, Adam and a finite-difference oracle.

pub mod adam;
pub mod finite_diff;
pub mod graph;
pub mod kernels;
pub mod params;
pub mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use finite_diff::{finite_diff_grad, max_rel_error};
pub use graph::{Gradients, Graph, Var};
pub use kernels::{conv1d, group_norm, layer_norm, log_sum_exp, scaled_dot_attention, silu, softmax};
pub use params::{fan_in_uniform, sum_grads, Bound, ParamSet};
pub use tensor::{Real, Tensor};
