//! Minimal differentiable building blocks: dense stacks, tanh / three-level
//! activations, ternary quantization with straight-through gradients, and a
//! GRU cell. Everything is f64 and hand-differentiated; gradient code is
//! checked against central finite differences in the tests.

mod activation;
mod adam;
mod dense;
mod gru;
mod init;
mod ternary;

pub use activation::{tanh_star, tanh_star_prime, Activation};
pub use adam::Adam;
pub use dense::{DenseCache, DenseGrads, DenseLayer, DenseNet};
pub use gru::{GruCache, GruGrads, GruParameters};
pub use init::uniform_fan_in;
pub use ternary::{ternary_quantize, ternary_quantize_slice, TernaryCode};
