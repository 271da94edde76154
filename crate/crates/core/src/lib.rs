//! Core library for the disturbance-rejection analysis pipeline.
//!
//! The pipeline trains a recurrent (GRU) actor-critic controller that keeps a
//! thrust-saturated free-floating platform near the origin while sinusoidal
//! forces larger than the actuators can counter push it around. The trained
//! controller is then made discrete: ternary quantization autoencoders are
//! learned for observations, actions, and hidden states, a Moore machine is
//! extracted from quantized rollouts and minimized as an incompletely
//! specified sequential machine, and the frequently visited states are
//! abstracted into a small switching automaton whose cyclic patterns are
//! checked against the driving disturbances.

pub mod error;
pub mod nn;
pub mod sim;
pub mod quant;
pub mod policy;
pub mod a2c;
pub mod automaton;
pub mod kmmn;
pub mod artifact;
pub mod pipeline;

pub use error::{Error, Result};
