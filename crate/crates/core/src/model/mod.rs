//! The clustering transformer: embedders, masked encoder, assignment and
//! count heads, loss and exact gradients.

mod network;
pub mod ops;
mod params;

pub use network::{loss, Cache, EncodedInput, ForwardOutput, LossParts, Network};
pub use ops::Real;
pub use params::{Layout, ModelConfig, Parameters, Slot};
