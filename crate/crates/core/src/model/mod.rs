//! Layers, networks, forward passes, vector-Jacobian products, losses and
//! energies.

mod activation;
mod layer;
mod loss;
mod network;
pub mod serialize;

pub use activation::{Activation, LEAKY_SLOPE};
pub use layer::{Layer, LayerVjp};
pub use loss::{loss_and_grad, per_sample_loss, Loss};
pub use network::{EnergyReport, ErrorConfig, ForwardPass, MlpSpec, Network, StateConfig};
pub use serialize::{load_network, save_network};
