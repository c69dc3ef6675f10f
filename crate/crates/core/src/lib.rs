//! Predictive coding engine: state-based (sPC) and error-based (ePC)
//! relaxation, learning rules and the analysis tools that relate them.

pub mod analysis;
pub mod cli;
pub mod dataio;
pub mod epc;
pub mod error;
pub mod model;
pub mod numeric;
pub mod spc;
pub mod trace;
pub mod training;
pub mod verify;

pub use error::{PcError, Result};
pub use trace::{Algo, RelaxConfig, RelaxTrace, TraceRecord};
