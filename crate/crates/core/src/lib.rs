//! Beamforming design for cell-free MIMO downlinks with non-coherent joint
//! transmission: each access point in a user's serving cluster sends that user
//! an independent data stream block, and the user decodes the superposition.
//!
//! The crate provides
//! * a reproducible network / channel model ([`network`]),
//! * exact rate and power metrics plus fronthaul accounting ([`metrics`]),
//! * a weighted-MMSE block-coordinate solver on full-size beamformers
//!   ([`wmmse`]),
//! * an equivalent reduced-dimension solver whose per-sweep cost does not
//!   grow with the transmit array size ([`rwmmse`]),
//! * a closed-form per-access-point zero-forcing baseline ([`ezf`]),
//! * stream on/off selection on top of the reduced solver ([`streams`]),
//! * a Monte Carlo experiment harness with CSV output ([`harness`]) and a
//!   portable binary channel format ([`chanfile`]).

pub mod chanfile;
pub mod error;
pub mod ezf;
pub mod harness;
pub mod linalg;
pub mod metrics;
pub mod network;
pub mod rwmmse;
pub mod streams;
#[cfg(test)]
pub(crate) mod testutil;
pub mod types;
pub mod wmmse;

pub use error::{Error, Result};
pub use linalg::CMat;
pub use network::{
    amplitude_gain, draw_channels, pathloss_db, place_network, ChannelSet, NetworkConfig, NoiseReference, Topology,
};
pub use types::{Algorithm, Beamformer, LowDimBeamformer, MmseAux, SolveTrace, SolverOptions, StreamCounts};
