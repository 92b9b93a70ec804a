//! Wideband mm-Wave massive MIMO-OFDM toolkit.
//!
//! The crate simulates frequency-selective geometric millimeter-wave channels,
//! the downlink pilot-training protocol, classical channel estimators (LS,
//! LMMSE, on-grid angle-domain OMP), and hybrid analog/digital beamformer
//! design by Riemannian manifold optimization. On top of that sits a small
//! deterministic neural-network engine and the learned pipelines that map
//! received pilots to channel estimates and beamformers, including an online
//! threshold-triggered model-refresh loop.
//!
//! Everything is seed-parameterized: any operation that draws randomness takes
//! an explicit seed and is bit-reproducible.

pub mod channel;
pub mod chest;
pub mod error;
pub mod frameworks;
pub mod hybrid;
pub mod linalg;
pub mod neural;
pub mod online;
pub mod pilot;
pub mod rng;

pub use channel::{ChannelScenario, ChannelTensor, SystemConfig};
pub use error::{Error, Result};

pub use pilot::{PilotConfig, ReceivedPilot};
