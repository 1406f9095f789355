//! Simulation toolkit for a two-node superconducting quantum network
//! connected by a long multimode cable: coupler circuit physics, stationary-
//! and flying-photon dynamics, photon-emission pulse shaping and calibration,
//! and teleportation protocols with tomography.

pub mod device;
pub mod iosim;
pub mod multimode;
pub mod protocol;
pub mod pulse;
pub mod quantum;
pub mod tomography;
pub mod error;
pub mod parallel;

pub use error::{Error, Result};
