//! Simulator for a unidirectional time-bin single-photon interference link:
//! faint-pulse source, two asymmetric Mach-Zehnder interferometers joined by
//! fiber, and a balanced pair of gated APDs, with a BB84 layer and runners
//! for counting-rate, fringe and QBER experiments.

pub mod channel;
pub mod detection;
pub mod error;
pub mod experiments;
pub mod optics;
pub mod protocol;
pub mod stats;

pub use error::{Error, Result};
