//! Symmetry-resolved randomized measurements for lattice gauge theories.

pub mod circuits;
pub mod design;
pub mod error;
pub mod estimators;
pub mod hilbert;
pub mod measurement;
pub mod models;
pub mod optimize;
pub mod sectors;
pub mod shadows;
pub mod states;
pub mod eht;

pub use error::{Error, Result};
