//! Frequency-selective reflecting surfaces built from Foster-loaded dipoles.

pub mod em;
pub mod error;
pub mod foster;
pub mod ideal;
pub mod optimize;
pub mod runner;
pub mod scenario;
pub mod special;

pub use error::{Error, Result};
