//! Differential light shifts, their compensation and the resulting clock
//! coherence in microlens arrays of optical dipole traps.

pub mod array;
pub mod atomic;
pub mod config;
pub mod constants;
pub mod error;
pub mod fit;
pub mod geometry;
pub mod io;
pub mod optimize;
pub mod pipeline;
pub mod spectroscopy;
pub mod stark;
pub mod trap;

pub use error::{Error, Result};
