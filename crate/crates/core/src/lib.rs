//! Interferometric particle imaging: shape synthesis, speckle formation,
//! phase retrieval, three-view recombination, datasets and metrics.

pub mod dataset;
pub mod error;
pub mod fft;
pub mod io;
pub mod loss;
pub mod metrics;
pub mod optics;
pub mod raster;
pub mod retrieval;
pub mod seed;
pub mod shapes;
pub mod tomo;

pub use error::{Error, Result};
