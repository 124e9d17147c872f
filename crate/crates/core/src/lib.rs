//! Thin-lens bokeh rendering, synthetic defocus benchmarks and depth recovery
//! from sweeps of bokeh strength.

pub mod benchgen;
pub mod calib;
pub mod cli;
pub mod dfd;
pub mod error;
pub mod io_formats;
pub mod metrics;
pub mod optics;
pub mod raster;
pub mod renderer;
pub mod scene;

pub use error::{Error, Result};
