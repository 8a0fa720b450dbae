//! Reconstruction of RF-EMF exposure maps from sparse sensor readings.
//!
//! An untrained U-Net style generator is fitted per map so that its output
//! agrees with the sensor cells only; the convolutional structure of the
//! network fills in the unobserved cells. The crate also carries a synthetic
//! urban field simulator, classical interpolation baselines and a sweep
//! harness for sensor-density experiments.

pub mod autodiff;
pub mod config;
pub mod error;
pub mod grid;
pub mod harness;
pub mod metrics;
pub mod net;
pub mod recon;
pub mod render;
pub mod sim;

pub use error::{Error, Result};
pub use grid::{ExposureGrid, GridDims, ObservationMask, SensorReading, SensorSet};
