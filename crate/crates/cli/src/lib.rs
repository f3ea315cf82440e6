//! Experiment drivers and synthetic data for the low-pass residual network
//! laboratory. The binary in this crate fronts these modules; everything is
//! callable as a library so the test suites drive the same code paths.

pub mod dataset;
pub mod emit;
pub mod experiments;
pub mod train;

pub use lowpass_core as core;
