//! Numerical laboratory for frequency-domain behaviour of spectrally
//! normalized residual networks.
//!
//! The crate is organized as:
//!
//! * [`tensor`] — dense f64 tensors, direct convolutions, and a reverse-mode
//!   differentiation tape;
//! * [`spectral`] — 2-D DFT, the ideal low-pass projection, decimation and
//!   aliasing helpers, the rectifier-as-frequency-convolution identity,
//!   dominant-window checks and radial power spectra;
//! * [`filters`] — anti-aliased downsampling and channel zero-padding;
//! * [`blocks`] — spectrally normalized convolutions and residual blocks with
//!   blur-pool skips, assembled into small networks;
//! * [`analysis`] — batch checks of low-band dominance and low-band
//!   contraction across a network's blocks;
//! * [`collapse`] — constructive searches for feature collapse along gradient
//!   level sets and Jacobian null spaces.

#![forbid(unsafe_code)]

pub mod analysis;
pub mod blocks;
pub mod collapse;
pub mod error;
pub mod filters;
pub mod spectral;
pub mod tensor;

pub use error::{CoreError, Result};
pub use filters::BlurKind;
pub use spectral::band::FrequencyBudget;
pub use spectral::Spectrum;
pub use tensor::conv::Padding;
pub use tensor::graph::{DifferentiableMap, Graph, NodeId};
pub use tensor::Tensor;
