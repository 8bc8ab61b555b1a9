//! Illumination-insensitive face verification.
//!
//! Images are aligned per face model, normalized with the integral
//! normalized gradient image (INGI), encoded as hybrid Fourier features,
//! projected with PCA or kernel PCA, and matched with Euclidean distance
//! before score fusion.

pub mod config;
pub mod datasets;
pub mod error;
pub mod evalproto;
pub mod fourier;
pub mod imgcore;
pub mod ingi;
pub mod matching;
pub mod pipeline;
pub mod subspace;
pub mod workflow;

pub use error::{Error, Result};
