//! Burst deflickering: frequency-domain fusion, wavelet directional attention and
//! a U-shaped restoration network with reverse-mode differentiation, plus a
//! rolling-shutter flicker simulator that produces verifiable synthetic bursts.

pub mod analysis;
pub mod autodiff;
pub mod backend;
pub mod blocks;
pub mod error;
pub mod flicker;
pub mod imageio;
pub mod network;
pub mod params;
pub mod random;
pub mod spectral;
pub mod tensor;
pub mod train;
pub mod wavelet;

pub use backend::{Backend, Eager};
pub use error::{CheckpointError, Error, Result};
pub use tensor::Tensor;
