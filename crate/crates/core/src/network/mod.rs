//! The full burst network: per-frame embedding, phase-correlation fusion, a
//! three-level encoder with window attention, a decoder with wavelet attention
//! and encoder-input skips, and a zero-initialized residual head.

mod config;
mod model;
mod probe;
mod store;

pub use config::ModelConfig;
pub use model::{declare_model, forward, residual};
pub use probe::{perturbed_model, tiny_network_gradcheck};
pub use store::{build_model, ParamStore};

use crate::backend::Eager;
use crate::error::Result;
use crate::tensor::Tensor;

/// Untraced forward pass on a burst `[I0, I1, I2]`.
pub fn infer(store: &ParamStore, cfg: &ModelConfig, frames: [&Tensor; 3]) -> Result<Tensor> {
    for (i, f) in frames.iter().enumerate() {
        f.ensure_finite(&format!("frame {i}"))?;
    }
    forward(&Eager, &store.scope(), cfg, frames)
}

/// Total scalar parameter count of `cfg`.
pub fn param_count(cfg: &ModelConfig) -> Result<usize> {
    Ok(declare_model(cfg)?.iter().map(|s| s.numel()).sum())
}
