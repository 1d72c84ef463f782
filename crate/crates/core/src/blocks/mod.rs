//! Network building blocks: phase-correlation fusion, the autocorrelation
//! feed-forward network, plain and wavelet-directional window attention, the
//! pre-norm transformer block, and a multiply-accumulate auditor for the
//! attention variants.

mod affn;
mod attention;
mod flops;
mod pfm;
mod transformer;

pub use affn::{affn_forward, affn_specs, declare_affn, hidden_width};
pub use attention::{
    declare_wdam, declare_window_attention, high_spec, modulation_specs, wdam_attention,
    window_attention, window_attention_core,
};
pub use flops::{flops_report, AttentionFlops, FlopReport};
pub use pfm::{declare_pfm, fusion_spec, gate_spec, pfm_fuse, pfm_similarity_maps};
pub use transformer::{declare_transformer_block, transformer_block, AttentionKind};
