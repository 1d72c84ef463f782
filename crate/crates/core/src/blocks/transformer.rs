use super::affn::{affn_forward, declare_affn};
use super::attention::{declare_wdam, declare_window_attention, wdam_attention, window_attention};
use crate::backend::Backend;
use crate::error::Result;
use crate::params::{Decls, Init, Scope};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AttentionKind {
    Window,
    Wavelet,
}

pub fn declare_transformer_block(
    d: &mut Decls,
    kind: AttentionKind,
    c: usize,
    heads: usize,
    m: usize,
    gamma: f64,
) {
    let norm = |d: &mut Decls, name: &str| {
        d.scope(name, |d| {
            d.param("weight", vec![c], Init::Ones);
            d.param("bias", vec![c], Init::Zeros);
        })
    };
    norm(d, "norm1");
    d.scope("attn", |d| match kind {
        AttentionKind::Window => declare_window_attention(d, c, heads, m),
        AttentionKind::Wavelet => declare_wdam(d, c, heads, m),
    });
    norm(d, "norm2");
    d.scope("ffn", |d| declare_affn(d, c, gamma));
}

/// Pre-norm residual block: `y = x + attn(LN(x))`, `out = y + ffn(LN(y))`.
pub fn transformer_block<B: Backend>(
    b: &B,
    p: &Scope<B::V>,
    x: &B::V,
    kind: AttentionKind,
    heads: usize,
    m: usize,
    gamma: f64,
) -> Result<B::V> {
    let ln = |name: &str, v: &B::V| -> Result<B::V> {
        let s = p.at(name);
        b.layer_norm(v, s.get("weight")?, s.get("bias")?)
    };
    let a = p.at("attn");
    let n1 = ln("norm1", x)?;
    let attn = match kind {
        AttentionKind::Window => window_attention(b, &a, &n1, heads, m)?,
        AttentionKind::Wavelet => wdam_attention(b, &a, &n1, heads, m)?,
    };
    let y = b.add(x, &attn)?;
    let f = affn_forward(b, &p.at("ffn"), &ln("norm2", &y)?, gamma)?;
    b.add(&y, &f)
}
