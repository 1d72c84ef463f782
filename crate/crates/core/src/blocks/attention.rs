use crate::backend::Backend;
use crate::error::{shape_err, Result};
use crate::params::{conv, Decls, Init, Scope};
use crate::tensor::ConvSpec;

fn check_heads(c: usize, heads: usize) -> Result<()> {
    if heads == 0 || !c.is_multiple_of(heads) {
        return shape_err(format!("{c} channels not divisible by {heads} heads"));
    }
    Ok(())
}

fn table_entries(m: usize) -> usize {
    (2 * m - 1) * (2 * m - 1)
}

fn declare_qkv(d: &mut Decls, c: usize, heads: usize, m: usize) {
    for n in ["q", "k", "v"] {
        d.conv(n, &ConvSpec::pointwise(c, c));
    }
    d.param("rel_bias", vec![table_entries(m), heads], Init::Zeros);
}

pub fn declare_window_attention(d: &mut Decls, c: usize, heads: usize, m: usize) {
    declare_qkv(d, c, heads, m);
    d.conv("proj", &ConvSpec::pointwise(c, c));
}

/// Depthwise kernels over `LH` (no bias) and `HL` that form the directional map.
pub fn modulation_specs(c: usize) -> (ConvSpec, ConvSpec) {
    (
        ConvSpec::depthwise(3, c).without_bias(),
        ConvSpec::depthwise(3, c),
    )
}

/// 3×3 conv applied jointly to the three high bands.
pub fn high_spec(c: usize) -> ConvSpec {
    ConvSpec::same(3, 3 * c, 3 * c)
}

/// The directional map is a grouped conv over `[LH, HL]`: output channel `k`
/// sees channel `k` of both bands, written as two depthwise kernels.
pub fn declare_wdam(d: &mut Decls, c: usize, heads: usize, m: usize) {
    declare_qkv(d, c, heads, m);
    let (lh, hl) = modulation_specs(c);
    d.conv("mod_lh", &lh);
    d.conv("mod_hl", &hl);
    d.conv("high", &high_spec(c));
    d.conv("proj", &ConvSpec::pointwise(c, c));
}

/// `Softmax(QKᵀ/√d + B)·V` inside non-overlapping `m × m` windows, per head.
/// `q`, `k`, `v` are `H × W × C` maps; the result has the same layout.
pub fn window_attention_core<B: Backend>(
    b: &B,
    q: &B::V,
    k: &B::V,
    v: &B::V,
    table: &B::V,
    m: usize,
    heads: usize,
) -> Result<B::V> {
    let shape = b.shape(q);
    let (h, w, c) = (shape[0], shape[1], shape[2]);
    check_heads(c, heads)?;
    let d = c / heads;
    let split = |x: &B::V| -> Result<B::V> { b.split_heads(&b.window_partition(x, m)?, heads) };
    let (qh, kh, vh) = (split(q)?, split(k)?, split(v)?);
    let scores = b.scale(&b.bmm_nt(&qh, &kh)?, 1.0 / (d as f64).sqrt())?;
    let attn = b.softmax_rows(&b.add_rel_bias(&scores, table, m, heads)?)?;
    let out = b.merge_heads(&b.bmm(&attn, &vh)?, heads)?;
    b.window_merge(&out, h, w)
}

fn project_qkv<B: Backend>(b: &B, p: &Scope<B::V>, x: &B::V, c: usize) -> Result<[B::V; 3]> {
    let s = ConvSpec::pointwise(c, c);
    Ok([
        conv(b, p, "q", &s, x)?,
        conv(b, p, "k", &s, x)?,
        conv(b, p, "v", &s, x)?,
    ])
}

/// Plain window multi-head self-attention with an output projection.
pub fn window_attention<B: Backend>(
    b: &B,
    p: &Scope<B::V>,
    x: &B::V,
    heads: usize,
    m: usize,
) -> Result<B::V> {
    let c = b.shape(x)[2];
    let [q, k, v] = project_qkv(b, p, x, c)?;
    let y = window_attention_core(b, &q, &k, &v, p.get("rel_bias")?, m, heads)?;
    conv(b, p, "proj", &ConvSpec::pointwise(c, c), &y)
}

/// Wavelet directional attention.
///
/// Attention runs on the `LL` band at half resolution, with values reweighted by
/// the directional map `σ(conv(LH, HL))`. The high bands are refined by a 3×3 conv
/// and everything is recomposed by the inverse transform before the output
/// projection.
pub fn wdam_attention<B: Backend>(
    b: &B,
    p: &Scope<B::V>,
    x: &B::V,
    heads: usize,
    m: usize,
) -> Result<B::V> {
    let shape = b.shape(x);
    let (h, w, c) = (shape[0], shape[1], shape[2]);
    if h % 2 != 0 || w % 2 != 0 || m == 0 || (h / 2) % m != 0 || (w / 2) % m != 0 {
        return shape_err(format!(
            "wavelet attention needs H/2 and W/2 divisible by window {m}, got {h}×{w}"
        ));
    }
    let [ll, lh, hl, hh] = b.haar_dwt(x)?;
    let (slh, shl) = modulation_specs(c);
    let logits = b.add(
        &conv(b, p, "mod_lh", &slh, &lh)?,
        &conv(b, p, "mod_hl", &shl, &hl)?,
    )?;
    let modulation = b.sigmoid(&logits)?;
    let [q, k, v] = project_qkv(b, p, &ll, c)?;
    let v = b.mul(&modulation, &v)?;
    let ll2 = window_attention_core(b, &q, &k, &v, p.get("rel_bias")?, m, heads)?;
    let high = conv(
        b,
        p,
        "high",
        &high_spec(c),
        &b.concat_channels(&[&lh, &hl, &hh])?,
    )?;
    let lh2 = b.slice_channels(&high, 0, c)?;
    let hl2 = b.slice_channels(&high, c, c)?;
    let hh2 = b.slice_channels(&high, 2 * c, c)?;
    let y = b.haar_idwt([&ll2, &lh2, &hl2, &hh2])?;
    conv(b, p, "proj", &ConvSpec::pointwise(c, c), &y)
}
