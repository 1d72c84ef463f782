use super::config::ModelConfig;
use crate::backend::Backend;
use crate::blocks::{
    declare_pfm, declare_transformer_block, pfm_fuse, transformer_block, AttentionKind,
};
use crate::error::{shape_err, Result};
use crate::params::{conv, Decls, ParamSpec, Scope};
use crate::tensor::ConvSpec;

pub(crate) fn embed_spec(c0: usize) -> ConvSpec {
    ConvSpec::same(3, 9, 3 * c0).with_groups(3)
}

fn down_spec(cin: usize, cout: usize) -> ConvSpec {
    ConvSpec::same(3, cin, cout).with_stride(2)
}

fn up_spec(cin: usize, cout: usize) -> ConvSpec {
    ConvSpec::same(3, cin, cout)
}

fn skip_spec(c: usize) -> ConvSpec {
    ConvSpec::pointwise(2 * c, c)
}

pub(crate) fn head_spec(c0: usize) -> ConvSpec {
    ConvSpec::same(3, c0, 3)
}

/// Parameter specs of the whole network, in a fixed declaration order.
pub fn declare_model(cfg: &ModelConfig) -> Result<Vec<ParamSpec>> {
    cfg.validate()?;
    let ch = &cfg.channels;
    let n = cfg.levels();
    let mut d = Decls::new();
    d.conv("embed", &embed_spec(ch[0]));
    d.scope("pfm", |d| declare_pfm(d, ch[0]));
    for l in 0..n {
        d.scope(&format!("enc{l}"), |d| {
            for i in 0..cfg.blocks[l] {
                d.scope(&format!("b{i}"), |d| {
                    declare_transformer_block(
                        d,
                        AttentionKind::Window,
                        ch[l],
                        cfg.heads[l],
                        cfg.window,
                        cfg.gamma,
                    )
                });
            }
        });
        if l + 1 < n {
            d.conv(&format!("down{l}"), &down_spec(ch[l], ch[l + 1]));
        }
    }
    for l in (0..n).rev() {
        d.scope(&format!("dec{l}"), |d| {
            for i in 0..cfg.blocks[l] {
                d.scope(&format!("b{i}"), |d| {
                    declare_transformer_block(
                        d,
                        AttentionKind::Wavelet,
                        ch[l],
                        cfg.heads[l],
                        cfg.window,
                        cfg.gamma,
                    )
                });
            }
        });
        d.conv(&format!("skip{l}"), &skip_spec(ch[l]));
        if l > 0 {
            d.conv(&format!("up{l}"), &up_spec(ch[l], ch[l - 1]));
        }
    }
    d.zero_conv("head", &head_spec(ch[0]));
    Ok(d.into_specs())
}

/// The residual map `R` for frames already padded to [`ModelConfig::size_multiple`].
fn residual_unpadded<B: Backend>(
    b: &B,
    p: &Scope<B::V>,
    cfg: &ModelConfig,
    frames: [&B::V; 3],
) -> Result<B::V> {
    let ch = &cfg.channels;
    let n = cfg.levels();
    let stack = b.concat_channels(&frames)?;
    let emb = conv(b, p, "embed", &embed_spec(ch[0]), &stack)?;
    let xs: Vec<B::V> = (0..3)
        .map(|t| b.slice_channels(&emb, t * ch[0], ch[0]))
        .collect::<Result<_>>()?;
    let mut x = pfm_fuse(b, &p.at("pfm"), &xs[0], &xs[1], &xs[2])?;

    let mut skips = Vec::with_capacity(n);
    for l in 0..n {
        skips.push(x.clone());
        let stage = p.at(&format!("enc{l}"));
        for i in 0..cfg.blocks[l] {
            x = transformer_block(
                b,
                &stage.at(&format!("b{i}")),
                &x,
                AttentionKind::Window,
                cfg.heads[l],
                cfg.window,
                cfg.gamma,
            )?;
        }
        if l + 1 < n {
            x = conv(b, p, &format!("down{l}"), &down_spec(ch[l], ch[l + 1]), &x)?;
        }
    }
    for l in (0..n).rev() {
        let stage = p.at(&format!("dec{l}"));
        for i in 0..cfg.blocks[l] {
            x = transformer_block(
                b,
                &stage.at(&format!("b{i}")),
                &x,
                AttentionKind::Wavelet,
                cfg.heads[l],
                cfg.window,
                cfg.gamma,
            )?;
        }
        let cat = b.concat_channels(&[&x, &skips[l]])?;
        x = conv(b, p, &format!("skip{l}"), &skip_spec(ch[l]), &cat)?;
        if l > 0 {
            x = conv(
                b,
                p,
                &format!("up{l}"),
                &up_spec(ch[l], ch[l - 1]),
                &b.upsample_nearest(&x)?,
            )?;
        }
    }
    conv(b, p, "head", &head_spec(ch[0]), &x)
}

fn check_frames<B: Backend>(b: &B, frames: [&B::V; 3]) -> Result<(usize, usize)> {
    let s = b.shape(frames[0]);
    if s.len() != 3 || s[2] != 3 {
        return shape_err(format!("frames must be H×W×3, got {s:?}"));
    }
    for f in &frames[1..] {
        if b.shape(f) != s {
            return shape_err(format!(
                "burst frames differ in shape: {s:?} vs {:?}",
                b.shape(f)
            ));
        }
    }
    Ok((s[0], s[1]))
}

/// The predicted residual `R` at the input resolution. Inputs whose size is not a
/// multiple of [`ModelConfig::size_multiple`] are reflect-padded at the bottom
/// and right, and the result is cropped back.
pub fn residual<B: Backend>(
    b: &B,
    p: &Scope<B::V>,
    cfg: &ModelConfig,
    frames: [&B::V; 3],
) -> Result<B::V> {
    cfg.validate()?;
    let (h, w) = check_frames(b, frames)?;
    let k = cfg.size_multiple();
    let (ph, pw) = (h.div_ceil(k) * k, w.div_ceil(k) * k);
    if (ph, pw) == (h, w) {
        return residual_unpadded(b, p, cfg, frames);
    }
    let padded: Vec<B::V> = frames
        .iter()
        .map(|f| b.reflect_pad(f, ph, pw))
        .collect::<Result<_>>()?;
    let r = residual_unpadded(b, p, cfg, [&padded[0], &padded[1], &padded[2]])?;
    b.crop(&r, h, w)
}

/// Restored base frame `Î₁ = I₁ + R`, unclamped.
pub fn forward<B: Backend>(
    b: &B,
    p: &Scope<B::V>,
    cfg: &ModelConfig,
    frames: [&B::V; 3],
) -> Result<B::V> {
    let r = residual(b, p, cfg, frames)?;
    b.add(frames[1], &r)
}
