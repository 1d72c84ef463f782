//! Data-movement primitives: windowing, head splitting, batched matmul,
//! channel concat/slice, resampling and padding.

use super::{conv2d, ConvSpec, Tensor};
use crate::error::{shape_err, Result};

/// Splits an `H × W × C` map into non-overlapping `m × m` windows, giving
/// `[nWin, m², C]`. Windows are ordered row-major over the window grid and pixels
/// row-major inside each window.
pub fn window_partition(x: &Tensor, m: usize) -> Result<Tensor> {
    let (h, w, c) = x.dims3()?;
    if m == 0 || h % m != 0 || w % m != 0 {
        return shape_err(format!(
            "window size {m} does not divide {h}×{w}; pad the input to a multiple of {m}"
        ));
    }
    let (gh, gw) = (h / m, w / m);
    let mut out = Vec::with_capacity(x.len());
    let xd = x.data();
    for wy in 0..gh {
        for wx in 0..gw {
            for dy in 0..m {
                let row = (wy * m + dy) * w + wx * m;
                out.extend_from_slice(&xd[row * c..(row + m) * c]);
            }
        }
    }
    Tensor::new(vec![gh * gw, m * m, c], out)
}

/// Inverse of [`window_partition`].
pub fn window_merge(windows: &Tensor, h: usize, w: usize) -> Result<Tensor> {
    let (n_win, mm, c) = windows.dims3()?;
    let m = (mm as f64).sqrt().round() as usize;
    if m * m != mm || m == 0 || !h.is_multiple_of(m) || !w.is_multiple_of(m) || n_win * mm != h * w
    {
        return shape_err(format!(
            "cannot merge {n_win} windows of {mm} pixels into {h}×{w}"
        ));
    }
    let gw = w / m;
    let mut out = vec![0.0; h * w * c];
    let wd = windows.data();
    for (idx, win) in wd.chunks_exact(mm * c).enumerate() {
        let (wy, wx) = (idx / gw, idx % gw);
        for dy in 0..m {
            let row = (wy * m + dy) * w + wx * m;
            out[row * c..(row + m) * c].copy_from_slice(&win[dy * m * c..(dy + 1) * m * c]);
        }
    }
    Tensor::new(vec![h, w, c], out)
}

/// `[B, N, C] → [B·heads, N, C/heads]`, head-major inside each batch entry.
pub fn split_heads(x: &Tensor, heads: usize) -> Result<Tensor> {
    let (b, n, c) = x.dims3()?;
    if heads == 0 || c % heads != 0 {
        return shape_err(format!("{c} channels not divisible by {heads} heads"));
    }
    let d = c / heads;
    let xd = x.data();
    let mut out = Vec::with_capacity(x.len());
    for bi in 0..b {
        for hd in 0..heads {
            for ni in 0..n {
                let off = (bi * n + ni) * c + hd * d;
                out.extend_from_slice(&xd[off..off + d]);
            }
        }
    }
    Tensor::new(vec![b * heads, n, d], out)
}

/// Inverse of [`split_heads`].
pub fn merge_heads(x: &Tensor, heads: usize) -> Result<Tensor> {
    let (bh, n, d) = x.dims3()?;
    if heads == 0 || bh % heads != 0 {
        return shape_err(format!("{bh} head-batches not divisible by {heads} heads"));
    }
    let (b, c) = (bh / heads, d * heads);
    let mut out = vec![0.0; b * n * c];
    for (idx, blk) in x.data().chunks_exact(n * d).enumerate() {
        let (bi, hd) = (idx / heads, idx % heads);
        for ni in 0..n {
            let off = (bi * n + ni) * c + hd * d;
            out[off..off + d].copy_from_slice(&blk[ni * d..(ni + 1) * d]);
        }
    }
    Tensor::new(vec![b, n, c], out)
}

/// Batched `a · b` for `a: [B, n, k]`, `b: [B, k, m]`.
pub fn bmm(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (ba, n, k) = a.dims3()?;
    let (bb, kb, m) = b.dims3()?;
    if ba != bb || k != kb {
        return shape_err(format!("bmm {:?} × {:?}", a.shape(), b.shape()));
    }
    let mut out = vec![0.0; ba * n * m];
    for bi in 0..ba {
        let ab = &a.data()[bi * n * k..(bi + 1) * n * k];
        let bbk = &b.data()[bi * k * m..(bi + 1) * k * m];
        let ob = &mut out[bi * n * m..(bi + 1) * n * m];
        for i in 0..n {
            let orow = &mut ob[i * m..(i + 1) * m];
            for p in 0..k {
                let av = ab[i * k + p];
                for (o, bv) in orow.iter_mut().zip(&bbk[p * m..(p + 1) * m]) {
                    *o += av * bv;
                }
            }
        }
    }
    Tensor::new(vec![ba, n, m], out)
}

/// Batched `a · bᵀ` for `a: [B, n, k]`, `b: [B, m, k]`.
pub fn bmm_nt(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (ba, n, k) = a.dims3()?;
    let (bb, m, kb) = b.dims3()?;
    if ba != bb || k != kb {
        return shape_err(format!("bmm_nt {:?} × {:?}ᵀ", a.shape(), b.shape()));
    }
    let mut out = Vec::with_capacity(ba * n * m);
    for bi in 0..ba {
        let ab = &a.data()[bi * n * k..(bi + 1) * n * k];
        let bbk = &b.data()[bi * m * k..(bi + 1) * m * k];
        for arow in ab.chunks_exact(k) {
            for brow in bbk.chunks_exact(k) {
                out.push(arow.iter().zip(brow).map(|(x, y)| x * y).sum());
            }
        }
    }
    Tensor::new(vec![ba, n, m], out)
}

/// Batched `aᵀ · b` for `a: [B, k, n]`, `b: [B, k, m]`.
pub fn bmm_tn(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (ba, k, n) = a.dims3()?;
    let (bb, kb, m) = b.dims3()?;
    if ba != bb || k != kb {
        return shape_err(format!("bmm_tn {:?}ᵀ × {:?}", a.shape(), b.shape()));
    }
    let mut out = vec![0.0; ba * n * m];
    for bi in 0..ba {
        let ab = &a.data()[bi * k * n..(bi + 1) * k * n];
        let bbk = &b.data()[bi * k * m..(bi + 1) * k * m];
        let ob = &mut out[bi * n * m..(bi + 1) * n * m];
        for p in 0..k {
            let brow = &bbk[p * m..(p + 1) * m];
            for i in 0..n {
                let av = ab[p * n + i];
                for (o, bv) in ob[i * m..(i + 1) * m].iter_mut().zip(brow) {
                    *o += av * bv;
                }
            }
        }
    }
    Tensor::new(vec![ba, n, m], out)
}

#[inline]
fn rel_index(i: usize, j: usize, m: usize) -> usize {
    let (yi, xi) = (i / m, i % m);
    let (yj, xj) = (j / m, j % m);
    let dy = yi + m - 1 - yj;
    let dx = xi + m - 1 - xj;
    dy * (2 * m - 1) + dx
}

fn check_rel_bias(scores: &Tensor, table: &Tensor, m: usize, heads: usize) -> Result<usize> {
    let (bh, n, n2) = scores.dims3()?;
    let entries = (2 * m - 1) * (2 * m - 1);
    if n != m * m || n2 != n || heads == 0 || bh % heads != 0 || table.shape() != [entries, heads] {
        return shape_err(format!(
            "relative bias: scores {:?}, table {:?}, window {m}, heads {heads}",
            scores.shape(),
            table.shape()
        ));
    }
    Ok(n)
}

/// Adds the relative positional bias `table[(dy, dx), head]` to every window's
/// `[m², m²]` score matrix.
pub fn add_rel_bias(scores: &Tensor, table: &Tensor, m: usize, heads: usize) -> Result<Tensor> {
    let n = check_rel_bias(scores, table, m, heads)?;
    let mut out = scores.clone();
    let td = table.data();
    for (idx, blk) in out.data_mut().chunks_exact_mut(n * n).enumerate() {
        let hd = idx % heads;
        for i in 0..n {
            for j in 0..n {
                blk[i * n + j] += td[rel_index(i, j, m) * heads + hd];
            }
        }
    }
    Ok(out)
}

/// Gradient of [`add_rel_bias`] with respect to the table.
pub fn rel_bias_backward(grad: &Tensor, m: usize, heads: usize) -> Result<Tensor> {
    let entries = (2 * m - 1) * (2 * m - 1);
    let table = Tensor::zeros(&[entries, heads]);
    let n = check_rel_bias(grad, &table, m, heads)?;
    let mut gt = vec![0.0; entries * heads];
    for (idx, blk) in grad.data().chunks_exact(n * n).enumerate() {
        let hd = idx % heads;
        for i in 0..n {
            for j in 0..n {
                gt[rel_index(i, j, m) * heads + hd] += blk[i * n + j];
            }
        }
    }
    Tensor::new(vec![entries, heads], gt)
}

pub fn concat_channels(parts: &[&Tensor]) -> Result<Tensor> {
    let Some(first) = parts.first() else {
        return shape_err("concat of zero tensors");
    };
    let (h, w, _) = first.dims3()?;
    let mut widths = Vec::with_capacity(parts.len());
    for p in parts {
        let (ph, pw, pc) = p.dims3()?;
        if (ph, pw) != (h, w) {
            return shape_err(format!(
                "channel concat: spatial sizes {h}×{w} and {ph}×{pw} differ"
            ));
        }
        widths.push(pc);
    }
    let c: usize = widths.iter().sum();
    let mut out = Vec::with_capacity(h * w * c);
    for px in 0..h * w {
        for (p, &pc) in parts.iter().zip(&widths) {
            out.extend_from_slice(&p.data()[px * pc..(px + 1) * pc]);
        }
    }
    Tensor::new(vec![h, w, c], out)
}

/// Channels `[start, start + len)` of an `H × W × C` map.
pub fn slice_channels(x: &Tensor, start: usize, len: usize) -> Result<Tensor> {
    let (h, w, c) = x.dims3()?;
    if len == 0 || start + len > c {
        return shape_err(format!("channel slice {start}+{len} out of {c}"));
    }
    let mut out = Vec::with_capacity(h * w * len);
    for px in x.data().chunks_exact(c) {
        out.extend_from_slice(&px[start..start + len]);
    }
    Tensor::new(vec![h, w, len], out)
}

/// 2× nearest-neighbour upsampling.
pub fn upsample_nearest(x: &Tensor) -> Result<Tensor> {
    let (h, w, c) = x.dims3()?;
    Ok(Tensor::from_fn_hwc(2 * h, 2 * w, c, |i, j, k| {
        x.at3(i / 2, j / 2, k)
    }))
}

/// Adjoint of [`upsample_nearest`]: sums each 2×2 block.
pub fn upsample_nearest_backward(grad: &Tensor) -> Result<Tensor> {
    let (h2, w2, c) = grad.dims3()?;
    if h2 % 2 != 0 || w2 % 2 != 0 {
        return shape_err("upsample gradient must have even size");
    }
    Ok(Tensor::from_fn_hwc(h2 / 2, w2 / 2, c, |i, j, k| {
        grad.at3(2 * i, 2 * j, k)
            + grad.at3(2 * i, 2 * j + 1, k)
            + grad.at3(2 * i + 1, 2 * j, k)
            + grad.at3(2 * i + 1, 2 * j + 1, k)
    }))
}

/// Strided 3×3 convolution halving the spatial size.
pub fn downsample(x: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (h, w, c) = x.dims3()?;
    if h % 2 != 0 || w % 2 != 0 {
        return shape_err(format!("downsample needs even size, got {h}×{w}"));
    }
    let spec = ConvSpec::same(3, c, weight.shape()[0]).with_stride(2);
    conv2d(x, &spec, weight, Some(bias))
}

/// Nearest-neighbour 2× upsampling followed by a 3×3 convolution.
pub fn upsample(x: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let c = x.dims3()?.2;
    let spec = ConvSpec::same(3, c, weight.shape()[0]);
    conv2d(&upsample_nearest(x)?, &spec, weight, Some(bias))
}

/// Mirror index for reflect padding without edge repetition (`…c b | a b c | b a…`).
#[inline]
pub fn reflect_index(i: usize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let r = i % period;
    if r < n {
        r
    } else {
        period - r
    }
}

/// Reflect-pads the bottom and right edges up to `h × w`.
pub fn reflect_pad(x: &Tensor, h: usize, w: usize) -> Result<Tensor> {
    let (xh, xw, c) = x.dims3()?;
    if h < xh || w < xw {
        return shape_err(format!("cannot pad {xh}×{xw} down to {h}×{w}"));
    }
    Ok(Tensor::from_fn_hwc(h, w, c, |i, j, k| {
        x.at3(reflect_index(i, xh), reflect_index(j, xw), k)
    }))
}

/// Keeps the top-left `h × w` region.
pub fn crop(x: &Tensor, h: usize, w: usize) -> Result<Tensor> {
    let (xh, xw, c) = x.dims3()?;
    if h > xh || w > xw || h == 0 || w == 0 {
        return shape_err(format!("cannot crop {xh}×{xw} to {h}×{w}"));
    }
    Ok(Tensor::from_fn_hwc(h, w, c, |i, j, k| x.at3(i, j, k)))
}
