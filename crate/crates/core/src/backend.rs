//! The primitive operation set shared by eager evaluation and the autodiff tape.
//!
//! Network blocks are written once against [`Backend`]. [`Eager`] evaluates
//! directly on [`Tensor`]s; [`Tape`] evaluates the very same tensor functions and
//! additionally records a backward rule, so traced and untraced forwards agree bit
//! for bit.

use num_complex::Complex64;

use crate::autodiff::{BackwardCtx, Tape, Var};
use crate::error::{shape_err, Result};
use crate::spectral::{self, ComplexTensor};
use crate::tensor::{self as t, ConvSpec, Tensor};
use crate::wavelet::{self, WaveletSubbands};

pub trait Backend {
    type V: Clone;

    fn constant(&self, x: Tensor) -> Self::V;
    fn value(&self, v: &Self::V) -> Tensor;
    fn shape(&self, v: &Self::V) -> Vec<usize>;

    fn conv2d(
        &self,
        x: &Self::V,
        spec: &ConvSpec,
        w: &Self::V,
        b: Option<&Self::V>,
    ) -> Result<Self::V>;
    fn add(&self, a: &Self::V, b: &Self::V) -> Result<Self::V>;
    fn sub(&self, a: &Self::V, b: &Self::V) -> Result<Self::V>;
    fn mul(&self, a: &Self::V, b: &Self::V) -> Result<Self::V>;
    fn scale(&self, a: &Self::V, s: f64) -> Result<Self::V>;
    /// `a · s` for a learnable scalar `s` of shape `[1]`.
    fn mul_scalar(&self, a: &Self::V, s: &Self::V) -> Result<Self::V>;
    fn relu(&self, x: &Self::V) -> Result<Self::V>;
    fn gelu(&self, x: &Self::V) -> Result<Self::V>;
    fn sigmoid(&self, x: &Self::V) -> Result<Self::V>;
    fn softmax_rows(&self, x: &Self::V) -> Result<Self::V>;
    fn layer_norm(&self, x: &Self::V, w: &Self::V, b: &Self::V) -> Result<Self::V>;
    fn abs(&self, x: &Self::V) -> Result<Self::V>;
    /// Mean of all elements, shape `[1]`.
    fn mean(&self, x: &Self::V) -> Result<Self::V>;
    fn sum(&self, x: &Self::V) -> Result<Self::V>;

    /// Forward 2-D FFT of a real map, returned as `(re, im)`.
    fn fft2(&self, x: &Self::V) -> Result<(Self::V, Self::V)>;
    /// Real part of the inverse 2-D FFT of `re + i·im`.
    fn ifft2(&self, re: &Self::V, im: &Self::V) -> Result<Self::V>;
    /// Real part of the inverse 2-D FFT of a real spectrum.
    fn ifft2_real(&self, re: &Self::V) -> Result<Self::V>;
    /// `(1 + cos(Φt − Φr)) / 2` from two spectra given as real/imag parts.
    fn phase_similarity(
        &self,
        re_t: &Self::V,
        im_t: &Self::V,
        re_r: &Self::V,
        im_r: &Self::V,
    ) -> Result<Self::V>;
    /// `W(k) ← (W(k) + W(−k)) / 2` on the frequency grid.
    fn symmetrize_spectrum(&self, w: &Self::V) -> Result<Self::V>;

    fn haar_dwt(&self, x: &Self::V) -> Result<[Self::V; 4]>;
    fn haar_idwt(&self, bands: [&Self::V; 4]) -> Result<Self::V>;

    fn window_partition(&self, x: &Self::V, m: usize) -> Result<Self::V>;
    fn window_merge(&self, x: &Self::V, h: usize, w: usize) -> Result<Self::V>;
    fn split_heads(&self, x: &Self::V, heads: usize) -> Result<Self::V>;
    fn merge_heads(&self, x: &Self::V, heads: usize) -> Result<Self::V>;
    fn bmm(&self, a: &Self::V, b: &Self::V) -> Result<Self::V>;
    fn bmm_nt(&self, a: &Self::V, b: &Self::V) -> Result<Self::V>;
    fn add_rel_bias(
        &self,
        scores: &Self::V,
        table: &Self::V,
        m: usize,
        heads: usize,
    ) -> Result<Self::V>;

    fn concat_channels(&self, parts: &[&Self::V]) -> Result<Self::V>;
    fn slice_channels(&self, x: &Self::V, start: usize, len: usize) -> Result<Self::V>;
    fn upsample_nearest(&self, x: &Self::V) -> Result<Self::V>;
    fn reflect_pad(&self, x: &Self::V, h: usize, w: usize) -> Result<Self::V>;
    fn crop(&self, x: &Self::V, h: usize, w: usize) -> Result<Self::V>;
}

// ---------------------------------------------------------------------------
// Shared forward kernels (used by both backends so results are identical).

fn fft2_parts(x: &Tensor) -> Result<(Tensor, Tensor)> {
    let z = spectral::fft2(x)?;
    Ok((z.re(), z.im()))
}

fn ifft2_parts(re: &Tensor, im: &Tensor) -> Result<Tensor> {
    Ok(spectral::ifft2_real_part(&ComplexTensor::from_parts(
        re, im,
    )?))
}

fn ifft2_real_spectrum(re: &Tensor) -> Result<Tensor> {
    Ok(spectral::ifft2_real_part(&ComplexTensor::from_real(re)?))
}

fn phase_map(re: &Tensor, im: &Tensor) -> Result<Tensor> {
    re.zip_map(im, |a, b| spectral::phase_of(Complex64::new(a, b)))
}

fn phase_similarity_parts(rt: &Tensor, it: &Tensor, rr: &Tensor, ir: &Tensor) -> Result<Tensor> {
    spectral::phase_similarity(&phase_map(rt, it)?, &phase_map(rr, ir)?)
}

pub fn symmetrize_spectrum(w: &Tensor) -> Result<Tensor> {
    let (h, wd, c) = w.dims3()?;
    Ok(Tensor::from_fn_hwc(h, wd, c, |u, v, k| {
        0.5 * (w.at3(u, v, k) + w.at3((h - u) % h, (wd - v) % wd, k))
    }))
}

fn dwt_parts(x: &Tensor) -> Result<[Tensor; 4]> {
    let s = wavelet::haar_dwt(x)?;
    Ok([s.ll, s.lh, s.hl, s.hh])
}

fn idwt_parts(b: [&Tensor; 4]) -> Result<Tensor> {
    wavelet::haar_idwt(&WaveletSubbands {
        ll: b[0].clone(),
        lh: b[1].clone(),
        hl: b[2].clone(),
        hh: b[3].clone(),
    })
}

fn scalar_of(s: &Tensor) -> Result<f64> {
    if s.shape() != [1] {
        return shape_err(format!(
            "expected a scalar of shape [1], got {:?}",
            s.shape()
        ));
    }
    Ok(s.data()[0])
}

// ---------------------------------------------------------------------------

/// Direct evaluation without gradient tracking.
#[derive(Clone, Copy, Debug, Default)]
pub struct Eager;

impl Backend for Eager {
    type V = Tensor;

    fn constant(&self, x: Tensor) -> Tensor {
        x
    }
    fn value(&self, v: &Tensor) -> Tensor {
        v.clone()
    }
    fn shape(&self, v: &Tensor) -> Vec<usize> {
        v.shape().to_vec()
    }
    fn conv2d(
        &self,
        x: &Tensor,
        spec: &ConvSpec,
        w: &Tensor,
        b: Option<&Tensor>,
    ) -> Result<Tensor> {
        t::conv2d(x, spec, w, b)
    }
    fn add(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        a.add(b)
    }
    fn sub(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        a.sub(b)
    }
    fn mul(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        a.mul(b)
    }
    fn scale(&self, a: &Tensor, s: f64) -> Result<Tensor> {
        Ok(a.scale(s))
    }
    fn mul_scalar(&self, a: &Tensor, s: &Tensor) -> Result<Tensor> {
        Ok(a.scale(scalar_of(s)?))
    }
    fn relu(&self, x: &Tensor) -> Result<Tensor> {
        Ok(t::relu(x))
    }
    fn gelu(&self, x: &Tensor) -> Result<Tensor> {
        Ok(t::gelu(x))
    }
    fn sigmoid(&self, x: &Tensor) -> Result<Tensor> {
        Ok(t::sigmoid(x))
    }
    fn softmax_rows(&self, x: &Tensor) -> Result<Tensor> {
        Ok(t::softmax_rows(x))
    }
    fn layer_norm(&self, x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
        t::layer_norm(x, w, b)
    }
    fn abs(&self, x: &Tensor) -> Result<Tensor> {
        Ok(x.map(f64::abs))
    }
    fn mean(&self, x: &Tensor) -> Result<Tensor> {
        Ok(Tensor::scalar(x.mean()))
    }
    fn sum(&self, x: &Tensor) -> Result<Tensor> {
        Ok(Tensor::scalar(x.sum()))
    }
    fn fft2(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        fft2_parts(x)
    }
    fn ifft2(&self, re: &Tensor, im: &Tensor) -> Result<Tensor> {
        ifft2_parts(re, im)
    }
    fn ifft2_real(&self, re: &Tensor) -> Result<Tensor> {
        ifft2_real_spectrum(re)
    }
    fn phase_similarity(
        &self,
        rt: &Tensor,
        it: &Tensor,
        rr: &Tensor,
        ir: &Tensor,
    ) -> Result<Tensor> {
        phase_similarity_parts(rt, it, rr, ir)
    }
    fn symmetrize_spectrum(&self, w: &Tensor) -> Result<Tensor> {
        symmetrize_spectrum(w)
    }
    fn haar_dwt(&self, x: &Tensor) -> Result<[Tensor; 4]> {
        dwt_parts(x)
    }
    fn haar_idwt(&self, b: [&Tensor; 4]) -> Result<Tensor> {
        idwt_parts(b)
    }
    fn window_partition(&self, x: &Tensor, m: usize) -> Result<Tensor> {
        t::window_partition(x, m)
    }
    fn window_merge(&self, x: &Tensor, h: usize, w: usize) -> Result<Tensor> {
        t::window_merge(x, h, w)
    }
    fn split_heads(&self, x: &Tensor, heads: usize) -> Result<Tensor> {
        t::split_heads(x, heads)
    }
    fn merge_heads(&self, x: &Tensor, heads: usize) -> Result<Tensor> {
        t::merge_heads(x, heads)
    }
    fn bmm(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        t::bmm(a, b)
    }
    fn bmm_nt(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        t::bmm_nt(a, b)
    }
    fn add_rel_bias(&self, s: &Tensor, table: &Tensor, m: usize, heads: usize) -> Result<Tensor> {
        t::add_rel_bias(s, table, m, heads)
    }
    fn concat_channels(&self, parts: &[&Tensor]) -> Result<Tensor> {
        t::concat_channels(parts)
    }
    fn slice_channels(&self, x: &Tensor, start: usize, len: usize) -> Result<Tensor> {
        t::slice_channels(x, start, len)
    }
    fn upsample_nearest(&self, x: &Tensor) -> Result<Tensor> {
        t::upsample_nearest(x)
    }
    fn reflect_pad(&self, x: &Tensor, h: usize, w: usize) -> Result<Tensor> {
        t::reflect_pad(x, h, w)
    }
    fn crop(&self, x: &Tensor, h: usize, w: usize) -> Result<Tensor> {
        t::crop(x, h, w)
    }
}

// ---------------------------------------------------------------------------
// Backward helpers.

fn when(need: bool, f: impl FnOnce() -> Result<Tensor>) -> Result<Option<Tensor>> {
    if need {
        f().map(Some)
    } else {
        Ok(None)
    }
}

fn spatial_numel(x: &Tensor) -> Result<f64> {
    let (h, w, _) = x.dims3()?;
    Ok((h * w) as f64)
}

/// Places `g` into channels `[start, start + len)` of a zero map with `c` channels.
fn embed_channels(g: &Tensor, start: usize, c: usize) -> Result<Tensor> {
    let (h, w, len) = g.dims3()?;
    let mut out = vec![0.0; h * w * c];
    for (dst, src) in out.chunks_exact_mut(c).zip(g.data().chunks_exact(len)) {
        dst[start..start + len].copy_from_slice(src);
    }
    Tensor::new(vec![h, w, c], out)
}

/// d phase / d (re, im) = (−im, re) / |z|², zero at the origin.
fn phase_partials(re: f64, im: f64) -> (f64, f64) {
    let r2 = re * re + im * im;
    if r2 == 0.0 {
        (0.0, 0.0)
    } else {
        (-im / r2, re / r2)
    }
}

impl Backend for Tape {
    type V = Var;

    fn constant(&self, x: Tensor) -> Var {
        Tape::constant(self, x)
    }

    fn value(&self, v: &Var) -> Tensor {
        (*Tape::value(self, *v)).clone()
    }

    fn shape(&self, v: &Var) -> Vec<usize> {
        Tape::value(self, *v).shape().to_vec()
    }

    fn conv2d(&self, x: &Var, spec: &ConvSpec, w: &Var, b: Option<&Var>) -> Result<Var> {
        let spec = *spec;
        let mut inputs = vec![*x, *w];
        inputs.extend(b.copied());
        self.record1(
            "conv2d",
            &inputs,
            |v| t::conv2d(v[0], &spec, v[1], v.get(2).copied()),
            Box::new(move |c: &BackwardCtx| {
                let g = c.grad(0);
                let (h, w, _) = c.inputs[0].dims3()?;
                let gx = when(c.needs[0], || {
                    t::conv2d_backward_input(&g, &spec, c.inputs[1], h, w)
                })?;
                let (gw, gb) = if c.needs[1..].iter().any(|&n| n) {
                    let (gw, gb) = t::conv2d_backward_weight(c.inputs[0], &g, &spec)?;
                    (Some(gw), gb)
                } else {
                    (None, None)
                };
                let mut out = vec![gx, gw];
                if c.inputs.len() == 3 {
                    out.push(gb);
                }
                Ok(out)
            }),
        )
    }

    fn add(&self, a: &Var, b: &Var) -> Result<Var> {
        self.record1(
            "add",
            &[*a, *b],
            |v| v[0].add(v[1]),
            Box::new(|c: &BackwardCtx| {
                let g = c.grad(0).into_owned();
                Ok(vec![Some(g.clone()), Some(g)])
            }),
        )
    }

    fn sub(&self, a: &Var, b: &Var) -> Result<Var> {
        self.record1(
            "sub",
            &[*a, *b],
            |v| v[0].sub(v[1]),
            Box::new(|c: &BackwardCtx| {
                let g = c.grad(0);
                Ok(vec![Some(g.clone().into_owned()), Some(g.scale(-1.0))])
            }),
        )
    }

    fn mul(&self, a: &Var, b: &Var) -> Result<Var> {
        self.record1(
            "mul",
            &[*a, *b],
            |v| v[0].mul(v[1]),
            Box::new(|c: &BackwardCtx| {
                let g = c.grad(0);
                Ok(vec![
                    when(c.needs[0], || g.mul(c.inputs[1]))?,
                    when(c.needs[1], || g.mul(c.inputs[0]))?,
                ])
            }),
        )
    }

    fn scale(&self, a: &Var, s: f64) -> Result<Var> {
        self.record1(
            "scale",
            &[*a],
            |v| Ok(v[0].scale(s)),
            Box::new(move |c: &BackwardCtx| Ok(vec![Some(c.grad(0).scale(s))])),
        )
    }

    fn mul_scalar(&self, a: &Var, s: &Var) -> Result<Var> {
        self.record1(
            "mul_scalar",
            &[*a, *s],
            |v| Ok(v[0].scale(scalar_of(v[1])?)),
            Box::new(|c: &BackwardCtx| {
                let g = c.grad(0);
                let s = scalar_of(c.inputs[1])?;
                Ok(vec![
                    when(c.needs[0], || Ok(g.scale(s)))?,
                    when(c.needs[1], || Ok(Tensor::scalar(g.dot(c.inputs[0])?)))?,
                ])
            }),
        )
    }

    fn relu(&self, x: &Var) -> Result<Var> {
        self.record1(
            "relu",
            &[*x],
            |v| Ok(t::relu(v[0])),
            Box::new(|c: &BackwardCtx| {
                Ok(vec![Some(c.grad(0).zip_map(c.inputs[0], |g, x| {
                    if x > 0.0 {
                        g
                    } else {
                        0.0
                    }
                })?)])
            }),
        )
    }

    fn gelu(&self, x: &Var) -> Result<Var> {
        self.record1(
            "gelu",
            &[*x],
            |v| Ok(t::gelu(v[0])),
            Box::new(|c: &BackwardCtx| {
                Ok(vec![Some(c.grad(0).zip_map(c.inputs[0], |g, x| {
                    g * t::gelu_grad_scalar(x)
                })?)])
            }),
        )
    }

    fn sigmoid(&self, x: &Var) -> Result<Var> {
        self.record1(
            "sigmoid",
            &[*x],
            |v| Ok(t::sigmoid(v[0])),
            Box::new(|c: &BackwardCtx| {
                Ok(vec![Some(
                    c.grad(0).zip_map(&c.outputs[0], |g, y| g * y * (1.0 - y))?,
                )])
            }),
        )
    }

    fn softmax_rows(&self, x: &Var) -> Result<Var> {
        self.record1(
            "softmax_rows",
            &[*x],
            |v| Ok(t::softmax_rows(v[0])),
            Box::new(|c: &BackwardCtx| {
                Ok(vec![Some(t::softmax_rows_backward(
                    &c.outputs[0],
                    &c.grad(0),
                )?)])
            }),
        )
    }

    fn layer_norm(&self, x: &Var, w: &Var, b: &Var) -> Result<Var> {
        self.record1(
            "layer_norm",
            &[*x, *w, *b],
            |v| t::layer_norm(v[0], v[1], v[2]),
            Box::new(|c: &BackwardCtx| {
                let (gx, gw, gb) = t::layer_norm_backward(c.inputs[0], c.inputs[1], &c.grad(0))?;
                Ok(vec![Some(gx), Some(gw), Some(gb)])
            }),
        )
    }

    fn abs(&self, x: &Var) -> Result<Var> {
        self.record1(
            "abs",
            &[*x],
            |v| Ok(v[0].map(f64::abs)),
            Box::new(|c: &BackwardCtx| {
                Ok(vec![Some(c.grad(0).zip_map(c.inputs[0], |g, x| {
                    if x > 0.0 {
                        g
                    } else if x < 0.0 {
                        -g
                    } else {
                        0.0
                    }
                })?)])
            }),
        )
    }

    fn mean(&self, x: &Var) -> Result<Var> {
        self.record1(
            "mean",
            &[*x],
            |v| Ok(Tensor::scalar(v[0].mean())),
            Box::new(|c: &BackwardCtx| {
                let n = c.inputs[0].len() as f64;
                let g = c.grad(0).data()[0] / n;
                Ok(vec![Some(Tensor::full(c.inputs[0].shape(), g))])
            }),
        )
    }

    fn sum(&self, x: &Var) -> Result<Var> {
        self.record1(
            "sum",
            &[*x],
            |v| Ok(Tensor::scalar(v[0].sum())),
            Box::new(|c: &BackwardCtx| {
                Ok(vec![Some(Tensor::full(
                    c.inputs[0].shape(),
                    c.grad(0).data()[0],
                ))])
            }),
        )
    }

    fn fft2(&self, x: &Var) -> Result<(Var, Var)> {
        let out = self.record(
            "fft2",
            &[*x],
            |v| {
                let (re, im) = fft2_parts(v[0])?;
                Ok(vec![re, im])
            },
            Box::new(|c: &BackwardCtx| {
                // adjoint of the real-input DFT: Re(conj(F)·g) = HW·Re(ifft2(g))
                let g = ComplexTensor::from_parts(&c.grad(0), &c.grad(1))?;
                let n = spatial_numel(c.inputs[0])?;
                Ok(vec![Some(spectral::ifft2_real_part(&g).scale(n))])
            }),
        )?;
        Ok((out[0], out[1]))
    }

    fn ifft2(&self, re: &Var, im: &Var) -> Result<Var> {
        self.record1(
            "ifft2",
            &[*re, *im],
            |v| ifft2_parts(v[0], v[1]),
            Box::new(|c: &BackwardCtx| {
                let g = c.grad(0);
                let n = spatial_numel(&g)?;
                let z = spectral::fft2(&g)?;
                Ok(vec![
                    when(c.needs[0], || Ok(z.re().scale(1.0 / n)))?,
                    when(c.needs[1], || Ok(z.im().scale(1.0 / n)))?,
                ])
            }),
        )
    }

    fn ifft2_real(&self, re: &Var) -> Result<Var> {
        self.record1(
            "ifft2_real",
            &[*re],
            |v| ifft2_real_spectrum(v[0]),
            Box::new(|c: &BackwardCtx| {
                let g = c.grad(0);
                let n = spatial_numel(&g)?;
                Ok(vec![Some(spectral::fft2(&g)?.re().scale(1.0 / n))])
            }),
        )
    }

    fn phase_similarity(&self, rt: &Var, it: &Var, rr: &Var, ir: &Var) -> Result<Var> {
        self.record1(
            "phase_similarity",
            &[*rt, *it, *rr, *ir],
            |v| phase_similarity_parts(v[0], v[1], v[2], v[3]),
            Box::new(|c: &BackwardCtx| {
                let g = c.grad(0);
                let (rt, it, rr, ir) = (c.inputs[0], c.inputs[1], c.inputs[2], c.inputs[3]);
                let n = g.len();
                let mut out: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; n]);
                for k in 0..n {
                    let pt = spectral::phase_of(Complex64::new(rt.data()[k], it.data()[k]));
                    let pr = spectral::phase_of(Complex64::new(rr.data()[k], ir.data()[k]));
                    // dS/dΦt = −sin(Δ)/2, dS/dΦr = +sin(Δ)/2
                    let ds = -0.5 * (pt - pr).sin() * g.data()[k];
                    let (a, b) = phase_partials(rt.data()[k], it.data()[k]);
                    let (cc, d) = phase_partials(rr.data()[k], ir.data()[k]);
                    out[0][k] = ds * a;
                    out[1][k] = ds * b;
                    out[2][k] = -ds * cc;
                    out[3][k] = -ds * d;
                }
                let shape = g.shape().to_vec();
                out.into_iter()
                    .map(|d| Tensor::new(shape.clone(), d).map(Some))
                    .collect()
            }),
        )
    }

    fn symmetrize_spectrum(&self, w: &Var) -> Result<Var> {
        self.record1(
            "symmetrize_spectrum",
            &[*w],
            |v| symmetrize_spectrum(v[0]),
            // the map is an orthogonal projection, hence self-adjoint
            Box::new(|c: &BackwardCtx| Ok(vec![Some(symmetrize_spectrum(&c.grad(0))?)])),
        )
    }

    fn haar_dwt(&self, x: &Var) -> Result<[Var; 4]> {
        let out = self.record(
            "haar_dwt",
            &[*x],
            |v| Ok(dwt_parts(v[0])?.to_vec()),
            Box::new(|c: &BackwardCtx| {
                let g: Vec<_> = (0..4).map(|s| c.grad(s)).collect();
                Ok(vec![Some(idwt_parts([&g[0], &g[1], &g[2], &g[3]])?)])
            }),
        )?;
        Ok([out[0], out[1], out[2], out[3]])
    }

    fn haar_idwt(&self, b: [&Var; 4]) -> Result<Var> {
        self.record1(
            "haar_idwt",
            &[*b[0], *b[1], *b[2], *b[3]],
            |v| idwt_parts([v[0], v[1], v[2], v[3]]),
            Box::new(|c: &BackwardCtx| Ok(dwt_parts(&c.grad(0))?.into_iter().map(Some).collect())),
        )
    }

    fn window_partition(&self, x: &Var, m: usize) -> Result<Var> {
        self.record1(
            "window_partition",
            &[*x],
            |v| t::window_partition(v[0], m),
            Box::new(|c: &BackwardCtx| {
                let (h, w, _) = c.inputs[0].dims3()?;
                Ok(vec![Some(t::window_merge(&c.grad(0), h, w)?)])
            }),
        )
    }

    fn window_merge(&self, x: &Var, h: usize, w: usize) -> Result<Var> {
        self.record1(
            "window_merge",
            &[*x],
            |v| t::window_merge(v[0], h, w),
            Box::new(|c: &BackwardCtx| {
                let mm = c.inputs[0].shape()[1];
                let m = (mm as f64).sqrt().round() as usize;
                Ok(vec![Some(t::window_partition(&c.grad(0), m)?)])
            }),
        )
    }

    fn split_heads(&self, x: &Var, heads: usize) -> Result<Var> {
        self.record1(
            "split_heads",
            &[*x],
            |v| t::split_heads(v[0], heads),
            Box::new(move |c: &BackwardCtx| Ok(vec![Some(t::merge_heads(&c.grad(0), heads)?)])),
        )
    }

    fn merge_heads(&self, x: &Var, heads: usize) -> Result<Var> {
        self.record1(
            "merge_heads",
            &[*x],
            |v| t::merge_heads(v[0], heads),
            Box::new(move |c: &BackwardCtx| Ok(vec![Some(t::split_heads(&c.grad(0), heads)?)])),
        )
    }

    fn bmm(&self, a: &Var, b: &Var) -> Result<Var> {
        self.record1(
            "bmm",
            &[*a, *b],
            |v| t::bmm(v[0], v[1]),
            Box::new(|c: &BackwardCtx| {
                let g = c.grad(0);
                Ok(vec![
                    when(c.needs[0], || t::bmm_nt(&g, c.inputs[1]))?,
                    when(c.needs[1], || t::bmm_tn(c.inputs[0], &g))?,
                ])
            }),
        )
    }

    fn bmm_nt(&self, a: &Var, b: &Var) -> Result<Var> {
        self.record1(
            "bmm_nt",
            &[*a, *b],
            |v| t::bmm_nt(v[0], v[1]),
            Box::new(|c: &BackwardCtx| {
                let g = c.grad(0);
                Ok(vec![
                    when(c.needs[0], || t::bmm(&g, c.inputs[1]))?,
                    when(c.needs[1], || t::bmm_tn(&g, c.inputs[0]))?,
                ])
            }),
        )
    }

    fn add_rel_bias(&self, s: &Var, table: &Var, m: usize, heads: usize) -> Result<Var> {
        self.record1(
            "add_rel_bias",
            &[*s, *table],
            |v| t::add_rel_bias(v[0], v[1], m, heads),
            Box::new(move |c: &BackwardCtx| {
                let g = c.grad(0);
                Ok(vec![
                    Some(g.clone().into_owned()),
                    when(c.needs[1], || t::rel_bias_backward(&g, m, heads))?,
                ])
            }),
        )
    }

    fn concat_channels(&self, parts: &[&Var]) -> Result<Var> {
        let inputs: Vec<Var> = parts.iter().map(|v| **v).collect();
        self.record1(
            "concat_channels",
            &inputs,
            t::concat_channels,
            Box::new(|c: &BackwardCtx| {
                let g = c.grad(0);
                let mut start = 0;
                let mut out = Vec::with_capacity(c.inputs.len());
                for (x, &need) in c.inputs.iter().zip(&c.needs) {
                    let len = x.dims3()?.2;
                    out.push(when(need, || t::slice_channels(&g, start, len))?);
                    start += len;
                }
                Ok(out)
            }),
        )
    }

    fn slice_channels(&self, x: &Var, start: usize, len: usize) -> Result<Var> {
        self.record1(
            "slice_channels",
            &[*x],
            |v| t::slice_channels(v[0], start, len),
            Box::new(move |c: &BackwardCtx| {
                let cin = c.inputs[0].dims3()?.2;
                Ok(vec![Some(embed_channels(&c.grad(0), start, cin)?)])
            }),
        )
    }

    fn upsample_nearest(&self, x: &Var) -> Result<Var> {
        self.record1(
            "upsample_nearest",
            &[*x],
            |v| t::upsample_nearest(v[0]),
            Box::new(|c: &BackwardCtx| Ok(vec![Some(t::upsample_nearest_backward(&c.grad(0))?)])),
        )
    }

    fn reflect_pad(&self, x: &Var, h: usize, w: usize) -> Result<Var> {
        self.record1(
            "reflect_pad",
            &[*x],
            |v| t::reflect_pad(v[0], h, w),
            Box::new(move |c: &BackwardCtx| {
                let (xh, xw, ch) = c.inputs[0].dims3()?;
                let g = c.grad(0);
                let mut gx = vec![0.0; xh * xw * ch];
                for i in 0..h {
                    let si = t::reflect_index(i, xh);
                    for j in 0..w {
                        let sj = t::reflect_index(j, xw);
                        for k in 0..ch {
                            gx[(si * xw + sj) * ch + k] += g.at3(i, j, k);
                        }
                    }
                }
                Ok(vec![Some(Tensor::new(vec![xh, xw, ch], gx)?)])
            }),
        )
    }

    fn crop(&self, x: &Var, h: usize, w: usize) -> Result<Var> {
        self.record1(
            "crop",
            &[*x],
            |v| t::crop(v[0], h, w),
            Box::new(move |c: &BackwardCtx| {
                let (xh, xw, ch) = c.inputs[0].dims3()?;
                let g = c.grad(0);
                Ok(vec![Some(Tensor::from_fn_hwc(xh, xw, ch, |i, j, k| {
                    if i < h && j < w {
                        g.at3(i, j, k)
                    } else {
                        0.0
                    }
                }))])
            }),
        )
    }
}
