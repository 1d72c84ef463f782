//! Two-dimensional Fourier analysis on `H × W × C` maps: transforms, polar
//! (amplitude/phase) algebra, phase correlation and Wiener–Khinchin
//! autocorrelation.
//!
//! Normalization is fixed: [`fft2`] is unnormalized and [`ifft2`] divides by `H·W`,
//! so `autocorrelation(x)[0, 0] == Σ x²` per channel.

pub mod fft;

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{shape_err, Error, Result};
use crate::tensor::Tensor;

/// Complex-valued `H × W × C` map.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexTensor {
    shape: [usize; 3],
    data: Vec<Complex64>,
}

impl ComplexTensor {
    pub fn new(shape: [usize; 3], data: Vec<Complex64>) -> Result<Self> {
        if shape.contains(&0) || shape.iter().product::<usize>() != data.len() {
            return shape_err(format!(
                "complex tensor shape {shape:?} vs {} values",
                data.len()
            ));
        }
        Ok(Self { shape, data })
    }

    pub fn from_parts(re: &Tensor, im: &Tensor) -> Result<Self> {
        re.check_same_shape(im, "complex from parts")?;
        let (h, w, c) = re.dims3()?;
        let data = re
            .data()
            .iter()
            .zip(im.data())
            .map(|(&a, &b)| Complex64::new(a, b))
            .collect();
        Self::new([h, w, c], data)
    }

    pub fn from_real(x: &Tensor) -> Result<Self> {
        let (h, w, c) = x.dims3()?;
        Self::new(
            [h, w, c],
            x.data().iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        )
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn re(&self) -> Tensor {
        self.part(|z| z.re)
    }

    pub fn im(&self) -> Tensor {
        self.part(|z| z.im)
    }

    fn part(&self, f: impl Fn(&Complex64) -> f64) -> Tensor {
        Tensor::new(self.shape.to_vec(), self.data.iter().map(f).collect())
            .expect("shape already validated")
    }

    pub fn max_abs_diff(&self, other: &ComplexTensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).norm()))
    }

    /// Largest `|X[k] − conj(X[−k])|`, i.e. the distance from the spectrum of a real
    /// signal.
    pub fn conjugate_asymmetry(&self) -> f64 {
        let [h, w, c] = self.shape;
        let mut worst = 0.0f64;
        for u in 0..h {
            for v in 0..w {
                let (nu, nv) = ((h - u) % h, (w - v) % w);
                for k in 0..c {
                    let a = self.data[(u * w + v) * c + k];
                    let b = self.data[(nu * w + nv) * c + k];
                    worst = worst.max((a - b.conj()).norm());
                }
            }
        }
        worst
    }
}

/// Applies a 1-D transform along both spatial axes of every channel. Rows are
/// transformed with the channels as the batch; columns with whole image rows
/// (`W·C` values) as the batch.
fn transform2(data: &mut [Complex64], [h, w, c]: [usize; 3], inverse: bool) {
    let row_plan = fft::plan(w);
    let col_plan = fft::plan(h);
    let run = |plan: &fft::Fft1d, buf: &mut [Complex64], batch: usize| {
        if inverse {
            plan.inverse_batched(buf, batch)
        } else {
            plan.forward_batched(buf, batch)
        }
    };
    if w > 1 {
        for row in data.chunks_exact_mut(w * c) {
            run(&row_plan, row, c);
        }
    }
    if h > 1 {
        run(&col_plan, data, w * c);
    }
}

/// Unnormalized forward 2-D DFT of each channel.
pub fn fft2(x: &Tensor) -> Result<ComplexTensor> {
    let mut z = ComplexTensor::from_real(x)?;
    let shape = z.shape;
    transform2(&mut z.data, shape, false);
    Ok(z)
}

pub fn fft2_complex(x: &ComplexTensor) -> ComplexTensor {
    let mut z = x.clone();
    transform2(&mut z.data, z.shape, false);
    z
}

/// Inverse 2-D DFT including the `1/(H·W)` factor.
pub fn ifft2_complex(x: &ComplexTensor) -> ComplexTensor {
    let mut z = x.clone();
    transform2(&mut z.data, z.shape, true);
    let scale = 1.0 / (z.shape[0] * z.shape[1]) as f64;
    for v in &mut z.data {
        *v *= scale;
    }
    z
}

/// Real part of the inverse transform, without any symmetry check.
pub fn ifft2_real_part(x: &ComplexTensor) -> Tensor {
    ifft2_complex(x).re()
}

/// Inverse transform of a conjugate-symmetric spectrum; returns the real signal.
///
/// Debug builds assert that the discarded imaginary residue is below `1e-9`
/// relative to the signal magnitude.
pub fn ifft2(x: &ComplexTensor) -> Tensor {
    let z = ifft2_complex(x);
    if cfg!(debug_assertions) {
        let scale = z.data.iter().fold(1.0f64, |m, v| m.max(v.re.abs()));
        let resid = z.data.iter().fold(0.0f64, |m, v| m.max(v.im.abs()));
        debug_assert!(
            resid <= 1e-9 * scale,
            "ifft2 of a non-symmetric spectrum: imaginary residue {resid:e}"
        );
    }
    z.re()
}

/// Phase of a complex number in `(−π, π]`, with the phase of zero defined as 0.
#[inline]
pub fn phase_of(z: Complex64) -> f64 {
    if z.re == 0.0 && z.im == 0.0 {
        return 0.0;
    }
    let p = z.im.atan2(z.re);
    if p <= -PI {
        PI
    } else {
        p
    }
}

/// Polar decomposition `X = A·exp(iΦ)`.
pub fn amp_phase(x: &ComplexTensor) -> (Tensor, Tensor) {
    (x.part(|z| z.norm()), x.part(|&z| phase_of(z)))
}

pub fn from_amp_phase(amplitude: &Tensor, phase: &Tensor) -> Result<ComplexTensor> {
    amplitude.check_same_shape(phase, "from_amp_phase")?;
    let (h, w, c) = amplitude.dims3()?;
    let data = amplitude
        .data()
        .iter()
        .zip(phase.data())
        .map(|(&a, &p)| Complex64::from_polar(a, p))
        .collect();
    ComplexTensor::new([h, w, c], data)
}

/// Exchanges the phase spectra of two maps: `a'` keeps `a`'s amplitude with `b`'s
/// phase and vice versa.
pub fn phase_swap(a: &Tensor, b: &Tensor) -> Result<(Tensor, Tensor)> {
    a.check_same_shape(b, "phase_swap")?;
    let (amp_a, ph_a) = amp_phase(&fft2(a)?);
    let (amp_b, ph_b) = amp_phase(&fft2(b)?);
    let a2 = ifft2_real_part(&from_amp_phase(&amp_a, &ph_b)?);
    let b2 = ifft2_real_part(&from_amp_phase(&amp_b, &ph_a)?);
    Ok((a2, b2))
}

/// How per-bin phase agreement between two frames is scored.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PhaseScore {
    /// `(1 + cos(Φt − Φ1)) / 2`, in `[0, 1]`, equal to 1 iff the phases agree.
    #[default]
    Cosine,
    /// `|exp(iΦt)·exp(−iΦ1)|`, which is identically 1. Kept for comparison.
    UnitModulus,
    /// Real part of the phase-correlation surface (inverse transform of the
    /// normalized cross-power spectrum), mapped from `[−1, 1]` to `[0, 1]`.
    CorrelationSurface,
}

/// Per-bin phase agreement `(1 + cos(Φt − Φ1)) / 2`.
pub fn phase_similarity(phase_t: &Tensor, phase_ref: &Tensor) -> Result<Tensor> {
    phase_t.zip_map(phase_ref, |a, b| 0.5 * (1.0 + (a - b).cos()))
}

/// The literal unit-modulus score; every entry is 1 up to rounding.
pub fn phase_similarity_unit_modulus(phase_t: &Tensor, phase_ref: &Tensor) -> Result<Tensor> {
    phase_t.zip_map(phase_ref, |a, b| {
        (Complex64::from_polar(1.0, a) * Complex64::from_polar(1.0, -b)).norm()
    })
}

/// Normalized cross-power spectrum `Xa·conj(Xb) / |Xa·conj(Xb)|`, zero where the
/// product vanishes.
pub fn normalized_cross_power(xa: &ComplexTensor, xb: &ComplexTensor) -> Result<ComplexTensor> {
    if xa.shape != xb.shape {
        return shape_err("cross power of differently shaped spectra");
    }
    let data = xa
        .data
        .iter()
        .zip(&xb.data)
        .map(|(a, b)| {
            let p = a * b.conj();
            let n = p.norm();
            if n > 1e-300 {
                p / n
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect();
    ComplexTensor::new(xa.shape, data)
}

/// Phase-correlation surface of two spectra mapped into `[0, 1]`.
pub fn correlation_surface_score(xt: &ComplexTensor, xref: &ComplexTensor) -> Result<Tensor> {
    let surf = ifft2_real_part(&normalized_cross_power(xt, xref)?);
    Ok(surf.map(|v| (0.5 * (1.0 + v)).clamp(0.0, 1.0)))
}

/// Scores phase agreement of two spectra with the selected rule.
pub fn phase_score(kind: PhaseScore, xt: &ComplexTensor, xref: &ComplexTensor) -> Result<Tensor> {
    match kind {
        PhaseScore::Cosine => phase_similarity(&amp_phase(xt).1, &amp_phase(xref).1),
        PhaseScore::UnitModulus => {
            phase_similarity_unit_modulus(&amp_phase(xt).1, &amp_phase(xref).1)
        }
        PhaseScore::CorrelationSurface => correlation_surface_score(xt, xref),
    }
}

fn single_plane(x: &Tensor) -> Result<Tensor> {
    match x.shape() {
        [h, w] => x.clone().reshape(vec![*h, *w, 1]),
        [_, _, 1] => Ok(x.clone()),
        s => shape_err(format!(
            "phase correlation needs a single-channel map, got {s:?}"
        )),
    }
}

fn has_non_dc_energy(z: &ComplexTensor) -> bool {
    let total: f64 = z.data.iter().map(|v| v.norm_sqr()).sum();
    let dc = z.data[0].norm_sqr();
    total - dc > 1e-20 * total.max(1e-300)
}

/// Circular shift `(dy, dx)` such that `b[i, j] ≈ a[(i + dy) mod H, (j + dx) mod W]`,
/// found as the argmax of the phase-correlation surface of `F(a)·conj(F(b))`.
pub fn phase_correlation_peak(a: &Tensor, b: &Tensor) -> Result<(usize, usize)> {
    let (a, b) = (single_plane(a)?, single_plane(b)?);
    a.check_same_shape(&b, "phase correlation")?;
    let (fa, fb) = (fft2(&a)?, fft2(&b)?);
    if !has_non_dc_energy(&fa) || !has_non_dc_energy(&fb) {
        return Err(Error::Degenerate(
            "phase correlation of a constant image has no peak".into(),
        ));
    }
    let surf = ifft2_real_part(&normalized_cross_power(&fa, &fb)?);
    let w = a.shape()[1];
    let (best, _) =
        surf.data()
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
                if v > bv {
                    (i, v)
                } else {
                    (bi, bv)
                }
            });
    Ok((best / w, best % w))
}

/// `|X|²` of a spectrum as a real map.
pub fn power_spectrum(x: &ComplexTensor) -> Tensor {
    x.part(|z| z.norm_sqr())
}

/// Circular autocorrelation per channel via Wiener–Khinchin:
/// `R = ifft2(|fft2(x)|²)`, so `R[τ] = Σₓ x[p]·x[p + τ]`.
pub fn autocorrelation(x: &Tensor) -> Result<Tensor> {
    let power = power_spectrum(&fft2(x)?);
    Ok(ifft2_real_part(&ComplexTensor::from_real(&power)?))
}
