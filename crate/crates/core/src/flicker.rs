//! Rolling-shutter flicker synthesis.
//!
//! A lamp on AC mains emits `ℓ(t) = |sin(2π f_ac t)|^γ_w`, which repeats at twice
//! the mains frequency. Each sensor row integrates that waveform over its exposure
//! window, and row `r` starts `r · t_row` later than row 0, so the per-row gain
//! forms stripes with a period of `1 / (2 f_ac t_row)` rows.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::spectral::autocorrelation;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Orientation {
    /// Stripes run along rows: the readout sweeps top to bottom.
    Horizontal,
    /// Stripes run along columns: the readout sweeps left to right.
    Vertical,
}

impl std::str::FromStr for Orientation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "horizontal" | "horizontal-stripes" => Ok(Self::Horizontal),
            "vertical" | "vertical-stripes" => Ok(Self::Vertical),
            _ => Err(Error::Config(format!(
                "orientation must be horizontal or vertical, got {s:?}"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlickerParams {
    /// Mains frequency in Hz.
    pub ac_frequency: f64,
    /// Sharpening exponent applied to the rectified sine.
    pub gamma_w: f64,
    /// Per-row exposure in seconds.
    pub exposure_time: f64,
    /// Delay between the starts of consecutive rows, in seconds.
    pub row_readout_time: f64,
    /// Lamp phase at the start of each burst frame, in radians of one flicker period.
    pub phase_offsets: [f64; 3],
    pub orientation: Orientation,
    pub min_gain: f64,
}

impl Default for FlickerParams {
    fn default() -> Self {
        Self {
            ac_frequency: 50.0,
            gamma_w: 2.0,
            exposure_time: 1e-3,
            row_readout_time: 1e-4,
            phase_offsets: [0.0, 2.0 * PI / 3.0, 4.0 * PI / 3.0],
            orientation: Orientation::Horizontal,
            min_gain: 0.0,
        }
    }
}

impl FlickerParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        let positive = [
            ("ac_frequency", self.ac_frequency),
            ("gamma_w", self.gamma_w),
            ("exposure_time", self.exposure_time),
            ("row_readout_time", self.row_readout_time),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        for (i, &p) in self.phase_offsets.iter().enumerate() {
            if !(0.0..2.0 * PI).contains(&p) {
                return bad(format!("phase offset {i} must lie in [0, 2π), got {p}"));
            }
        }
        if !(0.0..1.0).contains(&self.min_gain) {
            return bad(format!(
                "min_gain must lie in [0, 1), got {}",
                self.min_gain
            ));
        }
        Ok(())
    }

    /// Lamp output frequency: full-wave rectification doubles the mains frequency.
    pub fn flicker_frequency(&self) -> f64 {
        2.0 * self.ac_frequency
    }

    pub fn flicker_period(&self) -> f64 {
        1.0 / self.flicker_frequency()
    }

    /// Predicted stripe period in rows.
    pub fn stripe_period_rows(&self) -> f64 {
        self.flicker_period() / self.row_readout_time
    }
}

/// Instantaneous lamp intensity at time `t`.
pub fn ac_waveform(t: f64, fp: &FlickerParams) -> f64 {
    (2.0 * PI * fp.ac_frequency * t)
        .sin()
        .abs()
        .powf(fp.gamma_w)
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

fn adaptive(
    f: &impl Fn(f64) -> f64,
    (a, b): (f64, f64),
    (fa, fm, fb): (f64, f64, f64),
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    adaptive(f, (a, m), (fa, flm, fm), left, tol / 2.0, depth - 1)
        + adaptive(f, (m, b), (fm, frm, fb), right, tol / 2.0, depth - 1)
}

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    let whole = simpson(a, b, fa, fm, fb);
    adaptive(&f, (a, b), (fa, fm, fb), whole, tol, 48)
}

const QUAD_TOL: f64 = 1e-13;

/// `∫₀^x sin^γ θ dθ` for `x ∈ [0, π]`.
fn half_wave_integral(x: f64, gamma: f64) -> f64 {
    integrate(|th| th.sin().max(0.0).powf(gamma), 0.0, x, QUAD_TOL)
}

/// `∫₀^θ |sin u|^γ du` for any `θ ≥ 0`. The integrand is smooth between
/// consecutive zeros of the sine, so whole half-waves are counted and only the
/// partial one is integrated.
fn cumulative(theta: f64, gamma: f64, half_wave: f64) -> f64 {
    let k = (theta / PI).floor();
    k * half_wave + half_wave_integral(theta - k * PI, gamma)
}

/// Mean of `ℓ` over one flicker period.
pub fn period_mean(fp: &FlickerParams) -> f64 {
    half_wave_integral(PI, fp.gamma_w) / PI
}

/// Mean of `ℓ` over `[t0, t0 + duration]`.
pub fn mean_intensity(t0: f64, duration: f64, fp: &FlickerParams) -> f64 {
    let w = 2.0 * PI * fp.ac_frequency;
    let half_wave = half_wave_integral(PI, fp.gamma_w);
    // shift by whole periods so both ends are non-negative
    let shift = if t0 < 0.0 {
        (-t0 / fp.flicker_period()).ceil() * fp.flicker_period()
    } else {
        0.0
    };
    let (a, b) = (w * (t0 + shift), w * (t0 + shift + duration));
    (cumulative(b, fp.gamma_w, half_wave) - cumulative(a, fp.gamma_w, half_wave)) / (b - a)
}

/// Gain of readout line `r` in a frame whose lamp phase is `phase`: the exposure
/// average of `ℓ` relative to its period mean, clamped to `[min_gain, 1]`.
pub fn row_attenuation(r: usize, phase: f64, fp: &FlickerParams) -> f64 {
    let t0 = phase / (2.0 * PI) * fp.flicker_period() + r as f64 * fp.row_readout_time;
    let g = mean_intensity(t0, fp.exposure_time, fp) / period_mean(fp);
    g.clamp(fp.min_gain, 1.0)
}

/// Gains for readout lines `0..lines`.
pub fn gain_profile(lines: usize, phase: f64, fp: &FlickerParams) -> Vec<f64> {
    let mean = period_mean(fp);
    let t_phase = phase / (2.0 * PI) * fp.flicker_period();
    (0..lines)
        .map(|r| {
            let t0 = t_phase + r as f64 * fp.row_readout_time;
            (mean_intensity(t0, fp.exposure_time, fp) / mean).clamp(fp.min_gain, 1.0)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct BurstTriplet {
    pub frames: [Tensor; 3],
    pub clean: Tensor,
    /// Gain per readout line of each frame: rows for horizontal stripes, columns
    /// for vertical ones.
    pub gains: [Vec<f64>; 3],
}

impl BurstTriplet {
    pub fn frame_refs(&self) -> [&Tensor; 3] {
        [&self.frames[0], &self.frames[1], &self.frames[2]]
    }
}

/// Noise-free burst.
pub fn synth_burst(clean: &Tensor, fp: &FlickerParams) -> Result<BurstTriplet> {
    synth_burst_noisy(clean, fp, 0.0, 0)
}

/// Burst with i.i.d. Gaussian read noise of standard deviation `sigma`, drawn
/// from `seed`, added before clamping.
pub fn synth_burst_noisy(
    clean: &Tensor,
    fp: &FlickerParams,
    sigma: f64,
    seed: u64,
) -> Result<BurstTriplet> {
    fp.validate()?;
    clean.dims3()?;
    if clean.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::Config(
            "clean image values must lie in [0, 1]".into(),
        ));
    }
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::Config(format!(
            "noise sigma must be non-negative, got {sigma}"
        )));
    }
    match fp.orientation {
        Orientation::Horizontal => synth_rows(clean, fp, sigma, seed),
        Orientation::Vertical => {
            let b = synth_rows(&clean.transpose_hw()?, fp, sigma, seed)?;
            let [f0, f1, f2] = b.frames;
            Ok(BurstTriplet {
                frames: [f0.transpose_hw()?, f1.transpose_hw()?, f2.transpose_hw()?],
                clean: clean.clone(),
                gains: b.gains,
            })
        }
    }
}

fn synth_rows(clean: &Tensor, fp: &FlickerParams, sigma: f64, seed: u64) -> Result<BurstTriplet> {
    let (h, w, c) = clean.dims3()?;
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma.max(f64::MIN_POSITIVE)).expect("valid sigma");
    let gains = fp.phase_offsets.map(|phase| gain_profile(h, phase, fp));
    let frames = std::array::from_fn(|t| {
        let mut f = clean.clone();
        for (i, px) in f.data_mut().chunks_exact_mut(w * c).enumerate() {
            for v in px {
                let mut x = *v * gains[t][i];
                if sigma > 0.0 {
                    x += noise.sample(&mut r);
                }
                *v = x.clamp(0.0, 1.0);
            }
        }
        f
    });
    Ok(BurstTriplet {
        frames,
        clean: clean.clone(),
        gains,
    })
}

/// Smooth colour ramp in `[0.3, 0.8]` with no texture: brightness rises down
/// the rows and, in the green and blue channels, across the columns.
pub fn gradient_scene(h: usize, w: usize) -> Tensor {
    Tensor::from_fn_hwc(h, w, 3, |i, j, k| {
        0.3 + 0.3 * (i as f64 / h.max(1) as f64) + 0.1 * k as f64 * (j as f64 / w.max(1) as f64)
    })
}

/// Deterministic clean test scene in `[0.05, 0.95]`: a colour gradient with soft
/// discs and rectangles and a faint texture.
pub fn synthetic_scene(h: usize, w: usize, seed: u64) -> Tensor {
    use rand::Rng;
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let base: [f64; 3] = std::array::from_fn(|_| r.gen_range(0.3..0.6));
    let slope: [(f64, f64); 3] =
        std::array::from_fn(|_| (r.gen_range(-0.2..0.2), r.gen_range(-0.2..0.2)));
    struct Shape {
        disc: bool,
        cy: f64,
        cx: f64,
        ry: f64,
        rx: f64,
        colour: [f64; 3],
    }
    let shapes: Vec<Shape> = (0..6)
        .map(|_| Shape {
            disc: r.gen_bool(0.5),
            cy: r.gen_range(0.0..1.0),
            cx: r.gen_range(0.0..1.0),
            ry: r.gen_range(0.08..0.3),
            rx: r.gen_range(0.08..0.3),
            colour: std::array::from_fn(|_| r.gen_range(0.1..0.9)),
        })
        .collect();
    let (fy, fx) = (r.gen_range(0.5..1.5), r.gen_range(0.5..1.5));
    Tensor::from_fn_hwc(h, w, 3, |i, j, k| {
        let y = i as f64 / h.max(1) as f64;
        let x = j as f64 / w.max(1) as f64;
        let mut v = base[k] + slope[k].0 * (y - 0.5) + slope[k].1 * (x - 0.5);
        for s in &shapes {
            let (dy, dx) = ((y - s.cy) / s.ry, (x - s.cx) / s.rx);
            let d = if s.disc {
                (dy * dy + dx * dx).sqrt()
            } else {
                dy.abs().max(dx.abs())
            };
            // soft edge about two pixels wide
            let edge = 2.0 / (h.min(w).max(1) as f64 * s.ry.min(s.rx));
            let a = ((1.0 - d) / edge).clamp(0.0, 1.0);
            v = (1.0 - a) * v + a * s.colour[k];
        }
        v += 0.03 * (fy * i as f64).sin() * (fx * j as f64).cos();
        v.clamp(0.05, 0.95)
    })
}

/// Mean over columns and channels for each row.
pub fn row_profile(img: &Tensor) -> Result<Vec<f64>> {
    let (h, w, c) = img.dims3()?;
    Ok(img
        .data()
        .chunks_exact(w * c)
        .map(|row| row.iter().sum::<f64>() / (w * c) as f64)
        .take(h)
        .collect())
}

/// Removes the least-squares line from `p`.
fn detrend(p: &[f64]) -> Vec<f64> {
    let n = p.len() as f64;
    let xm = (n - 1.0) / 2.0;
    let ym = p.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, &y) in p.iter().enumerate() {
        let dx = i as f64 - xm;
        sxy += dx * (y - ym);
        sxx += dx * dx;
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    p.iter()
        .enumerate()
        .map(|(i, &y)| y - ym - slope * (i as f64 - xm))
        .collect()
}

/// Linear (non-circular) autocorrelation of a detrended profile, divided by the
/// overlap length at each lag. Computed through the FFT on a zero-padded copy.
pub fn profile_autocorrelation(profile: &[f64]) -> Result<Vec<f64>> {
    let n = profile.len();
    let mut padded = detrend(profile);
    padded.resize(2 * n, 0.0);
    let r = autocorrelation(&Tensor::new(vec![2 * n, 1, 1], padded)?)?;
    Ok((0..n).map(|lag| r.data()[lag] / (n - lag) as f64).collect())
}

/// Power at frequency `f` (cycles per sample) summed over its first harmonics.
fn harmonic_power(x: &[f64], f: f64, harmonics: usize) -> f64 {
    (1..=harmonics)
        .take_while(|&h| h as f64 * f < 0.5)
        .map(|h| {
            let w = 2.0 * PI * h as f64 * f;
            let (mut re, mut im) = (0.0, 0.0);
            for (i, &v) in x.iter().enumerate() {
                let (s, c) = (w * i as f64).sin_cos();
                re += v * c;
                im += v * s;
            }
            re * re + im * im
        })
        .sum()
}

/// Divides `p` by its centred moving average over `len` samples, which removes
/// slow multiplicative scene variation when `len` spans one stripe period.
fn flatten(p: &[f64], len: usize) -> Vec<f64> {
    let half = len / 2;
    let mut prefix = vec![0.0; p.len() + 1];
    for (i, v) in p.iter().enumerate() {
        prefix[i + 1] = prefix[i] + v;
    }
    (half..p.len().saturating_sub(len - half))
        .map(|i| {
            let avg = (prefix[i - half + len] - prefix[i - half]) / len as f64;
            p[i] / avg
        })
        .collect()
}

fn hann(x: &mut [f64]) {
    let n = x.len();
    for (i, v) in x.iter_mut().enumerate() {
        *v *= 0.5 - 0.5 * (2.0 * PI * i as f64 / (n - 1) as f64).cos();
    }
}

/// Maximizes `power` on `[lo, hi]`: a grid search, then golden-section refinement.
fn maximize(power: impl Fn(f64) -> f64, lo: f64, hi: f64, grid: usize) -> f64 {
    let step = (hi - lo) / grid as f64;
    let best = (0..=grid)
        .map(|k| lo + k as f64 * step)
        .max_by(|&a, &b| power(a).total_cmp(&power(b)))
        .expect("non-empty grid");
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = ((best - step).max(lo), (best + step).min(hi));
    let (mut c, mut d) = (b - g * (b - a), a + g * (b - a));
    let (mut pc, mut pd) = (power(c), power(d));
    for _ in 0..60 {
        if pc > pd {
            b = d;
            d = c;
            pd = pc;
            c = b - g * (b - a);
            pc = power(c);
        } else {
            a = c;
            c = d;
            pc = pd;
            d = a + g * (b - a);
            pd = power(d);
        }
    }
    0.5 * (a + b)
}

/// Dominant period of a 1-D profile in samples, between 4 samples and a third of
/// the profile length.
///
/// A non-negative profile is taken in log scale, so `gain · scene` becomes a sum
/// and slow scene variation stays at low frequencies. The coarse period is the
/// peak of the detrended, Hann-windowed periodogram. The profile is then divided
/// by its one-period moving average, leaving nearly pure gain, and the period is
/// refined by maximizing the windowed power of the first three harmonics within
/// ±15% of the coarse frequency. `None` for flat profiles.
pub fn estimate_period(profile: &[f64]) -> Result<Option<f64>> {
    let n = profile.len();
    if n < 12 {
        return Ok(None);
    }
    let positive = profile.iter().all(|&v| v >= 0.0);
    let logged: Vec<f64> = if positive {
        profile.iter().map(|&v| v.max(1e-3).ln()).collect()
    } else {
        profile.to_vec()
    };
    let mut x = detrend(&logged);
    let energy: f64 = x.iter().map(|v| v * v).sum();
    let scale = logged.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if energy <= 1e-20 * scale * scale * n as f64 {
        return Ok(None);
    }
    hann(&mut x);
    let f0 = maximize(|f| harmonic_power(&x, f, 1), 3.0 / n as f64, 0.25, 4 * n);
    let p0 = (1.0 / f0).round() as usize;
    let mut y = if positive && n >= 5 * p0 && profile.iter().all(|&v| v > 0.0) {
        detrend(&flatten(profile, p0))
    } else {
        detrend(profile)
    };
    hann(&mut y);
    let f = maximize(|f| harmonic_power(&y, f, 3), f0 / 1.15, f0 / 0.85, 200);
    Ok(Some(1.0 / f))
}

/// Stripe period of an image in pixels along the readout direction, estimated
/// from its line-mean profile.
pub fn stripe_period(img: &Tensor, orientation: Orientation) -> Result<Option<f64>> {
    let img = match orientation {
        Orientation::Horizontal => img.clone(),
        Orientation::Vertical => img.transpose_hw()?,
    };
    estimate_period(&row_profile(&img)?)
}
