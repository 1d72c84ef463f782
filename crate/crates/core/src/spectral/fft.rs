//! One-dimensional complex FFT for arbitrary lengths.
//!
//! Lengths whose prime factors are all small use a recursive mixed-radix
//! Cooley–Tukey decomposition; anything with a large prime factor goes through
//! Bluestein's chirp-z algorithm on a power-of-two convolution.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, OnceLock, RwLock};

use num_complex::Complex64;

/// Largest prime handled by a direct butterfly before falling back to Bluestein.
const MAX_DIRECT_RADIX: usize = 23;

#[derive(Debug)]
pub struct Fft1d {
    n: usize,
    kind: Kind,
}

#[derive(Debug)]
enum Kind {
    MixedRadix {
        factors: Vec<usize>,
        /// `exp(-2πi k / n)` for `k in 0..n`.
        twiddles: Vec<Complex64>,
    },
    Bluestein {
        inner: Arc<Fft1d>,
        /// `exp(-iπ k² / n)` for `k in 0..n`.
        chirp: Vec<Complex64>,
        /// Forward transform of the conjugate chirp, wrapped to the inner length.
        kernel: Vec<Complex64>,
    },
}

/// Radix factors used by the mixed-radix plan, largest first.
pub fn factorize(mut n: usize) -> Vec<usize> {
    let mut factors = Vec::new();
    while n.is_multiple_of(4) {
        factors.push(4);
        n /= 4;
    }
    let mut p = 2;
    while n > 1 {
        while n.is_multiple_of(p) {
            factors.push(p);
            n /= p;
        }
        p += 1;
        if p * p > n && n > 1 {
            factors.push(n);
            break;
        }
    }
    factors
}

fn twiddles(n: usize) -> Vec<Complex64> {
    (0..n)
        .map(|k| Complex64::from_polar(1.0, -2.0 * PI * k as f64 / n as f64))
        .collect()
}

impl Fft1d {
    fn build(n: usize) -> Self {
        assert!(n > 0, "FFT length must be positive");
        let factors = factorize(n);
        if factors.iter().all(|&p| p <= MAX_DIRECT_RADIX) {
            return Self {
                n,
                kind: Kind::MixedRadix {
                    factors,
                    twiddles: twiddles(n),
                },
            };
        }
        let len = (2 * n - 1).next_power_of_two();
        let inner = plan(len);
        let chirp: Vec<Complex64> = (0..n as u128)
            .map(|k| {
                // k² mod 2n keeps the angle argument small and exact
                let e = (k * k) % (2 * n as u128);
                Complex64::from_polar(1.0, -PI * e as f64 / n as f64)
            })
            .collect();
        let mut kernel = vec![Complex64::new(0.0, 0.0); len];
        kernel[0] = chirp[0].conj();
        for k in 1..n {
            kernel[k] = chirp[k].conj();
            kernel[len - k] = chirp[k].conj();
        }
        inner.forward_in_place(&mut kernel);
        Self {
            n,
            kind: Kind::Bluestein {
                inner,
                chirp,
                kernel,
            },
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Unnormalized forward DFT, `X[k] = Σ x[j]·exp(-2πi jk/n)`.
    pub fn forward_in_place(&self, buf: &mut [Complex64]) {
        assert_eq!(buf.len(), self.n, "buffer length does not match plan");
        self.forward_batched(buf, 1);
    }

    /// Unnormalized inverse DFT (no `1/n` factor).
    pub fn inverse_in_place(&self, buf: &mut [Complex64]) {
        assert_eq!(buf.len(), self.n, "buffer length does not match plan");
        self.inverse_batched(buf, 1);
    }

    /// Transforms `batch` interleaved sequences at once: `buf` holds `n` rows of
    /// `batch` values and sequence `b` is column `b`.
    pub fn forward_batched(&self, buf: &mut [Complex64], batch: usize) {
        assert_eq!(
            buf.len(),
            self.n * batch,
            "buffer length does not match plan"
        );
        if self.n == 1 || batch == 0 {
            return;
        }
        match &self.kind {
            Kind::MixedRadix { factors, twiddles } => {
                let input = buf.to_vec();
                let mut scratch = vec![
                    Complex64::new(0.0, 0.0);
                    factors.iter().max().copied().unwrap_or(1) * batch
                ];
                mixed_radix(&input, 1, buf, batch, factors, twiddles, 1, &mut scratch);
            }
            Kind::Bluestein {
                inner,
                chirp,
                kernel,
            } => {
                let len = inner.len();
                let mut a = vec![Complex64::new(0.0, 0.0); len];
                let scale = 1.0 / len as f64;
                for lane in 0..batch {
                    a.fill(Complex64::new(0.0, 0.0));
                    for k in 0..self.n {
                        a[k] = buf[k * batch + lane] * chirp[k];
                    }
                    inner.forward_batched(&mut a, 1);
                    for (v, &b) in a.iter_mut().zip(kernel) {
                        *v *= b;
                    }
                    inner.inverse_batched(&mut a, 1);
                    for k in 0..self.n {
                        buf[k * batch + lane] = a[k] * chirp[k] * scale;
                    }
                }
            }
        }
    }

    pub fn inverse_batched(&self, buf: &mut [Complex64], batch: usize) {
        for v in buf.iter_mut() {
            *v = v.conj();
        }
        self.forward_batched(buf, batch);
        for v in buf.iter_mut() {
            *v = v.conj();
        }
    }
}

/// Decimation-in-time step on `b`-wide rows: `out` (`n` rows) receives the DFT of
/// input rows `0, stride, 2·stride, …`. Twiddles are indexed on the full-length
/// table with `tw_step = N / n`.
#[allow(clippy::too_many_arguments)]
fn mixed_radix(
    input: &[Complex64],
    stride: usize,
    out: &mut [Complex64],
    b: usize,
    factors: &[usize],
    twiddles: &[Complex64],
    tw_step: usize,
    scratch: &mut [Complex64],
) {
    let n = out.len() / b;
    if n == 1 {
        out.copy_from_slice(&input[..b]);
        return;
    }
    let p = factors[0];
    let m = n / p;
    for j in 0..p {
        mixed_radix(
            &input[j * stride * b..],
            stride * p,
            &mut out[j * m * b..(j + 1) * m * b],
            b,
            &factors[1..],
            twiddles,
            tw_step * p,
            scratch,
        );
    }
    let big_n = twiddles.len();
    match p {
        2 => {
            let (lo, hi) = out.split_at_mut(m * b);
            for k in 0..m {
                let tw = twiddles[k * tw_step];
                let (x0, x1) = (&mut lo[k * b..(k + 1) * b], &mut hi[k * b..(k + 1) * b]);
                for (a, c) in x0.iter_mut().zip(x1.iter_mut()) {
                    let t = *c * tw;
                    *c = *a - t;
                    *a += t;
                }
            }
        }
        4 => {
            for k in 0..m {
                let (w1, w2, w3) = (
                    twiddles[k * tw_step],
                    twiddles[2 * k * tw_step],
                    twiddles[3 * k * tw_step],
                );
                for lane in 0..b {
                    let i0 = k * b + lane;
                    let a0 = out[i0];
                    let a1 = out[i0 + m * b] * w1;
                    let a2 = out[i0 + 2 * m * b] * w2;
                    let a3 = out[i0 + 3 * m * b] * w3;
                    let s02 = a0 + a2;
                    let d02 = a0 - a2;
                    let s13 = a1 + a3;
                    let d13 = a1 - a3;
                    // -i · d13
                    let rot = Complex64::new(d13.im, -d13.re);
                    out[i0] = s02 + s13;
                    out[i0 + m * b] = d02 + rot;
                    out[i0 + 2 * m * b] = s02 - s13;
                    out[i0 + 3 * m * b] = d02 - rot;
                }
            }
        }
        _ => {
            let root = big_n / p;
            for k in 0..m {
                for j in 0..p {
                    let tw = twiddles[(j * k * tw_step) % big_n];
                    let src = &out[(j * m + k) * b..(j * m + k + 1) * b];
                    for (d, &v) in scratch[j * b..(j + 1) * b].iter_mut().zip(src) {
                        *d = v * tw;
                    }
                }
                for q in 0..p {
                    let dst = &mut out[(q * m + k) * b..(q * m + k + 1) * b];
                    dst.copy_from_slice(&scratch[..b]);
                    for j in 1..p {
                        let tw = twiddles[((j * q) % p) * root];
                        for (d, &v) in dst.iter_mut().zip(&scratch[j * b..(j + 1) * b]) {
                            *d += v * tw;
                        }
                    }
                }
            }
        }
    }
}

type PlanCache = RwLock<HashMap<usize, Arc<Fft1d>>>;

fn cache() -> &'static PlanCache {
    static CACHE: OnceLock<PlanCache> = OnceLock::new();
    CACHE.get_or_init(|| RwLock::new(HashMap::new()))
}

/// Shared plan for length `n`, built once and cached for the process lifetime.
pub fn plan(n: usize) -> Arc<Fft1d> {
    if let Some(p) = cache().read().expect("fft cache poisoned").get(&n) {
        return Arc::clone(p);
    }
    // built outside the lock: Bluestein plans recursively request their inner plan
    let built = Arc::new(Fft1d::build(n));
    let mut guard = cache().write().expect("fft cache poisoned");
    Arc::clone(guard.entry(n).or_insert(built))
}
