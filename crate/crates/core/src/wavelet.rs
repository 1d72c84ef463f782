//! Single-level orthonormal 2-D Haar transform.
//!
//! For each 2×2 block `[[a, b], [c, d]]` (rows run down the image):
//!
//! ```text
//! LL = (a + b + c + d) / 2     LH = (a + b − c − d) / 2
//! HL = (a − b + c − d) / 2     HH = (a − b − c + d) / 2
//! ```
//!
//! `LH` differences the rows, so horizontal stripes land there; `HL` differences
//! the columns and picks up vertical stripes.

use crate::error::{shape_err, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct WaveletSubbands {
    pub ll: Tensor,
    pub lh: Tensor,
    pub hl: Tensor,
    pub hh: Tensor,
}

impl WaveletSubbands {
    pub fn as_array(&self) -> [&Tensor; 4] {
        [&self.ll, &self.lh, &self.hl, &self.hh]
    }

    fn check(&self) -> Result<(usize, usize, usize)> {
        let dims = self.ll.dims3()?;
        for band in [&self.lh, &self.hl, &self.hh] {
            if band.dims3()? != dims {
                return shape_err(format!(
                    "wavelet subbands disagree: {:?} vs {:?}",
                    self.ll.shape(),
                    band.shape()
                ));
            }
        }
        Ok(dims)
    }
}

pub fn haar_dwt(x: &Tensor) -> Result<WaveletSubbands> {
    let (h, w, c) = x.dims3()?;
    if h % 2 != 0 || w % 2 != 0 {
        return shape_err(format!("Haar transform needs even size, got {h}×{w}"));
    }
    let (h2, w2) = (h / 2, w / 2);
    let mut bands: [Vec<f64>; 4] = std::array::from_fn(|_| Vec::with_capacity(h2 * w2 * c));
    for i in 0..h2 {
        for j in 0..w2 {
            for k in 0..c {
                let a = x.at3(2 * i, 2 * j, k);
                let b = x.at3(2 * i, 2 * j + 1, k);
                let cc = x.at3(2 * i + 1, 2 * j, k);
                let d = x.at3(2 * i + 1, 2 * j + 1, k);
                bands[0].push((a + b + cc + d) * 0.5);
                bands[1].push((a + b - cc - d) * 0.5);
                bands[2].push((a - b + cc - d) * 0.5);
                bands[3].push((a - b - cc + d) * 0.5);
            }
        }
    }
    let [ll, lh, hl, hh] = bands.map(|v| Tensor::new(vec![h2, w2, c], v).expect("band shape"));
    Ok(WaveletSubbands { ll, lh, hl, hh })
}

/// Exact inverse (and adjoint) of [`haar_dwt`].
pub fn haar_idwt(s: &WaveletSubbands) -> Result<Tensor> {
    let (h2, w2, c) = s.check()?;
    let w = 2 * w2;
    let mut out = vec![0.0; 4 * h2 * w2 * c];
    for i in 0..h2 {
        for j in 0..w2 {
            for k in 0..c {
                let ll = s.ll.at3(i, j, k);
                let lh = s.lh.at3(i, j, k);
                let hl = s.hl.at3(i, j, k);
                let hh = s.hh.at3(i, j, k);
                let top = 2 * i * w;
                let bot = (2 * i + 1) * w;
                out[(top + 2 * j) * c + k] = (ll + lh + hl + hh) * 0.5;
                out[(top + 2 * j + 1) * c + k] = (ll + lh - hl - hh) * 0.5;
                out[(bot + 2 * j) * c + k] = (ll - lh + hl - hh) * 0.5;
                out[(bot + 2 * j + 1) * c + k] = (ll - lh - hl + hh) * 0.5;
            }
        }
    }
    Tensor::new(vec![2 * h2, w, c], out)
}

/// Per-channel subband energies `Σ B²`.
#[derive(Clone, Debug, PartialEq)]
pub struct DirectionalEnergy {
    pub ll: Vec<f64>,
    pub lh: Vec<f64>,
    pub hl: Vec<f64>,
    pub hh: Vec<f64>,
}

impl DirectionalEnergy {
    /// Share of high-frequency energy (summed over channels) in `LH`, `HL`, `HH`.
    pub fn high_band_shares(&self) -> [f64; 3] {
        let sums = [&self.lh, &self.hl, &self.hh].map(|v| v.iter().sum::<f64>());
        let total: f64 = sums.iter().sum();
        if total == 0.0 {
            return [0.0; 3];
        }
        sums.map(|s| s / total)
    }
}

pub fn directional_energy(s: &WaveletSubbands) -> Result<DirectionalEnergy> {
    let (_, _, c) = s.check()?;
    let energy = |t: &Tensor| {
        let mut e = vec![0.0; c];
        for px in t.data().chunks_exact(c) {
            for (acc, v) in e.iter_mut().zip(px) {
                *acc += v * v;
            }
        }
        e
    };
    Ok(DirectionalEnergy {
        ll: energy(&s.ll),
        lh: energy(&s.lh),
        hl: energy(&s.hl),
        hh: energy(&s.hh),
    })
}
