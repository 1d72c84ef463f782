//! Diagnostics shared by the command-line tools and the acceptance checks.

use crate::error::{Error, Result};
use crate::flicker::row_profile;
use crate::spectral::{autocorrelation, phase_swap};
use crate::tensor::{crop, Tensor};
use crate::train::luma;
use crate::wavelet::{directional_energy, haar_dwt};

/// Sample Pearson correlation. Series that are constant up to roundoff are
/// degenerate.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::Shape(format!(
            "pearson needs two equal-length series of at least 2, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    // FFT roundoff leaves a constant series with a spread near 1e-16
    let flat = |ss: f64, m: f64| ss.sqrt() <= 1e-12 * n.sqrt() * m.abs().max(1.0);
    if flat(saa, ma) || flat(sbb, mb) {
        return Err(Error::Degenerate("pearson of a constant series".into()));
    }
    Ok(sab / (saa * sbb).sqrt())
}

/// Row-mean profile of `img`, divided by that of `clean` when given, so the
/// scene's own row structure cancels and only the row gain remains.
pub fn row_gain_profile(img: &Tensor, clean: Option<&Tensor>) -> Result<Vec<f64>> {
    let p = row_profile(img)?;
    let Some(clean) = clean else {
        return Ok(p);
    };
    img.check_same_shape(clean, "row_gain_profile")?;
    Ok(p.iter()
        .zip(row_profile(clean)?)
        .map(|(v, c)| if c > 0.0 { v / c } else { 0.0 })
        .collect())
}

#[derive(Clone, Debug)]
pub struct PhaseSwapReport {
    /// Amplitude of `a` with the phase of `b`.
    pub swap_ab: Tensor,
    /// Amplitude of `b` with the phase of `a`.
    pub swap_ba: Tensor,
    /// `corr[i][j]`: Pearson between the profile of swap `i` and input `j`
    /// (`0` = `a`, `1` = `b`).
    pub corr: [[f64; 2]; 2],
}

impl PhaseSwapReport {
    /// Per swap: correlation with the phase donor minus correlation with the
    /// amplitude donor.
    pub fn margins(&self) -> [f64; 2] {
        [
            self.corr[0][1] - self.corr[0][0],
            self.corr[1][0] - self.corr[1][1],
        ]
    }

    pub fn min_margin(&self) -> f64 {
        let [m0, m1] = self.margins();
        m0.min(m1)
    }

    pub fn to_text(&self) -> String {
        let [m0, m1] = self.margins();
        format!(
            "output,corr_a,corr_b,margin\n\
             swap_ab,{:.6},{:.6},{:.6}\n\
             swap_ba,{:.6},{:.6},{:.6}\n",
            self.corr[0][0], self.corr[0][1], m0, self.corr[1][0], self.corr[1][1], m1
        )
    }
}

/// Swaps the phase spectra of `a` and `b` and correlates the row profiles of
/// the results with those of the inputs.
pub fn phase_swap_report(
    a: &Tensor,
    b: &Tensor,
    clean: Option<&Tensor>,
) -> Result<PhaseSwapReport> {
    let (swap_ab, swap_ba) = phase_swap(a, b)?;
    let pa = row_gain_profile(a, clean)?;
    let pb = row_gain_profile(b, clean)?;
    let mut corr = [[0.0; 2]; 2];
    for (i, s) in [&swap_ab, &swap_ba].into_iter().enumerate() {
        let ps = row_gain_profile(s, clean)?;
        corr[i] = [pearson(&ps, &pa)?, pearson(&ps, &pb)?];
    }
    Ok(PhaseSwapReport {
        swap_ab,
        swap_ba,
        corr,
    })
}

/// Circular autocorrelation of the mean-removed luma; lag `(0, 0)` sits at the
/// top-left corner.
pub fn luma_autocorrelation(img: &Tensor) -> Result<Tensor> {
    let y = luma(img)?;
    let mean = y.data().iter().sum::<f64>() / y.data().len() as f64;
    autocorrelation(&y.map(|v| v - mean))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubbandRow {
    pub band: &'static str,
    pub energy: f64,
    pub share: f64,
}

/// One-level Haar energy per subband, summed over channels. Odd edges are
/// cropped by one pixel first.
pub fn subband_table(img: &Tensor) -> Result<Vec<SubbandRow>> {
    let (h, w, _) = img.dims3()?;
    if h < 2 || w < 2 {
        return Err(Error::Shape(format!(
            "subband table needs at least 2×2, got {h}×{w}"
        )));
    }
    let even = crop(img, h & !1, w & !1)?;
    let e = directional_energy(&haar_dwt(&even)?)?;
    let bands = [("LL", &e.ll), ("LH", &e.lh), ("HL", &e.hl), ("HH", &e.hh)]
        .map(|(n, v)| (n, v.iter().sum::<f64>()));
    let total: f64 = bands.iter().map(|b| b.1).sum();
    Ok(bands
        .into_iter()
        .map(|(band, energy)| SubbandRow {
            band,
            energy,
            share: if total > 0.0 { energy / total } else { 0.0 },
        })
        .collect())
}

pub fn subband_csv(rows: &[SubbandRow]) -> String {
    let mut s = String::from("band,energy,share\n");
    for r in rows {
        s.push_str(&format!("{},{:e},{:.6}\n", r.band, r.energy, r.share));
    }
    s
}
