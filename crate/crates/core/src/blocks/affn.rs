use crate::backend::Backend;
use crate::error::Result;
use crate::params::{conv, Decls, Init, Scope};
use crate::tensor::ConvSpec;

/// Width of each gated half, `⌈γ·C⌉`.
pub fn hidden_width(c: usize, gamma: f64) -> usize {
    (gamma * c as f64).ceil() as usize
}

/// Expansion, depthwise and projection convs for width `c` and hidden width `hid`.
pub fn affn_specs(c: usize, hid: usize) -> [ConvSpec; 3] {
    [
        ConvSpec::pointwise(c, 2 * hid),
        ConvSpec::depthwise(3, hid),
        ConvSpec::pointwise(hid, c),
    ]
}

pub fn declare_affn(d: &mut Decls, c: usize, gamma: f64) {
    let [fin, dw, proj] = affn_specs(c, hidden_width(c, gamma));
    d.conv("fin", &fin);
    d.param("alpha", vec![1], Init::Zeros);
    d.param("beta", vec![1], Init::Zeros);
    d.conv("dw", &dw);
    d.conv("proj", &proj);
}

/// Autocorrelation feed-forward network.
///
/// The expanded feature `F` is mixed with its power spectrum in the frequency
/// domain and with its circular autocorrelation in the spatial domain:
///
/// ```text
/// Y  = fft2(F),  P = |Y|²
/// F̂ = ifft2(Y + α·P) + β·ifft2(P)
/// ```
///
/// where `α·P` is added to the real part. `F̂` is split into halves `F¹`, `F²`
/// and the output is `proj(dw(gelu(F¹) ⊙ F²))`.
pub fn affn_forward<B: Backend>(b: &B, p: &Scope<B::V>, x: &B::V, gamma: f64) -> Result<B::V> {
    let c = b.shape(x)[2];
    let hid = hidden_width(c, gamma);
    let [fin, dw, proj] = affn_specs(c, hid);
    let f = conv(b, p, "fin", &fin, x)?;
    let (re, im) = b.fft2(&f)?;
    let power = b.add(&b.mul(&re, &re)?, &b.mul(&im, &im)?)?;
    let shifted = b.add(&re, &b.mul_scalar(&power, p.get("alpha")?)?)?;
    let spectral = b.ifft2(&shifted, &im)?;
    let autocorr = b.ifft2_real(&power)?;
    let mixed = b.add(&spectral, &b.mul_scalar(&autocorr, p.get("beta")?)?)?;
    let f1 = b.slice_channels(&mixed, 0, hid)?;
    let f2 = b.slice_channels(&mixed, hid, hid)?;
    let gated = b.mul(&b.gelu(&f1)?, &f2)?;
    let y = conv(b, p, "dw", &dw, &gated)?;
    conv(b, p, "proj", &proj, &y)
}
