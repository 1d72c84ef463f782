use crate::backend::Backend;
use crate::error::Result;
use crate::params::{conv, Decls, Scope};
use crate::spectral;
use crate::tensor::{ConvSpec, Tensor};

/// 3×3 conv that gates a neighbouring frame's features.
pub fn gate_spec(c: usize) -> ConvSpec {
    ConvSpec::same(3, c, c)
}

/// 3×3 conv fusing the three gated feature maps.
pub fn fusion_spec(c: usize) -> ConvSpec {
    ConvSpec::same(3, 3 * c, c)
}

/// Gating convs `gate0`, `gate2` (one per non-base frame) and the `fusion` conv.
pub fn declare_pfm(d: &mut Decls, c: usize) {
    d.conv("gate0", &gate_spec(c));
    d.conv("gate2", &gate_spec(c));
    d.conv("fusion", &fusion_spec(c));
}

/// Phase-correlation fusion of three frame features around the base frame `x1`.
///
/// For each neighbour the phase similarity to the base frame is turned into a real
/// spectral gate, symmetrized so the filtered map stays real, and applied to the
/// neighbour's spectrum. The filtered neighbours and the base are then fused.
pub fn pfm_fuse<B: Backend>(
    b: &B,
    p: &Scope<B::V>,
    x0: &B::V,
    x1: &B::V,
    x2: &B::V,
) -> Result<B::V> {
    let c = b.shape(x1)[2];
    let (re1, im1) = b.fft2(x1)?;
    let mut filtered = Vec::with_capacity(2);
    for (x, gate) in [(x0, "gate0"), (x2, "gate2")] {
        let (re, im) = b.fft2(x)?;
        let s = b.phase_similarity(&re, &im, &re1, &im1)?;
        let g = conv(b, p, gate, &gate_spec(c), &s)?;
        let w = b.symmetrize_spectrum(&b.sigmoid(&g)?)?;
        filtered.push(b.ifft2(&b.mul(&re, &w)?, &b.mul(&im, &w)?)?);
    }
    let cat = b.concat_channels(&[&filtered[0], x1, &filtered[1]])?;
    b.relu(&conv(b, p, "fusion", &fusion_spec(c), &cat)?)
}

/// The two similarity maps `S_0`, `S_2` against the base frame.
pub fn pfm_similarity_maps(x0: &Tensor, x1: &Tensor, x2: &Tensor) -> Result<[Tensor; 2]> {
    let phase = |x: &Tensor| -> Result<Tensor> { Ok(spectral::amp_phase(&spectral::fft2(x)?).1) };
    let p1 = phase(x1)?;
    Ok([
        spectral::phase_similarity(&phase(x0)?, &p1)?,
        spectral::phase_similarity(&phase(x2)?, &p1)?,
    ])
}
