//! Exact multiply-accumulate counts for plain window attention and the wavelet
//! variant at the same input shape.

use crate::error::{shape_err, Result};

/// MACs of one attention evaluation on an `n`-pixel grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AttentionFlops {
    /// Q, K and V 1×1 projections: `3·n·C²`.
    pub projections: u64,
    /// `QKᵀ` inside every window: `n·M²·C`.
    pub scores: u64,
    /// Attention-weighted sum of values: `n·M²·C`.
    pub weighted_sum: u64,
}

impl AttentionFlops {
    fn on_grid(n: u64, c: u64, m: u64) -> Self {
        Self {
            projections: 3 * n * c * c,
            scores: n * m * m * c,
            weighted_sum: n * m * m * c,
        }
    }

    pub fn core(&self) -> u64 {
        self.projections + self.scores + self.weighted_sum
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FlopReport {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub window: usize,
    pub heads: usize,
    /// Window attention on the full-resolution grid.
    pub wmha: AttentionFlops,
    /// Window attention on the `LL` grid (half resolution in each axis).
    pub wdam: AttentionFlops,
    /// The two depthwise 3×3 kernels producing the directional map.
    pub modulation: u64,
    /// Forward plus inverse Haar transform (4 MACs per coefficient each way).
    pub wavelet: u64,
    /// 3×3 conv over the three high bands.
    pub high_band: u64,
    /// Output 1×1 projection, identical for both variants.
    pub output_projection: u64,
}

impl FlopReport {
    /// `core(WDAM) / core(W-MHA)`.
    pub fn core_ratio(&self) -> f64 {
        self.wdam.core() as f64 / self.wmha.core() as f64
    }

    /// Ratio once the directional-map conv is charged to the wavelet variant.
    pub fn block_ratio(&self) -> f64 {
        (self.wdam.core() + self.modulation) as f64 / self.wmha.core() as f64
    }
}

pub fn flops_report(
    height: usize,
    width: usize,
    channels: usize,
    window: usize,
    heads: usize,
) -> Result<FlopReport> {
    let valid = height.is_multiple_of(2)
        && width.is_multiple_of(2)
        && window > 0
        && height.is_multiple_of(window)
        && width.is_multiple_of(window)
        && (height / 2).is_multiple_of(window)
        && (width / 2).is_multiple_of(window)
        && heads > 0
        && channels.is_multiple_of(heads);
    if !valid {
        return shape_err(format!(
            "no valid attention layout for {height}×{width}×{channels}, window {window}, {heads} heads"
        ));
    }
    let (n, c, m) = ((height * width) as u64, channels as u64, window as u64);
    let quarter = n / 4;
    Ok(FlopReport {
        height,
        width,
        channels,
        window,
        heads,
        wmha: AttentionFlops::on_grid(n, c, m),
        wdam: AttentionFlops::on_grid(quarter, c, m),
        modulation: quarter * 9 * 2 * c,
        wavelet: 2 * 4 * n * c,
        high_band: quarter * 9 * (3 * c) * (3 * c),
        output_projection: n * c * c,
    })
}
