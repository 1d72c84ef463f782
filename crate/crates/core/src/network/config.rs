use crate::error::{Error, Result};

/// Architecture hyperparameters of the U-shaped restoration network.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    /// Feature width per level.
    pub channels: Vec<usize>,
    /// Transformer blocks per level, used on both the encoder and decoder side.
    pub blocks: Vec<usize>,
    pub heads: Vec<usize>,
    /// Attention window edge `M`.
    pub window: usize,
    /// AFFN expansion factor.
    pub gamma: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            channels: vec![32, 64, 96],
            blocks: vec![2, 2, 2],
            heads: vec![1, 2, 4],
            window: 8,
            gamma: 2.66,
        }
    }
}

impl ModelConfig {
    /// Desk-scale variant: widths `[8, 16, 24]`, window 4.
    pub fn tiny() -> Self {
        Self {
            channels: vec![8, 16, 24],
            window: 4,
            ..Self::default()
        }
    }

    pub fn levels(&self) -> usize {
        self.channels.len()
    }

    /// Spatial sizes must be multiples of this: each level halves the grid, the
    /// deepest wavelet attention halves it again, and windows tile what is left.
    pub fn size_multiple(&self) -> usize {
        (1 << self.levels()) * self.window
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.levels();
        let bad = |msg: String| Err(Error::Config(msg));
        if n == 0 {
            return bad("at least one level is required".into());
        }
        if self.blocks.len() != n || self.heads.len() != n {
            return bad(format!(
                "levels disagree: {} channel widths, {} block counts, {} head counts",
                n,
                self.blocks.len(),
                self.heads.len()
            ));
        }
        for (l, (&c, &h)) in self.channels.iter().zip(&self.heads).enumerate() {
            if c == 0 || h == 0 {
                return bad(format!("level {l}: channels and heads must be positive"));
            }
            if c % h != 0 {
                return bad(format!(
                    "level {l}: {c} channels not divisible by {h} heads"
                ));
            }
        }
        if self.window == 0 {
            return bad("window must be positive".into());
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return bad(format!(
                "expansion factor must be positive, got {}",
                self.gamma
            ));
        }
        Ok(())
    }
}
