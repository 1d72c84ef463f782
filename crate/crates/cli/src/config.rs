//! Flat `key=value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Every key is optional:
//!
//! | key | default |
//! |-----|---------|
//! | `ac_frequency` | 50 (Hz) |
//! | `gamma_w` | 2 |
//! | `exposure_time` | 0.001 (s) |
//! | `row_readout_time` | 0.0001 (s per line) |
//! | `phases` | `0,2.0943951,4.1887902` (radians, three values) |
//! | `orientation` | `horizontal` |
//! | `min_gain` | 0 |
//! | `noise_sigma` | 0 |
//! | `model.channels` | `8,16,24` |
//! | `model.blocks` | `2,2,2` |
//! | `model.heads` | `1,2,4` |
//! | `model.window` | 4 |
//! | `model.gamma` | 2.66 |
//! | `train.lr` | 0.0001 |
//! | `train.steps` | 500 |
//! | `seed` | 0 |

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use deflicker::flicker::FlickerParams;
use deflicker::network::ModelConfig;
use deflicker::train::TrainConfig;
use deflicker::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct CliConfig {
    pub flicker: FlickerParams,
    pub noise_sigma: f64,
    pub model: ModelConfig,
    pub lr: f64,
    pub steps: usize,
    pub seed: u64,
}

impl Default for CliConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        Self {
            flicker: FlickerParams::default(),
            noise_sigma: 0.0,
            model: ModelConfig::tiny(),
            lr: train.lr,
            steps: train.steps,
            seed: train.seed,
        }
    }
}

impl CliConfig {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            lr: self.lr,
            steps: self.steps,
            seed: self.seed,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?, path)
    }

    /// Parses config text; `origin` only labels error messages.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let err = |msg: String| Error::Parse {
                path: origin.to_path_buf(),
                line,
                msg,
            };
            let s = raw.trim();
            if s.is_empty() || s.starts_with('#') {
                continue;
            }
            let (key, value) = s
                .split_once('=')
                .ok_or_else(|| err(format!("expected key=value, got {s:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(err(format!("duplicate key {key:?}")));
            }
            cfg.set(key, value).map_err(err)?;
        }
        cfg.flicker.validate()?;
        cfg.model.validate()?;
        if !(cfg.noise_sigma.is_finite() && cfg.noise_sigma >= 0.0) {
            return Err(Error::Config(format!(
                "noise_sigma must be non-negative, got {}",
                cfg.noise_sigma
            )));
        }
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let fp = &mut self.flicker;
        match key {
            "ac_frequency" => fp.ac_frequency = scalar(key, value)?,
            "gamma_w" => fp.gamma_w = scalar(key, value)?,
            "exposure_time" => fp.exposure_time = scalar(key, value)?,
            "row_readout_time" => fp.row_readout_time = scalar(key, value)?,
            "phases" => {
                let v: Vec<f64> = list(key, value)?;
                fp.phase_offsets = v
                    .try_into()
                    .map_err(|v: Vec<f64>| format!("phases needs 3 values, got {}", v.len()))?;
            }
            "orientation" => {
                fp.orientation = value.parse().map_err(|_| {
                    format!("orientation must be horizontal or vertical, got {value:?}")
                })?
            }
            "min_gain" => fp.min_gain = scalar(key, value)?,
            "noise_sigma" => self.noise_sigma = scalar(key, value)?,
            "model.channels" => self.model.channels = list(key, value)?,
            "model.blocks" => self.model.blocks = list(key, value)?,
            "model.heads" => self.model.heads = list(key, value)?,
            "model.window" => self.model.window = scalar(key, value)?,
            "model.gamma" => self.model.gamma = scalar(key, value)?,
            "train.lr" => self.lr = scalar(key, value)?,
            "train.steps" => self.steps = scalar(key, value)?,
            "seed" => self.seed = scalar(key, value)?,
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }
}

fn scalar<T: FromStr>(key: &str, value: &str) -> Result<T, String> {
    value
        .parse()
        .map_err(|_| format!("invalid value {value:?} for {key}"))
}

fn list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, String> {
    value.split(',').map(|v| scalar(key, v.trim())).collect()
}

/// Loads `path`, or the defaults when no file is given.
pub fn load_or_default(path: Option<&PathBuf>) -> Result<CliConfig> {
    path.map_or_else(|| Ok(CliConfig::default()), |p| CliConfig::load(p))
}
