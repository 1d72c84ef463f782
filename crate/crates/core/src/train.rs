//! Loss, optimizer, image-quality metrics and the single-burst overfit loop.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::autodiff::Tape;
use crate::backend::Backend;
use crate::error::{shape_err, Error, Result};
use crate::flicker::BurstTriplet;
use crate::network::{build_model, forward, infer, ModelConfig, ParamStore};
use crate::params::Scope;
use crate::tensor::Tensor;

/// Mean absolute difference.
pub fn l1_loss(pred: &Tensor, target: &Tensor) -> Result<f64> {
    pred.check_same_shape(target, "l1 loss")?;
    Ok(pred.zip_map(target, |a, b| (a - b).abs())?.mean())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment estimates per named parameter.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    moments: BTreeMap<String, (Tensor, Tensor)>,
}

impl AdamState {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            moments: BTreeMap::new(),
        }
    }

    /// First and second moments of `name`, if it has been updated.
    pub fn moments(&self, name: &str) -> Option<(&Tensor, &Tensor)> {
        self.moments.get(name).map(|(m, v)| (m, v))
    }

    /// One bias-corrected Adam update. Parameters without a gradient entry are
    /// treated as having a zero gradient.
    pub fn update(
        &mut self,
        params: &mut ParamStore,
        grads: &BTreeMap<String, Tensor>,
    ) -> Result<()> {
        for (name, g) in grads {
            match params.get(name) {
                Some(p) => p.check_same_shape(g, name)?,
                None => return shape_err(format!("gradient for unknown parameter `{name}`")),
            }
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for (name, p) in params.iter_mut() {
            let (m, v) = self
                .moments
                .entry(name.clone())
                .or_insert_with(|| (Tensor::zeros(p.shape()), Tensor::zeros(p.shape())));
            let g = grads.get(name);
            let pd = p.data_mut();
            for (i, ((mi, vi), pi)) in m
                .data_mut()
                .iter_mut()
                .zip(v.data_mut().iter_mut())
                .zip(pd.iter_mut())
                .enumerate()
            {
                let gi = g.map_or(0.0, |g| g.data()[i]);
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                *pi -= lr * (*mi / c1) / ((*vi / c2).sqrt() + eps);
            }
        }
        Ok(())
    }
}

fn check_metric_inputs(a: &Tensor, b: &Tensor) -> Result<(usize, usize, usize)> {
    a.check_same_shape(b, "metric")?;
    let dims = a.dims3()?;
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::NonFinite("metric input".into()));
    }
    Ok(dims)
}

/// Peak signal-to-noise ratio in dB over all channels; `+∞` for identical inputs.
pub fn psnr(a: &Tensor, b: &Tensor, peak: f64) -> Result<f64> {
    check_metric_inputs(a, b)?;
    let mse = a.zip_map(b, |x, y| (x - y) * (x - y))?.mean();
    Ok(if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    })
}

/// Formats a metric, writing infinities as `inf`.
pub fn format_metric(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else {
        format!("{v}")
    }
}

/// Rec. 601 luma of an RGB image, as H×W×1. Single-channel input passes through.
pub fn luma(img: &Tensor) -> Result<Tensor> {
    let (h, w, c) = img.dims3()?;
    match c {
        1 => Ok(img.clone()),
        3 => Ok(Tensor::from_fn_hwc(h, w, 1, |i, j, _| {
            0.299 * img.at3(i, j, 0) + 0.587 * img.at3(i, j, 1) + 0.114 * img.at3(i, j, 2)
        })),
        _ => shape_err(format!("luma needs 1 or 3 channels, got {c}")),
    }
}

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
pub fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let t: Vec<f64> = (0..size)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = t.iter().sum();
    t.into_iter().map(|v| v / s).collect()
}

/// Separable "valid" filtering of a single-channel image.
fn filter_valid(x: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut rows = vec![0.0; h * ow];
    for i in 0..h {
        for j in 0..ow {
            rows[i * ow + j] = taps
                .iter()
                .enumerate()
                .map(|(t, c)| c * x[i * w + j + t])
                .sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for i in 0..oh {
        for j in 0..ow {
            out[i * ow + j] = taps
                .iter()
                .enumerate()
                .map(|(t, c)| c * rows[(i + t) * ow + j])
                .sum();
        }
    }
    out
}

/// Mean structural similarity of the luma channels, with an 11×11 Gaussian window
/// (σ = 1.5) over every fully contained position and dynamic range 1.
pub fn ssim(a: &Tensor, b: &Tensor) -> Result<f64> {
    let (h, w, _) = check_metric_inputs(a, b)?;
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return shape_err(format!(
            "ssim needs at least {SSIM_WINDOW}×{SSIM_WINDOW}, got {h}×{w}"
        ));
    }
    let (ya, yb) = (luma(a)?, luma(b)?);
    let (x, y) = (ya.data(), yb.data());
    let taps = gaussian_taps(SSIM_WINDOW, SSIM_SIGMA);
    let prod = |f: &dyn Fn(f64, f64) -> f64| -> Vec<f64> {
        x.iter().zip(y).map(|(&p, &q)| f(p, q)).collect()
    };
    let mu_x = filter_valid(x, h, w, &taps);
    let mu_y = filter_valid(y, h, w, &taps);
    let xx = filter_valid(&prod(&|p, _| p * p), h, w, &taps);
    let yy = filter_valid(&prod(&|_, q| q * q), h, w, &taps);
    let xy = filter_valid(&prod(&|p, q| p * q), h, w, &taps);
    let (c1, c2) = ((SSIM_K1).powi(2), (SSIM_K2).powi(2));
    let n = mu_x.len();
    let total: f64 = (0..n)
        .map(|i| {
            let (mx, my) = (mu_x[i], mu_y[i]);
            let (sx, sy, sxy) = (xx[i] - mx * mx, yy[i] - my * my, xy[i] - mx * my);
            ((2.0 * mx * my + c1) * (2.0 * sxy + c2)) / ((mx * mx + my * my + c1) * (sx + sy + c2))
        })
        .sum();
    Ok(total / n as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub steps: usize,
    /// Seeds the parameter initialization.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            steps: 500,
            seed: 0,
        }
    }
}

/// Metrics of the parameters after `step` updates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvePoint {
    pub step: usize,
    pub l1: f64,
    /// PSNR of the clamped output against the clean frame.
    pub psnr: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ParamStore,
    /// `steps + 1` points: before each update, and after the last.
    pub curve: Vec<CurvePoint>,
}

fn clamp01(t: &Tensor) -> Tensor {
    t.map(|v| v.clamp(0.0, 1.0))
}

/// One traced forward/backward pass: the loss, the output and the gradient of
/// every parameter.
pub fn loss_and_grads(
    store: &ParamStore,
    cfg: &ModelConfig,
    burst: &BurstTriplet,
) -> Result<(f64, Tensor, BTreeMap<String, Tensor>)> {
    let tape = Tape::new();
    let vars = store.bind(&tape);
    let fv: Vec<_> = burst
        .frames
        .iter()
        .map(|f| tape.constant(f.clone()))
        .collect();
    let out = forward(&tape, &Scope::root(&vars), cfg, [&fv[0], &fv[1], &fv[2]])?;
    let diff = tape.sub(&out, &tape.constant(burst.clean.clone()))?;
    let loss = tape.mean(&tape.abs(&diff)?)?;
    let l1 = tape.value(loss).data()[0];
    let output = (*tape.value(out)).clone();
    if !l1.is_finite() {
        return Ok((l1, output, BTreeMap::new()));
    }
    let grads = tape.backward(loss)?;
    let g = vars
        .iter()
        .map(|(name, &v)| {
            let value = store.get(name).expect("bound from store");
            (name.clone(), grads.get_or_zeros(v, value))
        })
        .collect();
    Ok((l1, output, g))
}

/// Overfits a freshly initialized model to one burst with L1 loss and Adam.
/// `on_point` sees every curve point as it is produced.
pub fn train_overfit_with(
    burst: &BurstTriplet,
    cfg: &ModelConfig,
    tc: &TrainConfig,
    mut on_point: impl FnMut(&CurvePoint),
) -> Result<TrainOutcome> {
    for (i, f) in burst.frames.iter().enumerate() {
        f.check_same_shape(&burst.clean, &format!("frame {i}"))?;
        f.ensure_finite(&format!("frame {i}"))?;
    }
    let mut params = build_model(cfg, tc.seed)?;
    let mut adam = AdamState::new(AdamConfig {
        lr: tc.lr,
        ..AdamConfig::default()
    });
    let mut curve = Vec::with_capacity(tc.steps + 1);
    let mut record = |step: usize, l1: f64, out: &Tensor| -> Result<()> {
        if !l1.is_finite() {
            return Err(Error::Diverged { step });
        }
        let p = CurvePoint {
            step,
            l1,
            psnr: psnr(&clamp01(out), &burst.clean, 1.0)?,
        };
        on_point(&p);
        curve.push(p);
        Ok(())
    };
    for step in 0..tc.steps {
        let (l1, out, grads) = loss_and_grads(&params, cfg, burst)?;
        record(step, l1, &out)?;
        adam.update(&mut params, &grads)?;
    }
    let out = infer(&params, cfg, burst.frame_refs())?;
    let l1 = if out.is_finite() {
        l1_loss(&out, &burst.clean)?
    } else {
        f64::NAN
    };
    record(tc.steps, l1, &out)?;
    Ok(TrainOutcome { params, curve })
}

pub fn train_overfit(
    burst: &BurstTriplet,
    cfg: &ModelConfig,
    tc: &TrainConfig,
) -> Result<TrainOutcome> {
    train_overfit_with(burst, cfg, tc, |_| {})
}

/// CSV with header `step,l1,psnr`.
pub fn curves_csv(curve: &[CurvePoint]) -> String {
    let mut s = String::from("step,l1,psnr\n");
    for p in curve {
        writeln!(s, "{},{},{}", p.step, p.l1, format_metric(p.psnr)).expect("string write");
    }
    s
}

pub fn write_curves(path: &Path, curve: &[CurvePoint]) -> Result<()> {
    std::fs::write(path, curves_csv(curve)).map_err(|e| Error::io_at(path, e))?;
    Ok(())
}
