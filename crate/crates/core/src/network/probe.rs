use std::collections::BTreeMap;

use rand::Rng;

use super::{build_model, forward, ModelConfig, ParamStore};
use crate::autodiff::{gradcheck, GradCheckOptions, GradReport, Tape, Var};
use crate::backend::Backend;
use crate::error::Result;
use crate::params::Scope;
use crate::random::{rand_tensor, rng};
use crate::tensor::Tensor;

/// A store with every tensor perturbed, including the zero-initialized ones. The
/// head gets `head_scale` so gradients reaching deep layers stay well above the
/// finite-difference roundoff.
pub fn perturbed_model(
    cfg: &ModelConfig,
    seed: u64,
    scale: f64,
    head_scale: f64,
) -> Result<ParamStore> {
    let mut store = build_model(cfg, seed)?;
    let mut r = rng(seed + 100);
    for (name, t) in store.iter_mut() {
        let s = if name.starts_with("head.") {
            head_scale
        } else {
            scale
        };
        for v in t.data_mut() {
            *v += r.gen_range(-s..s);
        }
    }
    Ok(store)
}

/// Finite-difference check of the L1 loss of the whole tiny network (window 2,
/// 16×16 burst) against a constant target, sampling `coords` entries per tensor.
pub fn tiny_network_gradcheck(coords: usize) -> Result<GradReport> {
    let mut cfg = ModelConfig::tiny();
    cfg.window = 2;
    let mut store = perturbed_model(&cfg, 21, 0.05, 0.3)?;
    // keep the fusion ReLU away from its kink
    if let Some(fb) = store.get_mut("pfm.fusion.bias") {
        fb.data_mut().iter_mut().for_each(|v| *v += 1.0);
    }
    // the unnormalized autocorrelation makes the loss sharply curved in α and β,
    // so they stay near their zero init
    for (name, t) in store.iter_mut() {
        if name.ends_with(".alpha") || name.ends_with(".beta") {
            t.data_mut().iter_mut().for_each(|v| *v *= 0.04);
        }
    }
    let frames: [Tensor; 3] =
        std::array::from_fn(|t| rand_tensor(&[16, 16, 3], 22 + t as u64).map(|v| 0.5 + 0.4 * v));
    let target = Tensor::full(&[16, 16, 3], 2.0);
    let names: Vec<String> = store.names().map(String::from).collect();
    let named: Vec<(String, Tensor)> = store.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
    gradcheck(
        |t: &Tape, v: &[Var]| {
            let map: BTreeMap<String, Var> = names.iter().cloned().zip(v.iter().copied()).collect();
            let fv: Vec<Var> = frames.iter().map(|x| t.constant(x.clone())).collect();
            let out = forward(t, &Scope::root(&map), &cfg, [&fv[0], &fv[1], &fv[2]])?;
            let d = t.sub(&out, &t.constant(target.clone()))?;
            t.mean(&t.abs(&d)?)
        },
        &named,
        &GradCheckOptions {
            // key biases have an exactly zero gradient (softmax ignores a per-row
            // shift), so the numeric side is pure roundoff divided by 2h
            step: 1e-4,
            max_coords: coords,
            tolerance: 1e-3,
            seed: 5,
        },
    )
}
