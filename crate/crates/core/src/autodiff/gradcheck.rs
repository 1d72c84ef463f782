use rand::seq::index::sample;

use super::{Tape, Var};
use crate::error::{Error, Result};
use crate::random::rng;
use crate::tensor::Tensor;

/// `|a − n| / max(|a|, |n|, 1e-8)`.
pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    pub step: f64,
    /// Coordinates probed per parameter; larger tensors are subsampled.
    pub max_coords: usize,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            max_coords: 200,
            tolerance: 1e-4,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ParamReport {
    pub name: String,
    pub max_rel_error: f64,
    pub coords: usize,
    pub passed: bool,
}

#[derive(Clone, Debug)]
pub struct GradReport {
    pub step: f64,
    pub tolerance: f64,
    pub params: Vec<ParamReport>,
}

impl GradReport {
    pub fn max_rel_error(&self) -> f64 {
        self.params
            .iter()
            .map(|p| p.max_rel_error)
            .fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.params.iter().all(|p| p.passed)
    }

    pub fn worst(&self) -> Option<&ParamReport> {
        self.params
            .iter()
            .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }
}

fn eval_scalar<F>(f: &F, params: &[(String, Tensor)]) -> Result<f64>
where
    F: Fn(&Tape, &[Var]) -> Result<Var>,
{
    let tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|(_, t)| tape.leaf(t.clone())).collect();
    let out = f(&tape, &vars)?;
    let v = tape.value(out);
    if v.shape() != [1] {
        return Err(Error::Autodiff(format!(
            "gradcheck needs a scalar function, got {:?}",
            v.shape()
        )));
    }
    Ok(v.data()[0])
}

/// Compares reverse-mode gradients of the scalar function `f` against central
/// differences at `params`.
pub fn gradcheck<F>(
    f: F,
    params: &[(String, Tensor)],
    opts: &GradCheckOptions,
) -> Result<GradReport>
where
    F: Fn(&Tape, &[Var]) -> Result<Var>,
{
    let tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|(_, t)| tape.leaf(t.clone())).collect();
    let loss = f(&tape, &vars)?;
    let grads = tape.backward(loss)?;
    let analytic: Vec<Tensor> = vars
        .iter()
        .zip(params)
        .map(|(&v, (_, t))| grads.get_or_zeros(v, t))
        .collect();
    drop(grads);
    drop(tape);

    let mut r = rng(opts.seed);
    let mut probe = params.to_vec();
    let mut reports = Vec::with_capacity(params.len());
    for (pi, (name, value)) in params.iter().enumerate() {
        let n = value.len();
        let coords: Vec<usize> = if n <= opts.max_coords {
            (0..n).collect()
        } else {
            let mut c = sample(&mut r, n, opts.max_coords).into_vec();
            c.sort_unstable();
            c
        };
        let mut worst: f64 = 0.0;
        for &k in &coords {
            let orig = value.data()[k];
            probe[pi].1.data_mut()[k] = orig + opts.step;
            let plus = eval_scalar(&f, &probe)?;
            probe[pi].1.data_mut()[k] = orig - opts.step;
            let minus = eval_scalar(&f, &probe)?;
            probe[pi].1.data_mut()[k] = orig;
            let numeric = (plus - minus) / (2.0 * opts.step);
            worst = worst.max(rel_error(analytic[pi].data()[k], numeric));
        }
        reports.push(ParamReport {
            name: name.clone(),
            max_rel_error: worst,
            coords: coords.len(),
            passed: worst < opts.tolerance,
        });
    }
    Ok(GradReport {
        step: opts.step,
        tolerance: opts.tolerance,
        params: reports,
    })
}
