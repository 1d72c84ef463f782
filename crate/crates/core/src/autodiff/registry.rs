//! Every differentiable primitive with a probe point, used to verify backward
//! rules by finite differences and, for linear maps, by the dot-product test.

use rand::Rng;

use super::gradcheck::{gradcheck, GradCheckOptions, GradReport};
use super::{Tape, Var};
use crate::backend::Backend;
use crate::error::Result;
use crate::random::{rand_tensor_with, rng};
use crate::tensor::{ConvSpec, Tensor};

/// How an op is linear, which decides the form of its adjoint test.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Linearity {
    Nonlinear,
    /// Linear in all inputs jointly.
    Joint,
    /// Linear in each listed input while the others are held fixed.
    PerInput(Vec<usize>),
}

type OpFn = Box<dyn Fn(&Tape, &[Var]) -> Result<Var> + Send + Sync>;

pub struct OpCase {
    pub name: &'static str,
    pub inputs: Vec<Vec<usize>>,
    pub linearity: Linearity,
    /// Keep sampled inputs at least this far from zero (kinks, phase singularity).
    pub min_abs: f64,
    pub f: OpFn,
}

impl OpCase {
    fn new(
        name: &'static str,
        inputs: Vec<Vec<usize>>,
        linearity: Linearity,
        f: impl Fn(&Tape, &[Var]) -> Result<Var> + Send + Sync + 'static,
    ) -> Self {
        Self {
            name,
            inputs,
            linearity,
            min_abs: 0.0,
            f: Box::new(f),
        }
    }

    fn away_from_zero(mut self, m: f64) -> Self {
        self.min_abs = m;
        self
    }

    pub fn sample_inputs(&self, seed: u64) -> Vec<Tensor> {
        let mut r = rng(seed);
        self.inputs
            .iter()
            .map(|shape| {
                let mut t = rand_tensor_with(shape, &mut r, -1.0, 1.0);
                if self.min_abs > 0.0 {
                    for v in t.data_mut() {
                        let sign = if *v < 0.0 { -1.0 } else { 1.0 };
                        *v = sign * (self.min_abs + (1.0 - self.min_abs) * v.abs());
                    }
                }
                t
            })
            .collect()
    }

    fn output_shape(&self, inputs: &[Tensor]) -> Result<Vec<usize>> {
        let tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
        let out = (self.f)(&tape, &vars)?;
        Ok(tape.value(out).shape().to_vec())
    }

    /// Gradcheck of `⟨f(x), r⟩` for a fixed random projection `r`.
    pub fn gradcheck(&self, seed: u64, opts: &GradCheckOptions) -> Result<GradReport> {
        let inputs = self.sample_inputs(seed);
        let shape = self.output_shape(&inputs)?;
        // scaled so the probe loss stays O(1) whatever the output size; roundoff in
        // the difference quotient then stays well below the 1e-8 error floor
        let n: usize = shape.iter().product();
        let proj = rand_tensor_with(&shape, &mut rng(seed ^ 0x5eed), -1.0, 1.0)
            .scale(1.0 / (n as f64).sqrt());
        let named: Vec<(String, Tensor)> = inputs
            .into_iter()
            .enumerate()
            .map(|(i, t)| (format!("{}.in{i}", self.name), t))
            .collect();
        gradcheck(
            |tape: &Tape, v: &[Var]| {
                let y = (self.f)(tape, v)?;
                let r = tape.constant(proj.clone());
                let prod = tape.mul(&y, &r)?;
                tape.sum(&prod)
            },
            &named,
            opts,
        )
    }

    /// Largest relative mismatch `|⟨Lx, y⟩ − ⟨x, Lᵀy⟩| / max(1, |⟨Lx, y⟩|)` over the
    /// op's linear arguments, or `None` for nonlinear ops. `L` is the linear part of
    /// the map, so a bias term does not disturb the test.
    pub fn adjoint_error(&self, seed: u64) -> Result<Option<f64>> {
        let groups: Vec<Vec<usize>> = match &self.linearity {
            Linearity::Nonlinear => return Ok(None),
            Linearity::Joint => vec![(0..self.inputs.len()).collect()],
            Linearity::PerInput(idx) => idx.iter().map(|&i| vec![i]).collect(),
        };
        let inputs = self.sample_inputs(seed);
        let y = rand_tensor_with(
            &self.output_shape(&inputs)?,
            &mut rng(seed ^ 0xad1),
            -1.0,
            1.0,
        );
        let mut worst: f64 = 0.0;
        for group in groups {
            let tape = Tape::new();
            let vars: Vec<Var> = inputs
                .iter()
                .enumerate()
                .map(|(i, t)| {
                    if group.contains(&i) {
                        tape.leaf(t.clone())
                    } else {
                        tape.constant(t.clone())
                    }
                })
                .collect();
            let out = (self.f)(&tape, &vars)?;
            // subtracting f at the origin of the group turns an affine map into its linear part
            let base = {
                let t0 = Tape::new();
                let v0: Vec<Var> = inputs
                    .iter()
                    .enumerate()
                    .map(|(i, t)| {
                        if group.contains(&i) {
                            t0.constant(Tensor::zeros(t.shape()))
                        } else {
                            t0.constant(t.clone())
                        }
                    })
                    .collect();
                let o = (self.f)(&t0, &v0)?;
                t0.value(o).dot(&y)?
            };
            let lhs = tape.value(out).dot(&y)? - base;
            let grads = tape.backward_with_seed(out, y.clone())?;
            let mut rhs = 0.0;
            for &i in &group {
                rhs += inputs[i].dot(&grads.get_or_zeros(vars[i], &inputs[i]))?;
            }
            worst = worst.max((lhs - rhs).abs() / lhs.abs().max(1.0));
        }
        Ok(Some(worst))
    }
}

/// The full list of registered primitives.
pub fn registry() -> Vec<OpCase> {
    use Linearity::*;
    let conv3 = ConvSpec::same(3, 3, 4);
    let strided = ConvSpec::same(3, 4, 2).with_stride(2);
    let grouped = ConvSpec::same(3, 6, 6).with_groups(3);
    let point = ConvSpec::pointwise(4, 3).without_bias();
    let dw = ConvSpec::depthwise(3, 3);
    let mut ops = vec![
        OpCase::new(
            "conv2d",
            vec![vec![6, 5, 3], conv3.weight_shape(), vec![4]],
            PerInput(vec![0, 1, 2]),
            move |t, v| t.conv2d(&v[0], &conv3, &v[1], Some(&v[2])),
        ),
        OpCase::new(
            "conv2d_stride2",
            vec![vec![6, 8, 4], strided.weight_shape(), vec![2]],
            PerInput(vec![0, 1, 2]),
            move |t, v| t.conv2d(&v[0], &strided, &v[1], Some(&v[2])),
        ),
        OpCase::new(
            "conv2d_grouped",
            vec![vec![5, 5, 6], grouped.weight_shape(), vec![6]],
            PerInput(vec![0, 1, 2]),
            move |t, v| t.conv2d(&v[0], &grouped, &v[1], Some(&v[2])),
        ),
        OpCase::new(
            "conv2d_depthwise",
            vec![vec![4, 6, 3], dw.weight_shape(), vec![3]],
            PerInput(vec![0, 1, 2]),
            move |t, v| t.conv2d(&v[0], &dw, &v[1], Some(&v[2])),
        ),
        OpCase::new(
            "conv2d_pointwise",
            vec![vec![4, 4, 4], point.weight_shape()],
            PerInput(vec![0, 1]),
            move |t, v| t.conv2d(&v[0], &point, &v[1], None),
        ),
        OpCase::new("add", vec![vec![3, 4, 2]; 2], Joint, |t, v| {
            t.add(&v[0], &v[1])
        }),
        OpCase::new("sub", vec![vec![3, 4, 2]; 2], Joint, |t, v| {
            t.sub(&v[0], &v[1])
        }),
        OpCase::new(
            "mul",
            vec![vec![3, 4, 2]; 2],
            PerInput(vec![0, 1]),
            |t, v| t.mul(&v[0], &v[1]),
        ),
        OpCase::new("scale", vec![vec![3, 4, 2]], Joint, |t, v| {
            t.scale(&v[0], -1.7)
        }),
        OpCase::new(
            "mul_scalar",
            vec![vec![3, 4, 2], vec![1]],
            PerInput(vec![0, 1]),
            |t, v| t.mul_scalar(&v[0], &v[1]),
        ),
        OpCase::new("relu", vec![vec![4, 4, 2]], Nonlinear, |t, v| t.relu(&v[0]))
            .away_from_zero(0.05),
        OpCase::new("gelu", vec![vec![4, 4, 2]], Nonlinear, |t, v| t.gelu(&v[0])),
        OpCase::new("sigmoid", vec![vec![4, 4, 2]], Nonlinear, |t, v| {
            t.sigmoid(&v[0])
        }),
        OpCase::new("softmax_rows", vec![vec![2, 5, 6]], Nonlinear, |t, v| {
            t.softmax_rows(&v[0])
        }),
        OpCase::new(
            "layer_norm",
            vec![vec![3, 3, 5], vec![5], vec![5]],
            Nonlinear,
            |t, v| t.layer_norm(&v[0], &v[1], &v[2]),
        ),
        OpCase::new("abs", vec![vec![4, 4, 2]], Nonlinear, |t, v| t.abs(&v[0]))
            .away_from_zero(0.05),
        OpCase::new("mean", vec![vec![3, 4, 2]], Joint, |t, v| t.mean(&v[0])),
        OpCase::new("sum", vec![vec![3, 4, 2]], Joint, |t, v| t.sum(&v[0])),
        OpCase::new("fft2", vec![vec![6, 5, 2]], Joint, |t, v| {
            let (re, im) = t.fft2(&v[0])?;
            t.concat_channels(&[&re, &im])
        }),
        OpCase::new("ifft2", vec![vec![4, 6, 2]; 2], Joint, |t, v| {
            t.ifft2(&v[0], &v[1])
        }),
        OpCase::new("ifft2_real", vec![vec![5, 4, 2]], Joint, |t, v| {
            t.ifft2_real(&v[0])
        }),
        OpCase::new(
            "phase_similarity",
            vec![vec![4, 5, 2]; 4],
            Nonlinear,
            |t, v| t.phase_similarity(&v[0], &v[1], &v[2], &v[3]),
        )
        .away_from_zero(0.2),
        OpCase::new("symmetrize_spectrum", vec![vec![5, 4, 2]], Joint, |t, v| {
            t.symmetrize_spectrum(&v[0])
        }),
        OpCase::new("haar_dwt", vec![vec![6, 4, 2]], Joint, |t, v| {
            let [a, b, c, d] = t.haar_dwt(&v[0])?;
            t.concat_channels(&[&a, &b, &c, &d])
        }),
        OpCase::new("haar_idwt", vec![vec![3, 2, 2]; 4], Joint, |t, v| {
            t.haar_idwt([&v[0], &v[1], &v[2], &v[3]])
        }),
        OpCase::new("window_partition", vec![vec![4, 6, 2]], Joint, |t, v| {
            t.window_partition(&v[0], 2)
        }),
        OpCase::new("window_merge", vec![vec![6, 4, 2]], Joint, |t, v| {
            t.window_merge(&v[0], 4, 6)
        }),
        OpCase::new("split_heads", vec![vec![2, 3, 6]], Joint, |t, v| {
            t.split_heads(&v[0], 3)
        }),
        OpCase::new("merge_heads", vec![vec![6, 3, 2]], Joint, |t, v| {
            t.merge_heads(&v[0], 3)
        }),
        OpCase::new(
            "bmm",
            vec![vec![2, 3, 4], vec![2, 4, 5]],
            PerInput(vec![0, 1]),
            |t, v| t.bmm(&v[0], &v[1]),
        ),
        OpCase::new(
            "bmm_nt",
            vec![vec![2, 3, 4], vec![2, 5, 4]],
            PerInput(vec![0, 1]),
            |t, v| t.bmm_nt(&v[0], &v[1]),
        ),
        OpCase::new(
            "add_rel_bias",
            vec![vec![4, 4, 4], vec![9, 2]],
            Joint,
            |t, v| t.add_rel_bias(&v[0], &v[1], 2, 2),
        ),
        OpCase::new(
            "concat_channels",
            vec![vec![3, 3, 2], vec![3, 3, 1], vec![3, 3, 3]],
            Joint,
            |t, v| t.concat_channels(&[&v[0], &v[1], &v[2]]),
        ),
        OpCase::new("slice_channels", vec![vec![3, 3, 5]], Joint, |t, v| {
            t.slice_channels(&v[0], 1, 3)
        }),
        OpCase::new("upsample_nearest", vec![vec![3, 2, 2]], Joint, |t, v| {
            t.upsample_nearest(&v[0])
        }),
        OpCase::new("reflect_pad", vec![vec![3, 4, 2]], Joint, |t, v| {
            t.reflect_pad(&v[0], 5, 7)
        }),
        OpCase::new("crop", vec![vec![5, 6, 2]], Joint, |t, v| {
            t.crop(&v[0], 3, 4)
        }),
    ];
    ops.shrink_to_fit();
    ops
}

/// Outcome of checking one registered op.
#[derive(Clone, Debug)]
pub struct OpCheck {
    pub name: &'static str,
    pub grad_rel_error: f64,
    pub adjoint_error: Option<f64>,
}

/// Runs gradcheck and, where applicable, the dot-product test on every op.
pub fn check_all(seed: u64) -> Result<Vec<OpCheck>> {
    let opts = GradCheckOptions {
        seed,
        ..Default::default()
    };
    let mut r = rng(seed);
    registry()
        .iter()
        .map(|op| {
            let s: u64 = r.gen();
            Ok(OpCheck {
                name: op.name,
                grad_rel_error: op.gradcheck(s, &opts)?.max_rel_error(),
                adjoint_error: op.adjoint_error(s)?,
            })
        })
        .collect()
}
