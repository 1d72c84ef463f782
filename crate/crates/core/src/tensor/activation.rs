use std::f64::consts::{FRAC_1_SQRT_2, PI};

use super::Tensor;
use crate::error::{shape_err, Result};

pub const LAYER_NORM_EPS: f64 = 1e-5;

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

#[inline]
pub fn gelu_scalar(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * FRAC_1_SQRT_2))
}

/// d/dx of the exact (erf) GELU: Φ(x) + x·φ(x).
#[inline]
pub fn gelu_grad_scalar(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x * FRAC_1_SQRT_2));
    let pdf = (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
    cdf + x * pdf
}

pub fn gelu(x: &Tensor) -> Tensor {
    x.map(gelu_scalar)
}

#[inline]
pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    x.map(sigmoid_scalar)
}

fn last_dim(x: &Tensor) -> usize {
    *x.shape().last().expect("tensor rank >= 1")
}

/// Softmax over the last axis.
pub fn softmax_rows(x: &Tensor) -> Tensor {
    let n = last_dim(x);
    let mut out = x.clone();
    for row in out.data_mut().chunks_exact_mut(n) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Vector-Jacobian product of softmax given its output `y`: `y ⊙ (g − ⟨g, y⟩)` per row.
pub fn softmax_rows_backward(y: &Tensor, grad: &Tensor) -> Result<Tensor> {
    y.check_same_shape(grad, "softmax backward")?;
    let n = last_dim(y);
    let mut out = grad.clone();
    for (orow, yrow) in out
        .data_mut()
        .chunks_exact_mut(n)
        .zip(y.data().chunks_exact(n))
    {
        let dot: f64 = orow.iter().zip(yrow).map(|(g, y)| g * y).sum();
        for (o, &y) in orow.iter_mut().zip(yrow) {
            *o = y * (*o - dot);
        }
    }
    Ok(out)
}

fn check_norm_params(x: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<usize> {
    let c = last_dim(x);
    if weight.shape() != [c] || bias.shape() != [c] {
        return shape_err(format!(
            "layer norm params {:?}/{:?} do not match {c} channels",
            weight.shape(),
            bias.shape()
        ));
    }
    Ok(c)
}

/// Per-pixel normalization across the channel axis with affine weight and bias.
pub fn layer_norm(x: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let c = check_norm_params(x, weight, bias)?;
    let mut out = x.clone();
    for px in out.data_mut().chunks_exact_mut(c) {
        let mean = px.iter().sum::<f64>() / c as f64;
        let var = px.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
        let rstd = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        for (k, v) in px.iter_mut().enumerate() {
            *v = (*v - mean) * rstd * weight.data()[k] + bias.data()[k];
        }
    }
    Ok(out)
}

/// Returns `(d input, d weight, d bias)`.
pub fn layer_norm_backward(
    x: &Tensor,
    weight: &Tensor,
    grad: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    x.check_same_shape(grad, "layer norm backward")?;
    let c = last_dim(x);
    let mut gx = vec![0.0; x.len()];
    let mut gw = vec![0.0; c];
    let mut gb = vec![0.0; c];
    let mut xhat = vec![0.0; c];
    let mut dxhat = vec![0.0; c];
    for ((px, gpx), gxp) in x
        .data()
        .chunks_exact(c)
        .zip(grad.data().chunks_exact(c))
        .zip(gx.chunks_exact_mut(c))
    {
        let mean = px.iter().sum::<f64>() / c as f64;
        let var = px.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
        let rstd = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        for k in 0..c {
            xhat[k] = (px[k] - mean) * rstd;
            dxhat[k] = gpx[k] * weight.data()[k];
            gw[k] += gpx[k] * xhat[k];
            gb[k] += gpx[k];
        }
        let m1 = dxhat.iter().sum::<f64>() / c as f64;
        let m2 = dxhat.iter().zip(&xhat).map(|(a, b)| a * b).sum::<f64>() / c as f64;
        for k in 0..c {
            gxp[k] = rstd * (dxhat[k] - m1 - xhat[k] * m2);
        }
    }
    Ok((
        Tensor::new(x.shape().to_vec(), gx)?,
        Tensor::new(vec![c], gw)?,
        Tensor::new(vec![c], gb)?,
    ))
}
