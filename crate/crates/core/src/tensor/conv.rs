use super::Tensor;
use crate::error::{shape_err, Error, Result};

/// Geometry of a 2-D convolution. Weights are stored `[Cout, k, k, Cin/groups]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub has_bias: bool,
}

impl ConvSpec {
    /// Stride-1 convolution with "same" padding and a bias.
    pub fn same(kernel: usize, in_channels: usize, out_channels: usize) -> Self {
        Self {
            kernel,
            stride: 1,
            padding: kernel / 2,
            groups: 1,
            in_channels,
            out_channels,
            has_bias: true,
        }
    }

    pub fn pointwise(in_channels: usize, out_channels: usize) -> Self {
        Self::same(1, in_channels, out_channels)
    }

    pub fn depthwise(kernel: usize, channels: usize) -> Self {
        Self::same(kernel, channels, channels).with_groups(channels)
    }

    pub fn with_groups(mut self, groups: usize) -> Self {
        self.groups = groups;
        self
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn without_bias(mut self) -> Self {
        self.has_bias = false;
        self
    }

    pub fn weight_shape(&self) -> Vec<usize> {
        vec![
            self.out_channels,
            self.kernel,
            self.kernel,
            self.in_channels / self.groups,
        ]
    }

    pub fn fan_in(&self) -> usize {
        self.kernel * self.kernel * self.in_channels / self.groups
    }

    pub fn param_count(&self) -> usize {
        self.weight_shape().iter().product::<usize>()
            + if self.has_bias { self.out_channels } else { 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel == 0 || self.stride == 0 || self.groups == 0 {
            return Err(Error::Config(format!("degenerate conv spec {self:?}")));
        }
        if !self.in_channels.is_multiple_of(self.groups)
            || !self.out_channels.is_multiple_of(self.groups)
        {
            return Err(Error::Config(format!(
                "channels {}→{} not divisible by groups {}",
                self.in_channels, self.out_channels, self.groups
            )));
        }
        Ok(())
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let (hp, wp) = (h + 2 * self.padding, w + 2 * self.padding);
        if hp < self.kernel || wp < self.kernel {
            return shape_err(format!(
                "input {h}×{w} (padded {hp}×{wp}) smaller than kernel {}",
                self.kernel
            ));
        }
        Ok((
            (hp - self.kernel) / self.stride + 1,
            (wp - self.kernel) / self.stride + 1,
        ))
    }

    fn check(
        &self,
        x: &Tensor,
        weight: &Tensor,
        bias: Option<&Tensor>,
    ) -> Result<(usize, usize, usize, usize, usize)> {
        self.validate()?;
        let (h, w, c) = x.dims3()?;
        if c != self.in_channels {
            return shape_err(format!(
                "conv expects {} input channels, got {c}",
                self.in_channels
            ));
        }
        if weight.shape() != self.weight_shape() {
            return shape_err(format!(
                "conv weight shape {:?}, expected {:?}",
                weight.shape(),
                self.weight_shape()
            ));
        }
        match (bias, self.has_bias) {
            (Some(b), true) if b.shape() == [self.out_channels] => {}
            (None, false) => {}
            (Some(b), true) => {
                return shape_err(format!(
                    "conv bias shape {:?}, expected [{}]",
                    b.shape(),
                    self.out_channels
                ))
            }
            (Some(_), false) => return shape_err("conv spec has no bias but one was given"),
            (None, true) => return shape_err("conv spec requires a bias"),
        }
        let (ho, wo) = self.output_hw(h, w)?;
        Ok((h, w, ho, wo, c))
    }

    /// Iterates over every (output pixel, kernel tap) pair whose input tap lies inside
    /// the image, calling `f(out_pixel, in_pixel, ky, kx)`.
    #[inline]
    fn for_each_tap(
        &self,
        h: usize,
        w: usize,
        ho: usize,
        wo: usize,
        mut f: impl FnMut(usize, usize, usize, usize),
    ) {
        let (k, s, p) = (self.kernel, self.stride, self.padding as isize);
        for oy in 0..ho {
            for ox in 0..wo {
                let opix = oy * wo + ox;
                for ky in 0..k {
                    let iy = (oy * s + ky) as isize - p;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..k {
                        let ix = (ox * s + kx) as isize - p;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        f(opix, iy as usize * w + ix as usize, ky, kx);
                    }
                }
            }
        }
    }
}

impl ConvSpec {
    fn is_depthwise(&self) -> bool {
        self.in_channels == self.groups && self.out_channels == self.groups
    }
}

/// Weight reordered to `[k, k, groups, Cin/groups, Cout/groups]` so the innermost
/// loop runs over contiguous output channels.
fn transpose_weight(spec: &ConvSpec, weight: &Tensor) -> Vec<f64> {
    let (k, g) = (spec.kernel, spec.groups);
    let (cig, cog) = (spec.in_channels / g, spec.out_channels / g);
    let wd = weight.data();
    let mut wt = vec![0.0; wd.len()];
    for co in 0..spec.out_channels {
        let (grp, col) = (co / cog, co % cog);
        for ky in 0..k {
            for kx in 0..k {
                for ci in 0..cig {
                    let src = ((co * k + ky) * k + kx) * cig + ci;
                    let dst = (((ky * k + kx) * g + grp) * cig + ci) * cog + col;
                    wt[dst] = wd[src];
                }
            }
        }
    }
    wt
}

/// Grouped 2-D cross-correlation with zero padding.
pub fn conv2d(
    x: &Tensor,
    spec: &ConvSpec,
    weight: &Tensor,
    bias: Option<&Tensor>,
) -> Result<Tensor> {
    let (h, w, ho, wo, cin) = spec.check(x, weight, bias)?;
    let cout = spec.out_channels;
    let (cig, cog, k) = (cin / spec.groups, cout / spec.groups, spec.kernel);
    let mut out = vec![0.0; ho * wo * cout];
    if let Some(b) = bias {
        for px in out.chunks_exact_mut(cout) {
            px.copy_from_slice(b.data());
        }
    }
    let xd = x.data();
    let wt = transpose_weight(spec, weight);
    let depthwise = spec.is_depthwise();
    spec.for_each_tap(h, w, ho, wo, |opix, ipix, ky, kx| {
        let xpix = &xd[ipix * cin..(ipix + 1) * cin];
        let opx = &mut out[opix * cout..(opix + 1) * cout];
        let tap = (ky * k + kx) * cin * cog;
        if depthwise {
            for ((o, a), b) in opx.iter_mut().zip(xpix).zip(&wt[tap..tap + cin]) {
                *o += a * b;
            }
            return;
        }
        for g in 0..spec.groups {
            let og = &mut opx[g * cog..(g + 1) * cog];
            for ci in 0..cig {
                let a = xpix[g * cig + ci];
                let off = tap + (g * cig + ci) * cog;
                for (o, b) in og.iter_mut().zip(&wt[off..off + cog]) {
                    *o += a * b;
                }
            }
        }
    });
    Tensor::new(vec![ho, wo, cout], out)
}

/// Adjoint of [`conv2d`] with respect to its input.
pub fn conv2d_backward_input(
    grad_out: &Tensor,
    spec: &ConvSpec,
    weight: &Tensor,
    in_h: usize,
    in_w: usize,
) -> Result<Tensor> {
    let (ho, wo) = spec.output_hw(in_h, in_w)?;
    if grad_out.shape() != [ho, wo, spec.out_channels] {
        return shape_err(format!(
            "conv grad shape {:?}, expected [{ho}, {wo}, {}]",
            grad_out.shape(),
            spec.out_channels
        ));
    }
    let (cin, cout) = (spec.in_channels, spec.out_channels);
    let (cig, cog, k) = (cin / spec.groups, cout / spec.groups, spec.kernel);
    let mut gx = vec![0.0; in_h * in_w * cin];
    let (gd, wd) = (grad_out.data(), weight.data());
    let depthwise = spec.is_depthwise();
    let wt = if depthwise {
        transpose_weight(spec, weight)
    } else {
        Vec::new()
    };
    spec.for_each_tap(in_h, in_w, ho, wo, |opix, ipix, ky, kx| {
        let gpx = &gd[opix * cout..(opix + 1) * cout];
        let gxp = &mut gx[ipix * cin..(ipix + 1) * cin];
        if depthwise {
            let tap = (ky * k + kx) * cin;
            for ((a, g), b) in gxp.iter_mut().zip(gpx).zip(&wt[tap..tap + cin]) {
                *a += g * b;
            }
            return;
        }
        for g in 0..spec.groups {
            let gxs = &mut gxp[g * cig..(g + 1) * cig];
            for co in g * cog..(g + 1) * cog {
                let go = gpx[co];
                if go == 0.0 {
                    continue;
                }
                let off = ((co * k + ky) * k + kx) * cig;
                for (a, b) in gxs.iter_mut().zip(&wd[off..off + cig]) {
                    *a += go * b;
                }
            }
        }
    });
    Tensor::new(vec![in_h, in_w, cin], gx)
}

/// Gradients of [`conv2d`] with respect to weight and (if present) bias.
pub fn conv2d_backward_weight(
    x: &Tensor,
    grad_out: &Tensor,
    spec: &ConvSpec,
) -> Result<(Tensor, Option<Tensor>)> {
    let (h, w, cin) = x.dims3()?;
    let (ho, wo) = spec.output_hw(h, w)?;
    let cout = spec.out_channels;
    if grad_out.shape() != [ho, wo, cout] {
        return shape_err("conv grad shape mismatch");
    }
    let (cig, cog, k) = (cin / spec.groups, cout / spec.groups, spec.kernel);
    let mut gw = vec![0.0; spec.weight_shape().iter().product()];
    let (xd, gd) = (x.data(), grad_out.data());
    if spec.is_depthwise() {
        // accumulate as [k, k, C] and reorder to [C, k, k, 1] at the end
        let mut gt = vec![0.0; gw.len()];
        spec.for_each_tap(h, w, ho, wo, |opix, ipix, ky, kx| {
            let tap = (ky * k + kx) * cin;
            let xpix = &xd[ipix * cin..(ipix + 1) * cin];
            let gpx = &gd[opix * cout..(opix + 1) * cout];
            for ((a, g), b) in gt[tap..tap + cin].iter_mut().zip(gpx).zip(xpix) {
                *a += g * b;
            }
        });
        for c in 0..cin {
            for t in 0..k * k {
                gw[c * k * k + t] = gt[t * cin + c];
            }
        }
    } else {
        spec.for_each_tap(h, w, ho, wo, |opix, ipix, ky, kx| {
            let xpix = &xd[ipix * cin..(ipix + 1) * cin];
            let gpx = &gd[opix * cout..(opix + 1) * cout];
            for g in 0..spec.groups {
                let xs = &xpix[g * cig..(g + 1) * cig];
                for co in g * cog..(g + 1) * cog {
                    let go = gpx[co];
                    if go == 0.0 {
                        continue;
                    }
                    let off = ((co * k + ky) * k + kx) * cig;
                    for (a, b) in gw[off..off + cig].iter_mut().zip(xs) {
                        *a += go * b;
                    }
                }
            }
        });
    }
    let gb = spec.has_bias.then(|| {
        let mut gb = vec![0.0; cout];
        for px in gd.chunks_exact(cout) {
            for (a, b) in gb.iter_mut().zip(px) {
                *a += b;
            }
        }
        Tensor::new(vec![cout], gb).expect("bias grad shape")
    });
    Ok((Tensor::new(spec.weight_shape(), gw)?, gb))
}
