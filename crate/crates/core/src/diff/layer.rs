//! Layer kernels. Every kernel works on a single sample; batching and
//! gradient accumulation live in [`super::model`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A feed-forward layer. Shapes are per sample, without the batch axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Layer {
    /// Affine map `y = W x + b` with `W` stored `[outputs, inputs]`.
    Dense {
        inputs: usize,
        outputs: usize,
    },
    /// Bias-free linear map `y = W x`, `W` stored `[outputs, inputs]`.
    Linear {
        inputs: usize,
        outputs: usize,
    },
    /// 3×3 convolution, stride 1, zero padding 1 (spatial size preserved).
    /// Weight stored `[out_channels, in_channels, 3, 3]`.
    Conv3x3 {
        in_channels: usize,
        out_channels: usize,
        height: usize,
        width: usize,
    },
    /// Non-overlapping 2×2 average pooling.
    AvgPool2 {
        channels: usize,
        height: usize,
        width: usize,
    },
    Relu,
    Flatten,
}

impl Layer {
    /// Output shape for a given input shape, or a shape error.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let numel: usize = input.iter().product();
        match *self {
            Layer::Dense { inputs, outputs } | Layer::Linear { inputs, outputs } => {
                expect_shape(input, &[inputs])?;
                Ok(vec![outputs])
            }
            Layer::Conv3x3 {
                in_channels,
                out_channels,
                height,
                width,
            } => {
                expect_shape(input, &[in_channels, height, width])?;
                Ok(vec![out_channels, height, width])
            }
            Layer::AvgPool2 {
                channels,
                height,
                width,
            } => {
                expect_shape(input, &[channels, height, width])?;
                if height % 2 != 0 || width % 2 != 0 {
                    return Err(Error::InvalidArgument(format!(
                        "avg-pool needs even spatial dims, got {height}x{width}"
                    )));
                }
                Ok(vec![channels, height / 2, width / 2])
            }
            Layer::Relu => Ok(input.to_vec()),
            Layer::Flatten => Ok(vec![numel]),
        }
    }

    /// `(weight shape, bias shape, fan_in, fan_out)` for parameterized layers.
    pub fn param_shapes(&self) -> Option<(Vec<usize>, Option<Vec<usize>>, usize, usize)> {
        match *self {
            Layer::Dense { inputs, outputs } => Some((vec![outputs, inputs], Some(vec![outputs]), inputs, outputs)),
            Layer::Linear { inputs, outputs } => Some((vec![outputs, inputs], None, inputs, outputs)),
            Layer::Conv3x3 {
                in_channels,
                out_channels,
                ..
            } => Some((
                vec![out_channels, in_channels, 3, 3],
                Some(vec![out_channels]),
                in_channels * 9,
                out_channels * 9,
            )),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Layer::Dense { .. } => "dense",
            Layer::Linear { .. } => "linear",
            Layer::Conv3x3 { .. } => "conv3x3",
            Layer::AvgPool2 { .. } => "avgpool2",
            Layer::Relu => "relu",
            Layer::Flatten => "flatten",
        }
    }

    /// Forward pass. `weight`/`bias` are empty for parameter-free layers.
    pub(crate) fn forward(&self, x: &[f64], weight: &[f64], bias: &[f64], out: &mut Vec<f64>) {
        out.clear();
        match *self {
            Layer::Dense { inputs, outputs } | Layer::Linear { inputs, outputs } => {
                if bias.is_empty() {
                    out.resize(outputs, 0.0);
                } else {
                    out.extend_from_slice(bias);
                }
                for (o, y) in out.iter_mut().enumerate().take(outputs) {
                    let row = &weight[o * inputs..(o + 1) * inputs];
                    *y += dot(row, x);
                }
            }
            Layer::Conv3x3 {
                in_channels,
                out_channels,
                height,
                width,
            } => {
                let plane = height * width;
                out.resize(out_channels * plane, 0.0);
                for co in 0..out_channels {
                    let y = &mut out[co * plane..(co + 1) * plane];
                    y.fill(bias[co]);
                    for ci in 0..in_channels {
                        let xin = &x[ci * plane..(ci + 1) * plane];
                        let k = &weight[(co * in_channels + ci) * 9..(co * in_channels + ci + 1) * 9];
                        conv_plane_accumulate(xin, k, y, height, width);
                    }
                }
            }
            Layer::AvgPool2 {
                channels,
                height,
                width,
            } => {
                let (oh, ow) = (height / 2, width / 2);
                out.resize(channels * oh * ow, 0.0);
                for c in 0..channels {
                    for i in 0..oh {
                        for j in 0..ow {
                            let base = c * height * width;
                            let a = x[base + 2 * i * width + 2 * j];
                            let b = x[base + 2 * i * width + 2 * j + 1];
                            let d = x[base + (2 * i + 1) * width + 2 * j];
                            let e = x[base + (2 * i + 1) * width + 2 * j + 1];
                            out[c * oh * ow + i * ow + j] = 0.25 * (a + b + d + e);
                        }
                    }
                }
            }
            Layer::Relu => out.extend(x.iter().map(|&v| v.max(0.0))),
            Layer::Flatten => out.extend_from_slice(x),
        }
    }

    /// Reverse pass. Accumulates parameter gradients into `dweight`/`dbias`
    /// when they are non-empty and writes the input cotangent into `dx`.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn backward(
        &self,
        x: &[f64],
        weight: &[f64],
        dy: &[f64],
        dx: &mut Vec<f64>,
        dweight: &mut [f64],
        dbias: &mut [f64],
        want_input: bool,
    ) {
        dx.clear();
        let want_params = !dweight.is_empty();
        match *self {
            Layer::Dense { inputs, outputs } | Layer::Linear { inputs, outputs } => {
                if want_params {
                    for o in 0..outputs {
                        let g = dy[o];
                        if let Some(b) = dbias.get_mut(o) {
                            *b += g;
                        }
                        if g != 0.0 {
                            let row = &mut dweight[o * inputs..(o + 1) * inputs];
                            for (w, &xi) in row.iter_mut().zip(x) {
                                *w += g * xi;
                            }
                        }
                    }
                }
                if want_input {
                    dx.resize(inputs, 0.0);
                    for o in 0..outputs {
                        let g = dy[o];
                        if g != 0.0 {
                            let row = &weight[o * inputs..(o + 1) * inputs];
                            for (d, &w) in dx.iter_mut().zip(row) {
                                *d += g * w;
                            }
                        }
                    }
                }
            }
            Layer::Conv3x3 {
                in_channels,
                out_channels,
                height,
                width,
            } => {
                let plane = height * width;
                if want_input {
                    dx.resize(in_channels * plane, 0.0);
                }
                for co in 0..out_channels {
                    let g = &dy[co * plane..(co + 1) * plane];
                    if want_params {
                        dbias[co] += g.iter().sum::<f64>();
                    }
                    for ci in 0..in_channels {
                        let kidx = (co * in_channels + ci) * 9;
                        let xin = &x[ci * plane..(ci + 1) * plane];
                        if want_params {
                            conv_plane_weight_grad(xin, g, &mut dweight[kidx..kidx + 9], height, width);
                        }
                        if want_input {
                            conv_plane_input_grad(
                                &weight[kidx..kidx + 9],
                                g,
                                &mut dx[ci * plane..(ci + 1) * plane],
                                height,
                                width,
                            );
                        }
                    }
                }
            }
            Layer::AvgPool2 {
                channels,
                height,
                width,
            } => {
                if want_input {
                    let (oh, ow) = (height / 2, width / 2);
                    dx.resize(channels * height * width, 0.0);
                    for c in 0..channels {
                        for i in 0..height {
                            for j in 0..width {
                                dx[c * height * width + i * width + j] = 0.25 * dy[c * oh * ow + (i / 2) * ow + j / 2];
                            }
                        }
                    }
                }
            }
            Layer::Relu => {
                if want_input {
                    dx.extend(x.iter().zip(dy).map(|(&v, &g)| if v > 0.0 { g } else { 0.0 }));
                }
            }
            Layer::Flatten => {
                if want_input {
                    dx.extend_from_slice(dy);
                }
            }
        }
    }
}

fn expect_shape(actual: &[usize], expected: &[usize]) -> Result<()> {
    if actual == expected {
        Ok(())
    } else {
        Err(Error::Shape {
            expected: expected.to_vec(),
            actual: actual.to_vec(),
        })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Valid output range `[lo, hi)` along one axis for kernel offset `k - 1`.
#[inline]
fn span(k: usize, n: usize) -> (usize, usize) {
    match k {
        0 => (1, n),
        1 => (0, n),
        _ => (0, n - 1),
    }
}

fn conv_plane_accumulate(x: &[f64], k: &[f64], y: &mut [f64], h: usize, w: usize) {
    for kh in 0..3 {
        let (i0, i1) = span(kh, h);
        for kw in 0..3 {
            let wv = k[kh * 3 + kw];
            let (j0, j1) = span(kw, w);
            for i in i0..i1 {
                let src = (i + kh - 1) * w;
                let yrow = &mut y[i * w + j0..i * w + j1];
                let xrow = &x[src + j0 + kw - 1..src + j1 + kw - 1];
                for (o, &v) in yrow.iter_mut().zip(xrow) {
                    *o += wv * v;
                }
            }
        }
    }
}

fn conv_plane_weight_grad(x: &[f64], g: &[f64], dk: &mut [f64], h: usize, w: usize) {
    for kh in 0..3 {
        let (i0, i1) = span(kh, h);
        for kw in 0..3 {
            let (j0, j1) = span(kw, w);
            let mut acc = 0.0;
            for i in i0..i1 {
                let src = (i + kh - 1) * w;
                let grow = &g[i * w + j0..i * w + j1];
                let xrow = &x[src + j0 + kw - 1..src + j1 + kw - 1];
                acc += dot(grow, xrow);
            }
            dk[kh * 3 + kw] += acc;
        }
    }
}

fn conv_plane_input_grad(k: &[f64], g: &[f64], dx: &mut [f64], h: usize, w: usize) {
    for kh in 0..3 {
        let (i0, i1) = span(kh, h);
        for kw in 0..3 {
            let wv = k[kh * 3 + kw];
            let (j0, j1) = span(kw, w);
            for i in i0..i1 {
                let dst = (i + kh - 1) * w;
                let grow = &g[i * w + j0..i * w + j1];
                let drow = &mut dx[dst + j0 + kw - 1..dst + j1 + kw - 1];
                for (d, &v) in drow.iter_mut().zip(grow) {
                    *d += wv * v;
                }
            }
        }
    }
}
