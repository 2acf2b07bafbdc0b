//! Batched forward and backward kernels.
//!
//! Activations are stored as a `channels × (batch · length)` matrix whose
//! columns are grouped by sample, so a convolution over the whole batch is a
//! single matrix product after im2col.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView2, ArrayViewMut2, Axis};

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Activation {
    pub channels: usize,
    pub length: usize,
    pub batch: usize,
    pub data: Array2<f64>,
}

impl Activation {
    pub fn zeros(channels: usize, length: usize, batch: usize) -> Self {
        Activation {
            channels,
            length,
            batch,
            data: Array2::zeros((channels, batch * length)),
        }
    }
}

/// Values a layer keeps from the forward pass for its backward pass.
pub(crate) enum Cache {
    Conv { cols: Array2<f64>, in_length: usize },
    Relu { output: Array2<f64> },
    MaxPool { argmax: Vec<usize>, in_length: usize },
    Gap { in_length: usize },
    Dense { flat: Array2<f64>, in_length: usize },
}

fn im2col(x: &Activation, kernel: usize, stride: usize, out_len: usize) -> Array2<f64> {
    let b = x.batch;
    let mut cols = Array2::zeros((x.channels * kernel, b * out_len));
    for c in 0..x.channels {
        let row_in = x.data.row(c);
        let row_in = row_in.as_slice().expect("activations are contiguous");
        for k in 0..kernel {
            let mut row_out = cols.row_mut(c * kernel + k);
            let row_out = row_out.as_slice_mut().expect("contiguous");
            for s in 0..b {
                let src = &row_in[s * x.length + k..];
                let dst = &mut row_out[s * out_len..(s + 1) * out_len];
                for (j, d) in dst.iter_mut().enumerate() {
                    *d = src[j * stride];
                }
            }
        }
    }
    cols
}

fn col2im(dcols: &Array2<f64>, channels: usize, in_len: usize, batch: usize, kernel: usize, stride: usize, out_len: usize) -> Array2<f64> {
    let mut dx = Array2::zeros((channels, batch * in_len));
    for c in 0..channels {
        let mut row = dx.row_mut(c);
        let row = row.as_slice_mut().expect("contiguous");
        for k in 0..kernel {
            let src = dcols.row(c * kernel + k);
            let src = src.as_slice().expect("contiguous");
            for s in 0..batch {
                let dst = &mut row[s * in_len + k..];
                for (j, v) in src[s * out_len..(s + 1) * out_len].iter().enumerate() {
                    dst[j * stride] += v;
                }
            }
        }
    }
    dx
}

fn add_bias(out: &mut Array2<f64>, bias: &[f64]) {
    for (mut row, b) in out.axis_iter_mut(Axis(0)).zip(bias) {
        row.mapv_inplace(|v| v + b);
    }
}

fn accumulate_bias_grad(dout: &Array2<f64>, dbias: &mut [f64]) {
    for (row, g) in dout.axis_iter(Axis(0)).zip(dbias.iter_mut()) {
        *g += row.sum();
    }
}

pub(crate) fn conv_forward(
    x: &Activation,
    weight: ArrayView2<'_, f64>,
    bias: &[f64],
    kernel: usize,
    stride: usize,
) -> (Activation, Cache) {
    let out_len = (x.length - kernel) / stride + 1;
    let cols = im2col(x, kernel, stride, out_len);
    let mut out = Activation::zeros(weight.nrows(), out_len, x.batch);
    general_mat_mul(1.0, &weight, &cols, 0.0, &mut out.data);
    add_bias(&mut out.data, bias);
    (out, Cache::Conv { cols, in_length: x.length })
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_backward(
    dout: &Activation,
    cols: &Array2<f64>,
    in_channels: usize,
    in_length: usize,
    weight: ArrayView2<'_, f64>,
    mut dweight: ArrayViewMut2<'_, f64>,
    dbias: &mut [f64],
    kernel: usize,
    stride: usize,
    need_input_grad: bool,
) -> Option<Activation> {
    general_mat_mul(1.0, &dout.data, &cols.t(), 1.0, &mut dweight);
    accumulate_bias_grad(&dout.data, dbias);
    if !need_input_grad {
        return None;
    }
    let mut dcols = Array2::zeros((weight.ncols(), dout.data.ncols()));
    general_mat_mul(1.0, &weight.t(), &dout.data, 0.0, &mut dcols);
    let data = col2im(&dcols, in_channels, in_length, dout.batch, kernel, stride, dout.length);
    Some(Activation { channels: in_channels, length: in_length, batch: dout.batch, data })
}

pub(crate) fn relu_forward(x: Activation) -> (Activation, Cache) {
    let mut out = x;
    out.data.mapv_inplace(|v| v.max(0.0));
    let cache = Cache::Relu { output: out.data.clone() };
    (out, cache)
}

pub(crate) fn relu_backward(mut dout: Activation, output: &Array2<f64>) -> Activation {
    ndarray::Zip::from(&mut dout.data).and(output).for_each(|g, &y| {
        if y <= 0.0 {
            *g = 0.0;
        }
    });
    dout
}

pub(crate) fn maxpool_forward(x: &Activation, width: usize) -> (Activation, Cache) {
    let out_len = x.length / width;
    let mut out = Activation::zeros(x.channels, out_len, x.batch);
    let mut argmax = vec![0usize; x.channels * x.batch * out_len];
    let ncols = x.batch * out_len;
    for c in 0..x.channels {
        let row_in = x.data.row(c);
        let row_in = row_in.as_slice().expect("contiguous");
        let mut row_out = out.data.row_mut(c);
        let row_out = row_out.as_slice_mut().expect("contiguous");
        for s in 0..x.batch {
            for j in 0..out_len {
                let start = s * x.length + j * width;
                let mut best = start;
                for i in start + 1..start + width {
                    if row_in[i] > row_in[best] {
                        best = i;
                    }
                }
                row_out[s * out_len + j] = row_in[best];
                argmax[c * ncols + s * out_len + j] = best;
            }
        }
    }
    (out, Cache::MaxPool { argmax, in_length: x.length })
}

pub(crate) fn maxpool_backward(dout: &Activation, argmax: &[usize], in_length: usize) -> Activation {
    let mut dx = Activation::zeros(dout.channels, in_length, dout.batch);
    let ncols = dout.data.ncols();
    for c in 0..dout.channels {
        let src = dout.data.row(c);
        let mut dst = dx.data.row_mut(c);
        for (j, g) in src.iter().enumerate() {
            dst[argmax[c * ncols + j]] += g;
        }
    }
    dx
}

pub(crate) fn gap_forward(x: &Activation) -> (Activation, Cache) {
    let mut out = Activation::zeros(x.channels, 1, x.batch);
    let scale = 1.0 / x.length as f64;
    for c in 0..x.channels {
        let row = x.data.row(c);
        let row = row.as_slice().expect("contiguous");
        for s in 0..x.batch {
            out.data[[c, s]] = row[s * x.length..(s + 1) * x.length].iter().sum::<f64>() * scale;
        }
    }
    (out, Cache::Gap { in_length: x.length })
}

pub(crate) fn gap_backward(dout: &Activation, in_length: usize) -> Activation {
    let mut dx = Activation::zeros(dout.channels, in_length, dout.batch);
    let scale = 1.0 / in_length as f64;
    for c in 0..dout.channels {
        for s in 0..dout.batch {
            let g = dout.data[[c, s]] * scale;
            dx.data
                .row_mut(c)
                .slice_mut(ndarray::s![s * in_length..(s + 1) * in_length])
                .fill(g);
        }
    }
    dx
}

/// `channels × (batch · length)` → `(channels · length) × batch`.
fn flatten(x: &Activation) -> Array2<f64> {
    if x.length == 1 {
        return x.data.clone();
    }
    let mut flat = Array2::zeros((x.channels * x.length, x.batch));
    for c in 0..x.channels {
        for s in 0..x.batch {
            for l in 0..x.length {
                flat[[c * x.length + l, s]] = x.data[[c, s * x.length + l]];
            }
        }
    }
    flat
}

fn unflatten(flat: Array2<f64>, channels: usize, length: usize, batch: usize) -> Activation {
    if length == 1 {
        return Activation { channels, length, batch, data: flat };
    }
    let mut x = Activation::zeros(channels, length, batch);
    for c in 0..channels {
        for s in 0..batch {
            for l in 0..length {
                x.data[[c, s * length + l]] = flat[[c * length + l, s]];
            }
        }
    }
    x
}

pub(crate) fn dense_forward(x: &Activation, weight: ArrayView2<'_, f64>, bias: &[f64]) -> (Activation, Cache) {
    let flat = flatten(x);
    let mut out = Activation::zeros(weight.nrows(), 1, x.batch);
    general_mat_mul(1.0, &weight, &flat, 0.0, &mut out.data);
    add_bias(&mut out.data, bias);
    (out, Cache::Dense { flat, in_length: x.length })
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn dense_backward(
    dout: &Activation,
    flat: &Array2<f64>,
    in_channels: usize,
    in_length: usize,
    weight: ArrayView2<'_, f64>,
    mut dweight: ArrayViewMut2<'_, f64>,
    dbias: &mut [f64],
    need_input_grad: bool,
) -> Option<Activation> {
    general_mat_mul(1.0, &dout.data, &flat.t(), 1.0, &mut dweight);
    accumulate_bias_grad(&dout.data, dbias);
    if !need_input_grad {
        return None;
    }
    let mut dflat = Array2::zeros((weight.ncols(), dout.batch));
    general_mat_mul(1.0, &weight.t(), &dout.data, 0.0, &mut dflat);
    Some(unflatten(dflat, in_channels, in_length, dout.batch))
}
