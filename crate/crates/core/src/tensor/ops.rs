//! Reference FP32 operators.
//!
//! Summation order is fixed so results are bit-reproducible: for
//! convolution each output accumulates, starting from 0.0, over input
//! channels in the outer loop and the kernel window (rows, then columns)
//! innermost. Matmul accumulates over the inner dimension in ascending
//! order.

use super::{ConvGeometry, Tensor};
use crate::error::{shape_err, Error, Result};

pub fn conv2d_ref(input: &Tensor, weights: &Tensor, geom: &ConvGeometry) -> Result<Tensor> {
    geom.validate()?;
    let &[n, c, h, w] = input.shape() else {
        return shape_err(format!("conv input must be NCHW, got {:?}", input.shape()));
    };
    if c != geom.in_channels || h != geom.input_h || w != geom.input_w {
        return shape_err(format!(
            "conv input {:?} does not match geometry ({} channels, {}x{})",
            input.shape(),
            geom.in_channels,
            geom.input_h,
            geom.input_w
        ));
    }
    let expected_w = [
        geom.out_channels,
        geom.in_channels,
        geom.kernel_h,
        geom.kernel_w,
    ];
    if weights.shape() != expected_w {
        return shape_err(format!(
            "conv weights {:?} do not match geometry OIHW {expected_w:?}",
            weights.shape()
        ));
    }
    let (oh, ow) = (geom.output_h(), geom.output_w());
    let (kh, kw, s, p) = (geom.kernel_h, geom.kernel_w, geom.stride, geom.padding);
    let x = input.data();
    let wt = weights.data();
    let mut out = vec![0.0f32; n * geom.out_channels * oh * ow];
    let mut idx = 0;
    for b in 0..n {
        for o in 0..geom.out_channels {
            for y in 0..oh {
                for xo in 0..ow {
                    let mut acc = 0.0f32;
                    for ci in 0..c {
                        let x_plane = &x[(b * c + ci) * h * w..][..h * w];
                        let w_plane = &wt[(o * c + ci) * kh * kw..][..kh * kw];
                        for ky in 0..kh {
                            let iy = (y * s + ky) as isize - p as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for kx in 0..kw {
                                let ix = (xo * s + kx) as isize - p as isize;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                acc +=
                                    x_plane[iy as usize * w + ix as usize] * w_plane[ky * kw + kx];
                            }
                        }
                    }
                    out[idx] = acc;
                    idx += 1;
                }
            }
        }
    }
    Tensor::from_op(vec![n, geom.out_channels, oh, ow], out, "conv2d_ref")
}

pub fn matmul_ref(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (&[m, k], &[k2, n]) = (a.shape(), b.shape()) else {
        return shape_err(format!(
            "matmul needs rank-2 operands, got {:?} and {:?}",
            a.shape(),
            b.shape()
        ));
    };
    if k != k2 {
        return shape_err(format!(
            "matmul inner dimensions differ: {m}x{k} · {k2}x{n}"
        ));
    }
    let (ad, bd) = (a.data(), b.data());
    let mut out = vec![0.0f32; m * n];
    // i-k-j order: every out[i][j] still sums its products in ascending k.
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for kk in 0..k {
            let aik = ad[i * k + kk];
            let brow = &bd[kk * n..(kk + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += aik * bv;
            }
        }
    }
    Tensor::from_op(vec![m, n], out, "matmul_ref")
}

pub fn relu(x: &Tensor) -> Tensor {
    // max(0, finite) is finite, so no re-validation is needed.
    Tensor {
        shape: x.shape().to_vec(),
        data: x.data().iter().map(|&v| v.max(0.0)).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolGeometry {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl PoolGeometry {
    pub fn output_extent(&self, input: usize) -> Result<usize> {
        if self.kernel == 0 || self.stride == 0 || input + 2 * self.padding < self.kernel {
            return Err(Error::InvalidArgument(format!(
                "pool {self:?} does not fit extent {input}"
            )));
        }
        Ok((input + 2 * self.padding - self.kernel) / self.stride + 1)
    }
}

/// Max pooling over NCHW input. Padded positions never win the max.
pub fn maxpool2d(input: &Tensor, pool: PoolGeometry) -> Result<Tensor> {
    let &[n, c, h, w] = input.shape() else {
        return shape_err(format!(
            "maxpool input must be NCHW, got {:?}",
            input.shape()
        ));
    };
    let (oh, ow) = (pool.output_extent(h)?, pool.output_extent(w)?);
    let x = input.data();
    let mut out = Vec::with_capacity(n * c * oh * ow);
    for plane in x.chunks_exact(h * w) {
        for y in 0..oh {
            for xo in 0..ow {
                let mut best = f32::NEG_INFINITY;
                for ky in 0..pool.kernel {
                    let iy = (y * pool.stride + ky) as isize - pool.padding as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..pool.kernel {
                        let ix = (xo * pool.stride + kx) as isize - pool.padding as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        best = best.max(plane[iy as usize * w + ix as usize]);
                    }
                }
                out.push(best);
            }
        }
    }
    Tensor::from_op(vec![n, c, oh, ow], out, "maxpool2d")
}

/// Stored per-channel statistics and affine parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormParams {
    pub mean: Vec<f32>,
    pub var: Vec<f32>,
    pub gamma: Vec<f32>,
    pub beta: Vec<f32>,
    pub eps: f32,
}

/// Inference-mode batch normalisation over axis 1 of an NC or NCHW tensor.
pub fn batchnorm_infer(x: &Tensor, bn: &BatchNormParams) -> Result<Tensor> {
    let shape = x.shape();
    if shape.len() != 2 && shape.len() != 4 {
        return shape_err(format!("batchnorm expects NC or NCHW, got {shape:?}"));
    }
    let c = shape[1];
    if [&bn.mean, &bn.var, &bn.gamma, &bn.beta]
        .iter()
        .any(|v| v.len() != c)
    {
        return shape_err(format!("batchnorm parameters must all have {c} channels"));
    }
    if bn.var.iter().any(|&v| v + bn.eps <= 0.0) {
        return Err(Error::InvalidArgument(
            "batchnorm variance + epsilon must be positive".into(),
        ));
    }
    let spatial: usize = shape[2..].iter().product();
    let inv: Vec<f32> = bn.var.iter().map(|&v| 1.0 / (v + bn.eps).sqrt()).collect();
    let mut out = x.data().to_vec();
    for (i, chunk) in out.chunks_exact_mut(spatial).enumerate() {
        let ch = i % c;
        for v in chunk {
            *v = (*v - bn.mean[ch]) * inv[ch] * bn.gamma[ch] + bn.beta[ch];
        }
    }
    Tensor::from_op(shape.to_vec(), out, "batchnorm_infer")
}

/// Mean softmax cross-entropy over a batch of N×C logits.
///
/// Returns the class probabilities alongside the scalar loss.
pub fn softmax_xent(logits: &Tensor, labels: &[usize]) -> Result<(Tensor, f32)> {
    let &[n, c] = logits.shape() else {
        return shape_err(format!(
            "softmax_xent expects N×C logits, got {:?}",
            logits.shape()
        ));
    };
    if labels.len() != n {
        return shape_err(format!("{} labels for a batch of {n}", labels.len()));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::InvalidArgument(format!(
            "label {bad} out of range for {c} classes"
        )));
    }
    let mut probs = Vec::with_capacity(n * c);
    let mut loss = 0.0f64;
    for (row, &label) in logits.data().chunks_exact(c).zip(labels) {
        let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let sum: f32 = row.iter().map(|&v| (v - max).exp()).sum();
        let log_sum = sum.ln();
        for &v in row {
            probs.push((v - max).exp() / sum);
        }
        loss += f64::from(log_sum - (row[label] - max));
    }
    let probs = Tensor::from_op(vec![n, c], probs, "softmax_xent")?;
    Ok((probs, (loss / n as f64) as f32))
}
