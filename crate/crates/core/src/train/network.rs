//! Layer graph, forward pass and manual reverse-mode gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::linalg::{col2im, im2col, matmul_nn, matmul_nt, matmul_tn, nchw_to_rows, rows_to_nchw};
use crate::analyzer::{
    widen_descriptor, LayerKind, NetworkDescriptor, PrecisionPolicy, FULL_PRECISION_BITS,
};
use crate::error::{shape_err, Error, Result};
use crate::kernels::{dequantize_accumulators, quantized_gemm, KernelChoice};
use crate::quant::{
    binarize_weights_bwn, clip_acts, clip_weights, quantize_acts_wrpn, quantize_weights_wrpn,
    OperandKind, QuantFamily, QuantSpec, QuantizedTensor,
};
use crate::tensor::{softmax_xent, BatchNormParams, ConvGeometry, PoolGeometry, Tensor};

const BN_EPS: f32 = 1e-5;
const BN_MOMENTUM: f32 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DenseShape {
    Fc { inputs: usize, outputs: usize },
    Conv(ConvGeometry),
}

/// A conv or FC layer. Weights are `[out, in]` for FC and OIHW for conv;
/// they are the full-precision master copy, quantized afresh on every
/// forward pass when `weight_spec` is set.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub id: String,
    pub shape: DenseShape,
    pub weights: Tensor,
    pub bias: Tensor,
    /// Quantizer for this layer's input activations (`None` = FP32).
    pub act_spec: Option<QuantSpec>,
    pub weight_spec: Option<QuantSpec>,
}

impl DenseLayer {
    pub fn fan_in(&self) -> usize {
        match self.shape {
            DenseShape::Fc { inputs, .. } => inputs,
            DenseShape::Conv(g) => g.window_len(),
        }
    }

    pub fn outputs(&self) -> usize {
        match self.shape {
            DenseShape::Fc { outputs, .. } => outputs,
            DenseShape::Conv(g) => g.out_channels,
        }
    }

    pub fn is_quantized(&self) -> bool {
        self.act_spec.is_some() || self.weight_spec.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormLayer {
    pub id: String,
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Vec<f32>,
    pub running_var: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Dense(DenseLayer),
    BatchNorm(BatchNormLayer),
    Relu { id: String },
    MaxPool { id: String, pool: PoolGeometry },
}

impl Layer {
    pub fn id(&self) -> &str {
        match self {
            Layer::Dense(d) => &d.id,
            Layer::BatchNorm(b) => &b.id,
            Layer::Relu { id } | Layer::MaxPool { id, .. } => id,
        }
    }

    /// `qconv`, `qfc`, `conv_fp32`, `fc_fp32`, `batchnorm`, `relu` or `maxpool`.
    pub fn kind_name(&self) -> &'static str {
        match self {
            Layer::Dense(d) => match (d.shape, d.is_quantized()) {
                (DenseShape::Conv(_), true) => "qconv",
                (DenseShape::Conv(_), false) => "conv_fp32",
                (DenseShape::Fc { .. }, true) => "qfc",
                (DenseShape::Fc { .. }, false) => "fc_fp32",
            },
            Layer::BatchNorm(_) => "batchnorm",
            Layer::Relu { .. } => "relu",
            Layer::MaxPool { .. } => "maxpool",
        }
    }
}

/// A sequential network ending in softmax cross-entropy.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub name: String,
    pub input: [usize; 3],
    pub layers: Vec<Layer>,
    pub num_classes: usize,
    /// Replace every rounding step by the identity (clipping stays). Used
    /// to check the straight-through gradients against finite differences.
    pub bypass_rounding: bool,
    /// Run quantized layers through the packed integer kernels when both
    /// operands are quantized. When off, the same values go through the
    /// float reference path.
    pub use_kernels: bool,
    version: u64,
}

/// Gradients in parameter order (see [`Network::params`]).
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub entries: Vec<(String, Tensor)>,
}

impl Gradients {
    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }
}

#[derive(Debug, Clone)]
enum LayerCache {
    Dense {
        /// Layer input as an M×K matrix of the values actually multiplied.
        x_mat: Vec<f32>,
        /// Weights as an O×K matrix of the values actually multiplied.
        w_mat: Vec<f32>,
        kernel: Option<KernelChoice>,
    },
    BatchNorm {
        xhat: Vec<f32>,
        inv_std: Vec<f32>,
        mean: Vec<f32>,
        var: Vec<f32>,
    },
    Relu,
    MaxPool {
        argmax: Vec<usize>,
    },
}

/// Everything `backward` needs from one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    version: u64,
    /// Input of every layer, followed by the final logits.
    values: Vec<Tensor>,
    layers: Vec<LayerCache>,
    probs: Tensor,
    labels: Vec<usize>,
    pub loss: f32,
}

impl ForwardCache {
    /// Input of layer `i`; index `layers.len()` is the logits.
    pub fn value(&self, i: usize) -> &Tensor {
        &self.values[i]
    }

    pub fn logits(&self) -> &Tensor {
        self.values.last().expect("cache always holds logits")
    }

    /// Which integer kernel layer `i` ran on, if any.
    pub fn kernel_used(&self, i: usize) -> Option<KernelChoice> {
        match &self.layers[i] {
            LayerCache::Dense { kernel, .. } => *kernel,
            _ => None,
        }
    }
}

fn spec_for(bits: u32, kind: OperandKind) -> Result<Option<QuantSpec>> {
    if bits >= FULL_PRECISION_BITS {
        Ok(None)
    } else {
        QuantSpec::for_bits(bits, kind).map(Some)
    }
}

fn layer_rng(seed: u64, index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Widens `desc`, assigns per-layer quantizers from `policy` and draws
/// initial weights. Each layer has its own seeded stream, so two networks
/// built with the same seed share the weights of every layer whose shape
/// and precision agree.
///
/// Full-precision layers draw from U(±sqrt(6/fan_in)). Quantized-weight
/// layers draw from U(±1), the whole clip range, so that coarse grids start
/// with a spread of nonzero levels.
pub fn build_network(
    desc: &NetworkDescriptor,
    widen: f64,
    policy: &PrecisionPolicy,
    seed: u64,
) -> Result<Network> {
    if !desc.is_sequential() {
        return Err(Error::Descriptor(format!(
            "{}: training supports sequential descriptors only",
            desc.name
        )));
    }
    policy.validate(desc)?;
    let wide = widen_descriptor(desc, widen)?;
    let resolved = wide.resolve()?;
    let mut layers = Vec::with_capacity(resolved.len());
    for (spec, r) in wide.layers.iter().zip(&resolved) {
        let [c, h, w] = r.in_shapes[0];
        let layer = match r.kind {
            LayerKind::Conv | LayerKind::Fc => {
                let bits = policy.bits_for(&r.id);
                let act_spec = spec_for(bits.acts, OperandKind::Activation)?;
                let weight_spec = spec_for(bits.weights, OperandKind::Weight)?;
                let (shape, wshape, fan_in, out) = match r.conv {
                    Some(g) => (
                        DenseShape::Conv(g),
                        vec![g.out_channels, g.in_channels, g.kernel_h, g.kernel_w],
                        g.window_len(),
                        g.out_channels,
                    ),
                    None => {
                        let (i, o) = (c * h * w, r.out_shape[0]);
                        (
                            DenseShape::Fc {
                                inputs: i,
                                outputs: o,
                            },
                            vec![o, i],
                            i,
                            o,
                        )
                    }
                };
                let bound = if weight_spec.is_some() {
                    1.0
                } else {
                    (6.0 / fan_in as f32).sqrt()
                };
                let mut rng = layer_rng(seed, r.index);
                let weights = Tensor::from_fn(&wshape, |_| rng.gen_range(-bound..=bound))?;
                Layer::Dense(DenseLayer {
                    id: r.id.clone(),
                    shape,
                    weights,
                    bias: Tensor::zeros(&[out])?,
                    act_spec,
                    weight_spec,
                })
            }
            LayerKind::Batchnorm => Layer::BatchNorm(BatchNormLayer {
                id: r.id.clone(),
                gamma: Tensor::full(&[c], 1.0)?,
                beta: Tensor::zeros(&[c])?,
                running_mean: vec![0.0; c],
                running_var: vec![1.0; c],
            }),
            LayerKind::Relu => Layer::Relu { id: r.id.clone() },
            LayerKind::Maxpool => {
                let (kh, kw) = spec.kernel.map(|k| k.hw()).unwrap_or((0, 0));
                if kh != kw {
                    return Err(Error::Descriptor(format!(
                        "maxpool {:?} must use a square window",
                        r.id
                    )));
                }
                Layer::MaxPool {
                    id: r.id.clone(),
                    pool: PoolGeometry {
                        kernel: kh,
                        stride: spec.stride.unwrap_or(1),
                        padding: spec.padding.unwrap_or(0),
                    },
                }
            }
            other => {
                return Err(Error::Descriptor(format!(
                    "layer kind {other:?} ({:?}) is not trainable here",
                    r.id
                )))
            }
        };
        layers.push(layer);
    }
    let num_classes = resolved
        .last()
        .map(|r| r.out_shape.iter().product())
        .unwrap_or(0);
    Ok(Network {
        name: wide.name,
        input: desc.input,
        layers,
        num_classes,
        bypass_rounding: false,
        use_kernels: true,
        version: 0,
    })
}

struct Operand {
    values: Vec<f32>,
    codes: Option<QuantizedTensor>,
}

fn quantize_operand(x: &Tensor, spec: Option<QuantSpec>, bypass: bool) -> Result<Operand> {
    let Some(spec) = spec else {
        return Ok(Operand {
            values: x.data().to_vec(),
            codes: None,
        });
    };
    let clipped = match spec.kind() {
        OperandKind::Activation => clip_acts(x),
        OperandKind::Weight => clip_weights(x),
    };
    if bypass {
        return Ok(Operand {
            values: clipped.into_data(),
            codes: None,
        });
    }
    let q = match (spec.family(), spec.kind()) {
        (QuantFamily::BwnBinary, _) => binarize_weights_bwn(&clipped)?,
        (QuantFamily::Wrpn, OperandKind::Weight) => quantize_weights_wrpn(&clipped, spec.bits())?,
        (QuantFamily::Wrpn, OperandKind::Activation) => quantize_acts_wrpn(&clipped, spec.bits())?,
        (QuantFamily::Dorefa, _) => {
            return Err(Error::QuantSpec(
                "DoReFa weights are a reference quantizer only, not trainable".into(),
            ))
        }
    };
    Ok(Operand {
        values: q.dequantize().into_data(),
        codes: Some(q),
    })
}

/// Largest |accumulator| the integer path can produce must fit in i32.
fn accumulator_fits(k: usize, a: &QuantSpec, w: &QuantSpec) -> bool {
    (k as i64) * i64::from(a.max_code()) * i64::from(w.max_code()) < i64::from(i32::MAX)
}

fn expect_shape(x: &Tensor, want: &[usize], id: &str) -> Result<()> {
    if x.shape() != want {
        return shape_err(format!(
            "layer {id:?} expects input {want:?}, got {:?}",
            x.shape()
        ));
    }
    Ok(())
}

impl Network {
    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn layer(&self, id: &str) -> Option<&Layer> {
        self.layers.iter().find(|l| l.id() == id)
    }

    /// Parameters in a fixed order: per layer `weight`, `bias` for conv/FC
    /// and `gamma`, `beta` for batch norm, named `"{layer}.{param}"`.
    pub fn params(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for l in &self.layers {
            match l {
                Layer::Dense(d) => {
                    out.push((format!("{}.weight", d.id), &d.weights));
                    out.push((format!("{}.bias", d.id), &d.bias));
                }
                Layer::BatchNorm(b) => {
                    out.push((format!("{}.gamma", b.id), &b.gamma));
                    out.push((format!("{}.beta", b.id), &b.beta));
                }
                _ => {}
            }
        }
        out
    }

    pub(crate) fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            match l {
                Layer::Dense(d) => {
                    out.push(&mut d.weights);
                    out.push(&mut d.bias);
                }
                Layer::BatchNorm(b) => {
                    out.push(&mut b.gamma);
                    out.push(&mut b.beta);
                }
                _ => {}
            }
        }
        out
    }

    pub(crate) fn bump_version(&mut self) {
        self.version += 1;
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.params()
            .into_iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }

    /// Replaces one parameter tensor (same shape required). Invalidates
    /// outstanding forward caches.
    pub fn set_param(&mut self, name: &str, value: Tensor) -> Result<()> {
        let names: Vec<String> = self.params().into_iter().map(|(n, _)| n).collect();
        let idx = names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::InvalidArgument(format!("no parameter named {name:?}")))?;
        let slot = self
            .params_mut()
            .into_iter()
            .nth(idx)
            .expect("same order as params()");
        if slot.shape() != value.shape() {
            return shape_err(format!(
                "{name}: expected {:?}, got {:?}",
                slot.shape(),
                value.shape()
            ));
        }
        *slot = value;
        self.bump_version();
        Ok(())
    }

    fn batch_shape(&self, n: usize) -> Vec<usize> {
        vec![n, self.input[0], self.input[1], self.input[2]]
    }

    fn dense_forward(&self, d: &DenseLayer, x: &Tensor) -> Result<(Tensor, LayerCache)> {
        let n = x.shape()[0];
        let (m, k, spatial) = match d.shape {
            DenseShape::Fc { inputs, .. } => {
                if x.len() != n * inputs {
                    return shape_err(format!(
                        "layer {:?} expects {inputs} inputs per item, got {:?}",
                        d.id,
                        x.shape()
                    ));
                }
                (n, inputs, 1)
            }
            DenseShape::Conv(g) => {
                expect_shape(x, &[n, g.in_channels, g.input_h, g.input_w], &d.id)?;
                let s = g.output_h() * g.output_w();
                (n * s, g.window_len(), s)
            }
        };
        let o = d.outputs();
        let xa = quantize_operand(x, d.act_spec, self.bypass_rounding)?;
        let wq = quantize_operand(&d.weights, d.weight_spec, self.bypass_rounding)?;
        let x_mat = match d.shape {
            DenseShape::Fc { .. } => xa.values,
            DenseShape::Conv(g) => im2col(&xa.values, n, &g),
        };
        let int_path = match (&xa.codes, &wq.codes) {
            (Some(a), Some(w)) if self.use_kernels && accumulator_fits(k, &a.spec(), &w.spec()) => {
                Some((a, w))
            }
            _ => None,
        };
        let (mut rows, kernel) = match int_path {
            Some((a, w)) => {
                let a_codes = match d.shape {
                    DenseShape::Fc { .. } => a.codes().to_vec(),
                    DenseShape::Conv(g) => im2col(a.codes(), n, &g),
                };
                let (acc, choice) = quantized_gemm(
                    &a_codes,
                    m,
                    k,
                    a.spec().bits(),
                    w.codes(),
                    o,
                    w.spec().bits(),
                )?;
                (
                    dequantize_accumulators(&acc, w.scale(), a.scale())?.into_data(),
                    Some(choice),
                )
            }
            None => (matmul_nt(&x_mat, m, k, &wq.values, o), None),
        };
        let b = d.bias.data();
        for row in rows.chunks_exact_mut(o) {
            for (v, bias) in row.iter_mut().zip(b) {
                *v += bias;
            }
        }
        let (out, shape) = match d.shape {
            DenseShape::Fc { .. } => (rows, vec![n, o, 1, 1]),
            DenseShape::Conv(g) => (
                rows_to_nchw(&rows, n, spatial, o),
                vec![n, o, g.output_h(), g.output_w()],
            ),
        };
        let y = Tensor::from_op(shape, out, "dense layer forward")?;
        Ok((
            y,
            LayerCache::Dense {
                x_mat,
                w_mat: wq.values,
                kernel,
            },
        ))
    }

    fn batchnorm_forward(b: &BatchNormLayer, x: &Tensor) -> Result<(Tensor, LayerCache)> {
        let (n, c) = (x.shape()[0], x.shape()[1]);
        if c != b.gamma.len() {
            return shape_err(format!(
                "batch norm {:?} expects {} channels, got {c}",
                b.id,
                b.gamma.len()
            ));
        }
        let spatial = x.len() / (n * c);
        let count = (n * spatial) as f64;
        let data = x.data();
        let mut mean = vec![0.0f32; c];
        let mut var = vec![0.0f32; c];
        for ch in 0..c {
            let mut s = 0.0f64;
            for img in 0..n {
                s += data[(img * c + ch) * spatial..][..spatial]
                    .iter()
                    .map(|&v| f64::from(v))
                    .sum::<f64>();
            }
            let mu = s / count;
            let mut q = 0.0f64;
            for img in 0..n {
                q += data[(img * c + ch) * spatial..][..spatial]
                    .iter()
                    .map(|&v| (f64::from(v) - mu).powi(2))
                    .sum::<f64>();
            }
            mean[ch] = mu as f32;
            var[ch] = (q / count) as f32;
        }
        let inv_std: Vec<f32> = var.iter().map(|&v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let mut xhat = vec![0.0f32; data.len()];
        let mut out = vec![0.0f32; data.len()];
        for (i, (chunk, xh)) in data
            .chunks_exact(spatial)
            .zip(xhat.chunks_exact_mut(spatial))
            .enumerate()
        {
            let ch = i % c;
            for (v, h) in chunk.iter().zip(xh.iter_mut()) {
                *h = (v - mean[ch]) * inv_std[ch];
            }
            let (g, be) = (b.gamma.data()[ch], b.beta.data()[ch]);
            for (o, h) in out[i * spatial..(i + 1) * spatial]
                .iter_mut()
                .zip(xh.iter())
            {
                *o = g * h + be;
            }
        }
        let y = Tensor::from_op(x.shape().to_vec(), out, "batch norm forward")?;
        Ok((
            y,
            LayerCache::BatchNorm {
                xhat,
                inv_std,
                mean,
                var,
            },
        ))
    }

    fn maxpool_forward(pool: PoolGeometry, x: &Tensor) -> Result<(Tensor, LayerCache)> {
        let &[n, c, h, w] = x.shape() else {
            return shape_err(format!("maxpool expects NCHW, got {:?}", x.shape()));
        };
        let (oh, ow) = (pool.output_extent(h)?, pool.output_extent(w)?);
        let data = x.data();
        let mut out = Vec::with_capacity(n * c * oh * ow);
        let mut argmax = Vec::with_capacity(n * c * oh * ow);
        for (p, plane) in data.chunks_exact(h * w).enumerate() {
            for y in 0..oh {
                for xo in 0..ow {
                    let (mut best, mut at) = (f32::NEG_INFINITY, usize::MAX);
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
                            let idx = iy as usize * w + ix as usize;
                            if plane[idx] > best {
                                best = plane[idx];
                                at = p * h * w + idx;
                            }
                        }
                    }
                    out.push(best);
                    argmax.push(at);
                }
            }
        }
        let y = Tensor::from_op(vec![n, c, oh, ow], out, "maxpool forward")?;
        Ok((y, LayerCache::MaxPool { argmax }))
    }

    /// Runs layer `i` in training mode on `x`.
    pub fn forward_layer(&self, i: usize, x: &Tensor) -> Result<Tensor> {
        Ok(self.layer_forward(i, x)?.0)
    }

    fn layer_forward(&self, i: usize, x: &Tensor) -> Result<(Tensor, LayerCache)> {
        match &self.layers[i] {
            Layer::Dense(d) => self.dense_forward(d, x),
            Layer::BatchNorm(b) => Self::batchnorm_forward(b, x),
            Layer::Relu { .. } => Ok((x.map(|v| v.max(0.0))?, LayerCache::Relu)),
            Layer::MaxPool { pool, .. } => Self::maxpool_forward(*pool, x),
        }
    }

    fn check_batch(&self, batch: &Tensor) -> Result<usize> {
        let n = batch.shape().first().copied().unwrap_or(0);
        if batch.shape() != self.batch_shape(n).as_slice()
            && batch.shape() != [n, self.input.iter().product()]
        {
            return shape_err(format!(
                "batch {:?} does not match network input {:?}",
                batch.shape(),
                self.input
            ));
        }
        Ok(n)
    }

    /// Training-mode forward pass (batch statistics in batch norm) and mean
    /// cross-entropy loss.
    pub fn forward(&self, batch: &Tensor, labels: &[usize]) -> Result<(f32, ForwardCache)> {
        let n = self.check_batch(batch)?;
        let mut values = Vec::with_capacity(self.layers.len() + 1);
        let mut caches = Vec::with_capacity(self.layers.len());
        values.push(batch.clone().reshape(&self.batch_shape(n))?);
        for i in 0..self.layers.len() {
            let (y, c) = self.layer_forward(i, values.last().expect("nonempty"))?;
            values.push(y);
            caches.push(c);
        }
        let logits = values.pop().expect("nonempty");
        let logits = logits.reshape(&[n, self.num_classes])?;
        let (probs, loss) = softmax_xent(&logits, labels)?;
        values.push(logits);
        Ok((
            loss,
            ForwardCache {
                version: self.version,
                values,
                layers: caches,
                probs,
                labels: labels.to_vec(),
                loss,
            },
        ))
    }

    /// Inference-mode logits (N × classes) using running batch-norm
    /// statistics.
    pub fn predict(&self, batch: &Tensor) -> Result<Tensor> {
        let n = self.check_batch(batch)?;
        let mut x = batch.clone().reshape(&self.batch_shape(n))?;
        for (i, l) in self.layers.iter().enumerate() {
            x = match l {
                Layer::BatchNorm(b) => {
                    let p = BatchNormParams {
                        mean: b.running_mean.clone(),
                        var: b.running_var.clone(),
                        gamma: b.gamma.data().to_vec(),
                        beta: b.beta.data().to_vec(),
                        eps: BN_EPS,
                    };
                    crate::tensor::batchnorm_infer(&x, &p)?
                }
                _ => self.layer_forward(i, &x)?.0,
            };
        }
        x.reshape(&[n, self.num_classes])
    }

    /// Folds the batch statistics of `cache` into the running averages.
    pub fn update_running_stats(&mut self, cache: &ForwardCache) -> Result<()> {
        self.check_cache(cache)?;
        for (l, c) in self.layers.iter_mut().zip(&cache.layers) {
            if let (Layer::BatchNorm(b), LayerCache::BatchNorm { mean, var, .. }) = (l, c) {
                for (r, m) in b.running_mean.iter_mut().zip(mean) {
                    *r += BN_MOMENTUM * (m - *r);
                }
                for (r, v) in b.running_var.iter_mut().zip(var) {
                    *r += BN_MOMENTUM * (v - *r);
                }
            }
        }
        Ok(())
    }

    fn check_cache(&self, cache: &ForwardCache) -> Result<()> {
        if cache.version != self.version || cache.layers.len() != self.layers.len() {
            return Err(Error::StaleCache(format!(
                "cache from parameter version {}, network is at {}",
                cache.version, self.version
            )));
        }
        Ok(())
    }

    /// Gradients of the cached loss with respect to every parameter.
    ///
    /// Quantizers are differentiated straight-through: the gradient with
    /// respect to a quantized operand is passed to its full-precision
    /// source unchanged where the source lies inside the clip range and
    /// zeroed strictly outside it.
    pub fn backward(&self, cache: &ForwardCache) -> Result<Gradients> {
        self.check_cache(cache)?;
        let n = cache.labels.len();
        let c = self.num_classes;
        let mut dy: Vec<f32> = cache.probs.data().to_vec();
        for (row, &label) in dy.chunks_exact_mut(c).zip(&cache.labels) {
            row[label] -= 1.0;
        }
        for v in &mut dy {
            *v /= n as f32;
        }
        let mut grads: Vec<(String, Tensor)> = Vec::new();
        for i in (0..self.layers.len()).rev() {
            let x = &cache.values[i];
            let need_dx = i > 0;
            match (&self.layers[i], &cache.layers[i]) {
                (Layer::Dense(d), LayerCache::Dense { x_mat, w_mat, .. }) => {
                    let o = d.outputs();
                    let k = d.fan_in();
                    let (rows, spatial) = match d.shape {
                        DenseShape::Fc { .. } => (dy, 1),
                        DenseShape::Conv(g) => {
                            let s = g.output_h() * g.output_w();
                            (nchw_to_rows(&dy, n, s, o), s)
                        }
                    };
                    let m = n * spatial;
                    let mut db = vec![0.0f32; o];
                    for row in rows.chunks_exact(o) {
                        for (a, v) in db.iter_mut().zip(row) {
                            *a += v;
                        }
                    }
                    let mut dw = matmul_tn(&rows, m, o, x_mat, k);
                    if let Some(spec) = d.weight_spec {
                        let (lo, hi) = spec.kind().clip_range();
                        for (g, &w) in dw.iter_mut().zip(d.weights.data()) {
                            if w < lo || w > hi {
                                *g = 0.0;
                            }
                        }
                    }
                    grads.push((
                        format!("{}.bias", d.id),
                        Tensor::from_op(vec![o], db, "bias gradient")?,
                    ));
                    grads.push((
                        format!("{}.weight", d.id),
                        Tensor::from_op(d.weights.shape().to_vec(), dw, "weight gradient")?,
                    ));
                    dy = if need_dx {
                        let dx_mat = matmul_nn(&rows, m, o, w_mat, k);
                        let mut dx = match d.shape {
                            DenseShape::Fc { .. } => dx_mat,
                            DenseShape::Conv(g) => col2im(&dx_mat, n, &g),
                        };
                        if let Some(spec) = d.act_spec {
                            let (lo, hi) = spec.kind().clip_range();
                            for (g, &v) in dx.iter_mut().zip(x.data()) {
                                if v < lo || v > hi {
                                    *g = 0.0;
                                }
                            }
                        }
                        dx
                    } else {
                        Vec::new()
                    };
                }
                (Layer::BatchNorm(b), LayerCache::BatchNorm { xhat, inv_std, .. }) => {
                    let ch = b.gamma.len();
                    let spatial = x.len() / (n * ch);
                    let count = (n * spatial) as f32;
                    let mut dgamma = vec![0.0f64; ch];
                    let mut dbeta = vec![0.0f64; ch];
                    for (j, (g, h)) in dy
                        .chunks_exact(spatial)
                        .zip(xhat.chunks_exact(spatial))
                        .enumerate()
                    {
                        let cc = j % ch;
                        for (gv, hv) in g.iter().zip(h) {
                            dgamma[cc] += f64::from(gv * hv);
                            dbeta[cc] += f64::from(*gv);
                        }
                    }
                    let mut dx = vec![0.0f32; dy.len()];
                    for (j, ((g, h), out)) in dy
                        .chunks_exact(spatial)
                        .zip(xhat.chunks_exact(spatial))
                        .zip(dx.chunks_exact_mut(spatial))
                        .enumerate()
                    {
                        let cc = j % ch;
                        let scale = b.gamma.data()[cc] * inv_std[cc] / count;
                        let (sb, sg) = (dbeta[cc] as f32, dgamma[cc] as f32);
                        for ((o, gv), hv) in out.iter_mut().zip(g).zip(h) {
                            *o = scale * (count * gv - sb - hv * sg);
                        }
                    }
                    grads.push((
                        format!("{}.beta", b.id),
                        Tensor::new(vec![ch], dbeta.iter().map(|&v| v as f32).collect())?,
                    ));
                    grads.push((
                        format!("{}.gamma", b.id),
                        Tensor::new(vec![ch], dgamma.iter().map(|&v| v as f32).collect())?,
                    ));
                    dy = dx;
                }
                (Layer::Relu { .. }, LayerCache::Relu) => {
                    for (g, &v) in dy.iter_mut().zip(x.data()) {
                        if v <= 0.0 {
                            *g = 0.0;
                        }
                    }
                }
                (Layer::MaxPool { .. }, LayerCache::MaxPool { argmax }) => {
                    let mut dx = vec![0.0f32; x.len()];
                    for (g, &at) in dy.iter().zip(argmax) {
                        if at != usize::MAX {
                            dx[at] += g;
                        }
                    }
                    dy = dx;
                }
                _ => {
                    return Err(Error::StaleCache(format!(
                        "cache entry {i} does not match layer kind"
                    )))
                }
            }
        }
        grads.reverse();
        Ok(Gradients { entries: grads })
    }
}
