//! Dense single-precision tensors.
//!
//! Layouts are row-major throughout: activations are NCHW, convolution
//! weights OIHW, matrices rows × cols.

mod io;
mod ops;

pub(crate) mod io_shape {
    pub(crate) use super::io::{read_shape as read, write_shape as write};
}

pub use io::TENSOR_MAGIC;
pub use ops::{
    batchnorm_infer, conv2d_ref, matmul_ref, maxpool2d, relu, softmax_xent, BatchNormParams,
    PoolGeometry,
};

use crate::error::{shape_err, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    /// Builds a tensor, rejecting zero extents, a length mismatch or
    /// non-finite values.
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return shape_err(format!("extents must be positive, got {shape:?}"));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return shape_err(format!(
                "shape {shape:?} holds {n} elements but {} values were supplied",
                data.len()
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("tensor construction"));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        let n = shape.iter().product();
        Self::new(shape.to_vec(), vec![0.0; n])
    }

    pub fn full(shape: &[usize], value: f32) -> Result<Self> {
        let n = shape.iter().product();
        Self::new(shape.to_vec(), vec![value; n])
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> f32) -> Result<Self> {
        let n = shape.iter().product();
        Self::new(shape.to_vec(), (0..n).map(&mut f).collect())
    }

    /// Internal constructor for values produced by ops that already
    /// validated the shape; still checks finiteness.
    pub(crate) fn from_op(shape: Vec<usize>, data: Vec<f32>, op: &'static str) -> Result<Self> {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(op));
        }
        Ok(Self { shape, data })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Self> {
        if shape.iter().product::<usize>() != self.data.len() {
            return shape_err(format!("cannot reshape {:?} into {shape:?}", self.shape));
        }
        Self::new(shape.to_vec(), self.data)
    }

    /// Elementwise map; the result is re-validated for finiteness.
    pub fn map(&self, f: impl Fn(f32) -> f32) -> Result<Self> {
        Self::from_op(
            self.shape.clone(),
            self.data.iter().map(|&v| f(v)).collect(),
            "map",
        )
    }

    pub fn zip_with(&self, other: &Tensor, f: impl Fn(f32, f32) -> f32) -> Result<Self> {
        if self.shape != other.shape {
            return shape_err(format!(
                "elementwise operands {:?} and {:?} differ",
                self.shape, other.shape
            ));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Self::from_op(self.shape.clone(), data, "zip_with")
    }

    pub fn add(&self, other: &Tensor) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Self> {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn scale(&self, s: f32) -> Result<Self> {
        self.map(|v| v * s)
    }

    pub fn max_abs(&self) -> f32 {
        self.data.iter().fold(0.0f32, |m, v| m.max(v.abs()))
    }

    /// Largest elementwise `|a - b| / max(|a|, |b|, floor)`.
    pub fn max_rel_diff(&self, other: &Tensor, floor: f32) -> Result<f32> {
        if self.shape != other.shape {
            return shape_err(format!("{:?} vs {:?}", self.shape, other.shape));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b).abs() / a.abs().max(b.abs()).max(floor))
            .fold(0.0, f32::max))
    }
}

/// Shape of a 2-D convolution: channels, square-or-rectangular kernel,
/// symmetric zero padding and a common stride.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: usize,
    pub input_h: usize,
    pub input_w: usize,
}

impl ConvGeometry {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            self.in_channels,
            self.out_channels,
            self.kernel_h,
            self.kernel_w,
            self.stride,
            self.input_h,
            self.input_w,
        ];
        if dims.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "conv geometry has a zero extent: {self:?}"
            )));
        }
        if self.input_h + 2 * self.padding < self.kernel_h
            || self.input_w + 2 * self.padding < self.kernel_w
        {
            return Err(Error::InvalidArgument(format!(
                "kernel {}x{} does not fit padded input {}x{}",
                self.kernel_h, self.kernel_w, self.input_h, self.input_w
            )));
        }
        Ok(())
    }

    pub fn output_h(&self) -> usize {
        (self.input_h + 2 * self.padding - self.kernel_h) / self.stride + 1
    }

    pub fn output_w(&self) -> usize {
        (self.input_w + 2 * self.padding - self.kernel_w) / self.stride + 1
    }

    /// Multiply-accumulates per output element.
    pub fn window_len(&self) -> usize {
        self.in_channels * self.kernel_h * self.kernel_w
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_length_mismatch_and_nan() {
        assert!(Tensor::new(vec![2, 2], vec![0.0; 3]).is_err());
        assert!(Tensor::new(vec![1], vec![f32::NAN]).is_err());
        assert!(Tensor::new(vec![0, 2], vec![]).is_err());
    }

    #[test]
    fn map_overflow_is_an_error() {
        let t = Tensor::full(&[2], 3.0e38).unwrap();
        assert!(matches!(t.scale(10.0), Err(Error::NonFinite(_))));
    }

    #[test]
    fn conv_output_extent() {
        let g = ConvGeometry {
            in_channels: 3,
            out_channels: 96,
            kernel_h: 12,
            kernel_w: 12,
            stride: 4,
            padding: 0,
            input_h: 224,
            input_w: 224,
        };
        assert_eq!(g.output_h(), 54);
        assert_eq!(g.window_len(), 3 * 144);
    }
}
