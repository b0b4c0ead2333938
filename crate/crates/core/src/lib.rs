//! Wide reduced-precision networks.
//!
//! The crate is organised bottom-up:
//!
//! - [`tensor`]: dense FP32 tensors and the reference operators (convolution,
//!   matmul, pooling, normalisation, softmax cross-entropy) that every other
//!   module is checked against.
//! - [`quant`]: clipping, the k-bit weight/activation quantizers, the DoReFa
//!   reference quantizer, BWN binarisation and the straight-through backward rule.
//! - [`kernels`]: bit-packed INT4 / ternary / binary matrices and exact integer
//!   GEMMs over them, plus a small benchmark harness.
//! - [`analyzer`]: network descriptors, FMA counting, widening, the bit-weighted
//!   compute-cost model and the training/inference memory-footprint model.
//! - [`train`]: a layer-wise reverse-mode training engine that builds widened,
//!   quantized networks from descriptors and trains them with momentum SGD.

pub mod analyzer;
pub mod error;
pub mod kernels;
pub mod quant;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{ConvGeometry, Tensor};
