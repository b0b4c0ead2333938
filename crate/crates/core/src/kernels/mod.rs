//! Bit-packed low-precision matrices and exact integer GEMMs.
//!
//! Every GEMM computes `acts (M×K) · weightsᵀ` where the weight operand is
//! stored as N rows of length K (output-major, the usual `[out, in]`
//! layer layout), so both operands are contiguous along the reduction
//! axis. Results are 32-bit signed accumulators; scaling back to real
//! values is a separate [`dequantize_accumulators`] step.

mod bench;
mod gemm;
mod packed;

pub use bench::{bench_gemm, BenchConfig, BenchMode, BenchRow, BENCH_CSV_HEADER};
pub use gemm::{
    gemm_binary, gemm_binary_xnor, gemm_dense_i32, gemm_i4i4, gemm_i4ter, quantized_gemm,
    KernelChoice, MAX_K_BINARY, MAX_K_I4I4, MAX_K_I4TER,
};
pub use packed::{
    pack_binary, pack_int4, pack_ternary, BinaryDomain, PackedBinaryMatrix, PackedInt4Matrix,
    PackedTernaryMatrix, Signedness, PACKED_HEADER_BYTES,
};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Row-major matrix of 32-bit integer accumulators.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<i32>,
}

impl IntMatrix {
    pub fn get(&self, r: usize, c: usize) -> i32 {
        self.data[r * self.cols + c]
    }
}

/// `acc · (scale_w · scale_a)`, formed in f64 and rounded once to f32.
pub fn dequantize_accumulators(acc: &IntMatrix, scale_w: f32, scale_a: f32) -> Result<Tensor> {
    if !(scale_w > 0.0 && scale_a > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "dequantization scales must be positive, got {scale_w} and {scale_a}"
        )));
    }
    let s = f64::from(scale_w) * f64::from(scale_a);
    Tensor::new(
        vec![acc.rows, acc.cols],
        acc.data
            .iter()
            .map(|&a| (f64::from(a) * s) as f32)
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dequantize_points() {
        let acc = IntMatrix {
            rows: 1,
            cols: 2,
            data: vec![21, -3],
        };
        let unit = dequantize_accumulators(&acc, 1.0, 1.0).unwrap();
        assert_eq!(unit.data(), &[21.0, -3.0]);
        let y = dequantize_accumulators(&acc, 1.0 / 7.0, 1.0 / 15.0).unwrap();
        assert!((y.data()[0] - 0.2).abs() <= 2.0 * f32::EPSILON * 0.2);
        assert!(dequantize_accumulators(&acc, 0.0, 1.0).is_err());
    }
}
