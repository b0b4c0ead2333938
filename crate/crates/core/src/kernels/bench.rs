//! Wall-clock GEMM throughput on the host CPU, per precision mode.
//!
//! Numbers are informational; the only asserted quantity is the
//! per-operand byte count, which is pure arithmetic.

use std::fmt;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    gemm_binary, gemm_i4i4, gemm_i4ter, pack_binary, pack_int4, pack_ternary, BinaryDomain,
    Signedness,
};
use crate::analyzer::first_order_efficiency;
use crate::error::{Error, Result};
use crate::tensor::{matmul_ref, Tensor};

pub const BENCH_CSV_HEADER: &str =
    "mode,M,N,K,ns_per_call,effective_GOPS,bytes_per_operand,speedup_vs_fp32,first_order_efficiency";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchMode {
    Fp32,
    Int4Int4,
    Int4Ternary,
    Binary,
}

impl BenchMode {
    pub const ALL: [BenchMode; 4] = [
        BenchMode::Fp32,
        BenchMode::Int4Int4,
        BenchMode::Int4Ternary,
        BenchMode::Binary,
    ];

    /// (activation bits, weight bits)
    pub fn bits(self) -> (u32, u32) {
        match self {
            BenchMode::Fp32 => (32, 32),
            BenchMode::Int4Int4 => (4, 4),
            BenchMode::Int4Ternary => (4, 2),
            BenchMode::Binary => (1, 1),
        }
    }

    /// Bytes occupied by one length-`k` weight operand.
    pub fn bytes_per_operand(self, k: usize) -> usize {
        match self {
            BenchMode::Fp32 => 4 * k,
            BenchMode::Int4Int4 => k.div_ceil(2),
            BenchMode::Int4Ternary => 2 * k.div_ceil(8),
            BenchMode::Binary => k.div_ceil(8),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "fp32" => Some(BenchMode::Fp32),
            "int4" | "i4i4" => Some(BenchMode::Int4Int4),
            "ternary" | "i4ter" => Some(BenchMode::Int4Ternary),
            "binary" | "bin1" => Some(BenchMode::Binary),
            _ => None,
        }
    }
}

impl fmt::Display for BenchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BenchMode::Fp32 => "fp32",
            BenchMode::Int4Int4 => "int4",
            BenchMode::Int4Ternary => "ternary",
            BenchMode::Binary => "binary",
        })
    }
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub repetitions: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub mode: BenchMode,
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub ns_per_call: f64,
    pub effective_gops: f64,
    pub bytes_per_operand: usize,
    pub speedup_vs_fp32: f64,
    pub first_order_efficiency: f64,
}

impl BenchRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{:.0},{:.3},{},{:.3},{:.3}",
            self.mode,
            self.m,
            self.n,
            self.k,
            self.ns_per_call,
            self.effective_gops,
            self.bytes_per_operand,
            self.speedup_vs_fp32,
            self.first_order_efficiency
        )
    }
}

fn median_ns(reps: usize, mut f: impl FnMut() -> Result<()>) -> Result<f64> {
    let mut samples = Vec::with_capacity(reps);
    for _ in 0..reps {
        let t = Instant::now();
        f()?;
        samples.push(t.elapsed().as_nanos() as f64);
    }
    samples.sort_by(f64::total_cmp);
    Ok(samples[samples.len() / 2])
}

/// Times each requested mode on random operands. The FP32 reference is
/// always measured so every row carries a speedup.
pub fn bench_gemm(config: &BenchConfig, modes: &[BenchMode]) -> Result<Vec<BenchRow>> {
    let BenchConfig {
        m,
        n,
        k,
        repetitions,
        seed,
    } = *config;
    if m == 0 || n == 0 || k == 0 || repetitions == 0 {
        return Err(Error::InvalidArgument(
            "benchmark sizes and repetitions must be positive".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = Tensor::from_fn(&[m, k], |_| rng.gen_range(0..16) as f32)?;
    let b = Tensor::from_fn(&[k, n], |_| rng.gen_range(-7..=7) as f32)?;
    let fp32_ns = median_ns(repetitions, || matmul_ref(&a, &b).map(drop))?;

    let mut rows = Vec::with_capacity(modes.len());
    for &mode in modes {
        let ns = match mode {
            BenchMode::Fp32 => fp32_ns,
            BenchMode::Int4Int4 => {
                let acts: Vec<i32> = (0..m * k).map(|_| rng.gen_range(0..16)).collect();
                let wts: Vec<i32> = (0..n * k).map(|_| rng.gen_range(-7..=7)).collect();
                let pa = pack_int4(&acts, m, k, Signedness::Unsigned)?;
                let pw = pack_int4(&wts, n, k, Signedness::Signed)?;
                median_ns(repetitions, || gemm_i4i4(&pa, &pw).map(drop))?
            }
            BenchMode::Int4Ternary => {
                let acts: Vec<i32> = (0..m * k).map(|_| rng.gen_range(0..16)).collect();
                let wts: Vec<i32> = (0..n * k).map(|_| rng.gen_range(-1..=1)).collect();
                let pa = pack_int4(&acts, m, k, Signedness::Unsigned)?;
                let pw = pack_ternary(&wts, n, k, 1.0)?;
                median_ns(repetitions, || gemm_i4ter(&pa, &pw).map(drop))?
            }
            BenchMode::Binary => {
                let acts: Vec<i32> = (0..m * k).map(|_| rng.gen_range(0..2)).collect();
                let wts: Vec<i32> = (0..n * k)
                    .map(|_| if rng.gen::<bool>() { 1 } else { -1 })
                    .collect();
                let pa = pack_binary(&acts, m, k, BinaryDomain::ZeroOne, 1.0)?;
                let pw = pack_binary(&wts, n, k, BinaryDomain::PlusMinusOne, 1.0)?;
                median_ns(repetitions, || gemm_binary(&pa, &pw).map(drop))?
            }
        };
        let ns = ns.max(1.0);
        let (ba, bw) = mode.bits();
        rows.push(BenchRow {
            mode,
            m,
            n,
            k,
            ns_per_call: ns,
            effective_gops: 2.0 * (m * n * k) as f64 / ns,
            bytes_per_operand: mode.bytes_per_operand(k),
            speedup_vs_fp32: fp32_ns.max(1.0) / ns,
            first_order_efficiency: first_order_efficiency(ba, bw)?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn byte_accounting() {
        let k = 1024;
        assert_eq!(
            BenchMode::Fp32.bytes_per_operand(k) / BenchMode::Binary.bytes_per_operand(k),
            32
        );
        assert_eq!(
            BenchMode::Fp32.bytes_per_operand(k) / BenchMode::Int4Int4.bytes_per_operand(k),
            8
        );
    }

    #[test]
    fn fp32_row_is_its_own_baseline() {
        let cfg = BenchConfig {
            m: 8,
            n: 8,
            k: 64,
            repetitions: 3,
            seed: 1,
        };
        let rows = bench_gemm(&cfg, &BenchMode::ALL).unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[0].speedup_vs_fp32, 1.0);
        assert_eq!(rows[3].first_order_efficiency, 32.0);
        assert_eq!(
            rows[0].csv_line().split(',').count(),
            BENCH_CSV_HEADER.split(',').count()
        );
        assert!(bench_gemm(&BenchConfig { m: 0, ..cfg }, &BenchMode::ALL).is_err());
    }
}
