use std::sync::OnceLock;

use rayon::prelude::*;

use super::packed::{
    decode_nibble, BinaryDomain, PackedBinaryMatrix, PackedInt4Matrix, PackedTernaryMatrix,
    Signedness,
};
use super::{pack_binary, pack_int4, pack_ternary, IntMatrix};
use crate::error::{shape_err, Error, Result};

/// Reduction-length limits that keep every accumulator inside i32:
/// |act·weight| ≤ 15·7 for the INT4 paths, 1 for binary.
pub const MAX_K_I4I4: usize = 1 << 20;
pub const MAX_K_I4TER: usize = 1 << 20;
pub const MAX_K_BINARY: usize = 1 << 30;

const PAR_THRESHOLD: usize = 1 << 18;

fn check(m_cols: usize, w_cols: usize, max_k: usize) -> Result<()> {
    if m_cols != w_cols {
        return shape_err(format!(
            "reduction lengths differ: acts K={m_cols}, weights K={w_cols}"
        ));
    }
    if m_cols > max_k {
        return Err(Error::InvalidArgument(format!(
            "K={m_cols} exceeds the accumulator bound {max_k}"
        )));
    }
    Ok(())
}

/// Fills an M×N accumulator matrix row by row, in parallel for large
/// problems. Each element is computed independently, so the result does
/// not depend on scheduling.
fn fill(m: usize, n: usize, work: usize, f: impl Fn(usize, &mut [i32]) + Sync) -> IntMatrix {
    let mut data = vec![0i32; m * n];
    if work >= PAR_THRESHOLD {
        data.par_chunks_mut(n)
            .enumerate()
            .for_each(|(i, row)| f(i, row));
    } else {
        data.chunks_mut(n)
            .enumerate()
            .for_each(|(i, row)| f(i, row));
    }
    IntMatrix {
        rows: m,
        cols: n,
        data,
    }
}

/// Byte-pair product table: entry `(a << 8) | w` holds
/// `a.lo·w.lo + a.hi·w.hi` for an unsigned activation byte and a signed
/// weight byte.
fn i4_lut() -> &'static [i16] {
    static LUT: OnceLock<Vec<i16>> = OnceLock::new();
    LUT.get_or_init(|| {
        let mut t = vec![0i16; 1 << 16];
        for a in 0..256usize {
            for w in 0..256usize {
                let (a, w) = (a as u8, w as u8);
                let lo = decode_nibble(a & 0x0f, Signedness::Unsigned)
                    * decode_nibble(w & 0x0f, Signedness::Signed);
                let hi = decode_nibble(a >> 4, Signedness::Unsigned)
                    * decode_nibble(w >> 4, Signedness::Signed);
                t[(usize::from(a) << 8) | usize::from(w)] = (lo + hi) as i16;
            }
        }
        t
    })
}

/// Unsigned INT4 activations (M×K) against signed INT4 weights (N×K).
pub fn gemm_i4i4(acts: &PackedInt4Matrix, weights: &PackedInt4Matrix) -> Result<IntMatrix> {
    if acts.signedness() != Signedness::Unsigned || weights.signedness() != Signedness::Signed {
        return Err(Error::InvalidArgument(
            "gemm_i4i4 takes unsigned activations and signed weights".into(),
        ));
    }
    check(acts.cols(), weights.cols(), MAX_K_I4I4)?;
    let lut = i4_lut();
    let (m, n, k) = (acts.rows(), weights.rows(), acts.cols());
    Ok(fill(m, n, m * n * k, |i, out| {
        let a = acts.row(i);
        for (j, o) in out.iter_mut().enumerate() {
            let w = weights.row(j);
            *o = a
                .iter()
                .zip(w)
                .map(|(&ab, &wb)| i32::from(lut[(usize::from(ab) << 8) | usize::from(wb)]))
                .sum();
        }
    }))
}

/// Unsigned INT4 activations against ternary weights. The inner loop only
/// selects, negates and adds activation codes.
pub fn gemm_i4ter(acts: &PackedInt4Matrix, weights: &PackedTernaryMatrix) -> Result<IntMatrix> {
    if acts.signedness() != Signedness::Unsigned {
        return Err(Error::InvalidArgument(
            "gemm_i4ter takes unsigned activations".into(),
        ));
    }
    check(acts.cols(), weights.cols(), MAX_K_I4TER)?;
    let (m, n, k) = (acts.rows(), weights.rows(), acts.cols());
    Ok(fill(m, n, m * n * k, |i, out| {
        let a: Vec<i32> = acts
            .row(i)
            .iter()
            .flat_map(|&b| [i32::from(b & 0x0f), i32::from(b >> 4)])
            .take(k)
            .collect();
        for (j, o) in out.iter_mut().enumerate() {
            let (nz, sg) = (weights.nonzero_row(j), weights.sign_row(j));
            let mut acc = 0i32;
            for (byte, chunk) in a.chunks(8).enumerate() {
                let (zb, sb) = (nz[byte], sg[byte]);
                if zb == 0 {
                    continue;
                }
                for (bit, &av) in chunk.iter().enumerate() {
                    let keep = -i32::from((zb >> bit) & 1);
                    let neg = -i32::from((sb >> bit) & 1);
                    // (av ^ neg) - neg is av or -av; `& keep` drops zeros.
                    acc += ((av ^ neg) - neg) & keep;
                }
            }
            *o = acc;
        }
    }))
}

fn words(row: &[u8]) -> Vec<u64> {
    row.chunks(8)
        .map(|c| {
            let mut buf = [0u8; 8];
            buf[..c.len()].copy_from_slice(c);
            u64::from_le_bytes(buf)
        })
        .collect()
}

/// {0,1} activations against ±1 weights:
/// `popcount(a & w⁺) - popcount(a & !w⁺)` per output.
pub fn gemm_binary(acts: &PackedBinaryMatrix, weights: &PackedBinaryMatrix) -> Result<IntMatrix> {
    if acts.domain() != BinaryDomain::ZeroOne || weights.domain() != BinaryDomain::PlusMinusOne {
        return Err(Error::InvalidArgument(
            "gemm_binary takes {0,1} activations and ±1 weights".into(),
        ));
    }
    check(acts.cols(), weights.cols(), MAX_K_BINARY)?;
    let (m, n, k) = (acts.rows(), weights.rows(), acts.cols());
    let w: Vec<Vec<u64>> = (0..n).map(|j| words(weights.row(j))).collect();
    Ok(fill(m, n, m * n * k / 64, |i, out| {
        let a = words(acts.row(i));
        for (o, wr) in out.iter_mut().zip(&w) {
            let mut pos = 0u32;
            let mut neg = 0u32;
            for (&aw, &ww) in a.iter().zip(wr) {
                pos += (aw & ww).count_ones();
                neg += (aw & !ww).count_ones();
            }
            *o = pos as i32 - neg as i32;
        }
    }))
}

/// ±1 activations against ±1 weights: `K - 2·popcount(a XOR w)`.
pub fn gemm_binary_xnor(
    acts: &PackedBinaryMatrix,
    weights: &PackedBinaryMatrix,
) -> Result<IntMatrix> {
    if acts.domain() != BinaryDomain::PlusMinusOne || weights.domain() != BinaryDomain::PlusMinusOne
    {
        return Err(Error::InvalidArgument(
            "gemm_binary_xnor takes ±1 operands on both sides".into(),
        ));
    }
    check(acts.cols(), weights.cols(), MAX_K_BINARY)?;
    let (m, n, k) = (acts.rows(), weights.rows(), acts.cols());
    let w: Vec<Vec<u64>> = (0..n).map(|j| words(weights.row(j))).collect();
    Ok(fill(m, n, m * n * k / 64, |i, out| {
        let a = words(acts.row(i));
        for (o, wr) in out.iter_mut().zip(&w) {
            // Padding bits are zero on both sides, so they never differ.
            let diff: u32 = a.iter().zip(wr).map(|(&x, &y)| (x ^ y).count_ones()).sum();
            *o = k as i32 - 2 * diff as i32;
        }
    }))
}

/// Plain i32 dot products on unpacked codes, for widths no packed kernel
/// covers (e.g. 8-bit operands).
pub fn gemm_dense_i32(
    acts: &[i32],
    m: usize,
    k: usize,
    weights: &[i32],
    n: usize,
) -> Result<IntMatrix> {
    if acts.len() != m * k || weights.len() != n * k {
        return shape_err(format!(
            "dense gemm operands do not match {m}x{k} · ({n}x{k})ᵀ"
        ));
    }
    Ok(fill(m, n, m * n * k, |i, out| {
        let a = &acts[i * k..(i + 1) * k];
        for (j, o) in out.iter_mut().enumerate() {
            let w = &weights[j * k..(j + 1) * k];
            *o = a.iter().zip(w).map(|(&x, &y)| x * y).sum();
        }
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelChoice {
    Binary,
    Int4Ternary,
    Int4Int4,
    DenseI32,
}

impl KernelChoice {
    /// Narrowest kernel able to hold unsigned `act_bits` activations and
    /// signed `weight_bits` weights (1-bit weights are ±1).
    pub fn select(act_bits: u32, weight_bits: u32) -> Self {
        match (act_bits, weight_bits) {
            (1, 1) => KernelChoice::Binary,
            (a, w) if a <= 4 && w <= 2 => KernelChoice::Int4Ternary,
            (a, w) if a <= 4 && w <= 4 => KernelChoice::Int4Int4,
            _ => KernelChoice::DenseI32,
        }
    }
}

/// Packs raw codes for the selected kernel and runs it.
///
/// `acts` is M×K unsigned, `weights` is N×K signed.
pub fn quantized_gemm(
    acts: &[i32],
    m: usize,
    k: usize,
    act_bits: u32,
    weights: &[i32],
    n: usize,
    weight_bits: u32,
) -> Result<(IntMatrix, KernelChoice)> {
    let choice = KernelChoice::select(act_bits, weight_bits);
    let acc = match choice {
        KernelChoice::Binary => gemm_binary(
            &pack_binary(acts, m, k, BinaryDomain::ZeroOne, 1.0)?,
            &pack_binary(weights, n, k, BinaryDomain::PlusMinusOne, 1.0)?,
        )?,
        KernelChoice::Int4Ternary => gemm_i4ter(
            &pack_int4(acts, m, k, Signedness::Unsigned)?,
            &pack_ternary(weights, n, k, 1.0)?,
        )?,
        KernelChoice::Int4Int4 => gemm_i4i4(
            &pack_int4(acts, m, k, Signedness::Unsigned)?,
            &pack_int4(weights, n, k, Signedness::Signed)?,
        )?,
        KernelChoice::DenseI32 => gemm_dense_i32(acts, m, k, weights, n)?,
    };
    Ok((acc, choice))
}
