//! Weight and activation quantizers.
//!
//! Weights are hard-clipped to [-1, 1] and mapped onto a symmetric signed
//! grid of `2^(k-1) - 1` steps per side; activations are clipped to [0, 1]
//! and mapped onto an unsigned grid of `2^k - 1` steps. Binary weights use
//! sign-and-mean-magnitude (BWN). The DoReFa weight quantizer is kept as a
//! reference point.
//!
//! Rounding is half away from zero everywhere (`f64::round`). `sign(0)` is
//! taken as +1 for binarisation.

use std::io::{Read, Write};

use crate::error::{shape_err, Error, Result};
use crate::tensor::{self, Tensor};

pub const MAX_QUANT_BITS: u32 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OperandKind {
    Weight,
    Activation,
}

impl OperandKind {
    /// Clip range applied before quantisation.
    pub fn clip_range(self) -> (f32, f32) {
        match self {
            OperandKind::Weight => (-1.0, 1.0),
            OperandKind::Activation => (0.0, 1.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum QuantFamily {
    Wrpn,
    Dorefa,
    BwnBinary,
}

/// Bit width, operand kind and quantizer family, validated together.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct QuantSpec {
    bits: u32,
    kind: OperandKind,
    family: QuantFamily,
}

impl QuantSpec {
    pub fn new(bits: u32, kind: OperandKind, family: QuantFamily) -> Result<Self> {
        if bits == 0 || bits > MAX_QUANT_BITS {
            return Err(Error::QuantSpec(format!(
                "bit width {bits} outside 1..={MAX_QUANT_BITS}"
            )));
        }
        match (family, kind, bits) {
            (QuantFamily::BwnBinary, OperandKind::Weight, 1) => {}
            (QuantFamily::BwnBinary, _, _) => {
                return Err(Error::QuantSpec(
                    "bwn-binary is defined only for 1-bit weights".into(),
                ))
            }
            (QuantFamily::Wrpn, OperandKind::Weight, 1) => {
                return Err(Error::QuantSpec(
                    "1-bit weights have no symmetric grid; use the bwn-binary family".into(),
                ))
            }
            (QuantFamily::Dorefa, OperandKind::Activation, _) => {
                return Err(Error::QuantSpec(
                    "the DoReFa reference quantizer is weight-only".into(),
                ))
            }
            (QuantFamily::Dorefa, OperandKind::Weight, 1) => {
                return Err(Error::QuantSpec("DoReFa weights need k > 1".into()))
            }
            _ => {}
        }
        Ok(Self { bits, kind, family })
    }

    pub fn wrpn_weights(bits: u32) -> Result<Self> {
        Self::new(bits, OperandKind::Weight, QuantFamily::Wrpn)
    }

    pub fn wrpn_acts(bits: u32) -> Result<Self> {
        Self::new(bits, OperandKind::Activation, QuantFamily::Wrpn)
    }

    pub fn bwn() -> Self {
        Self {
            bits: 1,
            kind: OperandKind::Weight,
            family: QuantFamily::BwnBinary,
        }
    }

    /// Default family for a bit width: BWN for 1-bit weights, WRPN otherwise.
    pub fn for_bits(bits: u32, kind: OperandKind) -> Result<Self> {
        if bits == 1 && kind == OperandKind::Weight {
            Ok(Self::bwn())
        } else {
            Self::new(bits, kind, QuantFamily::Wrpn)
        }
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn kind(&self) -> OperandKind {
        self.kind
    }

    pub fn family(&self) -> QuantFamily {
        self.family
    }

    pub fn is_signed(&self) -> bool {
        self.kind == OperandKind::Weight
    }

    /// Largest code magnitude: `2^(k-1) - 1` for WRPN weights, `2^k - 1`
    /// for activations and DoReFa (odd codes in `[-L, L]`), 1 for BWN.
    pub fn max_code(&self) -> i32 {
        match (self.family, self.kind) {
            (QuantFamily::BwnBinary, _) => 1,
            (QuantFamily::Wrpn, OperandKind::Weight) => (1 << (self.bits - 1)) - 1,
            _ => (1 << self.bits) - 1,
        }
    }

    /// Bytes per code in the serialized form.
    pub fn code_bytes(&self) -> usize {
        let m = self.max_code();
        let fits_one = if self.is_signed() {
            m <= i8::MAX as i32
        } else {
            m <= u8::MAX as i32
        };
        if fits_one {
            1
        } else {
            2
        }
    }
}

/// Integer codes plus one positive scale; `value = code as f32 * scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedTensor {
    codes: Vec<i32>,
    scale: f32,
    spec: QuantSpec,
    shape: Vec<usize>,
}

impl QuantizedTensor {
    pub fn new(codes: Vec<i32>, scale: f32, spec: QuantSpec, shape: Vec<usize>) -> Result<Self> {
        if shape.iter().product::<usize>() != codes.len() || shape.contains(&0) {
            return shape_err(format!("{} codes for shape {shape:?}", codes.len()));
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "scale must be positive, got {scale}"
            )));
        }
        let m = spec.max_code();
        let lo = if spec.is_signed() { -m } else { 0 };
        if let Some(&c) = codes.iter().find(|&&c| c < lo || c > m) {
            return Err(Error::CodeDomain {
                what: "quantized tensor",
                code: c,
            });
        }
        if spec.family == QuantFamily::BwnBinary && codes.contains(&0) {
            return Err(Error::CodeDomain {
                what: "binary weights",
                code: 0,
            });
        }
        Ok(Self {
            codes,
            scale,
            spec,
            shape,
        })
    }

    pub fn codes(&self) -> &[i32] {
        &self.codes
    }

    pub fn scale(&self) -> f32 {
        self.scale
    }

    pub fn spec(&self) -> QuantSpec {
        self.spec
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn dequantize(&self) -> Tensor {
        let data = self.codes.iter().map(|&c| c as f32 * self.scale).collect();
        Tensor::new(self.shape.clone(), data).expect("codes and scale are finite")
    }
}

fn check_range(x: &Tensor, kind: OperandKind, what: &'static str) -> Result<()> {
    let (lo, hi) = kind.clip_range();
    match x.data().iter().find(|&&v| v < lo || v > hi) {
        Some(&value) => Err(Error::OutOfRange {
            what,
            value,
            lo,
            hi,
        }),
        None => Ok(()),
    }
}

/// Clamp to [-1, 1]. Tensors cannot hold NaN, so the NaN error surfaces at
/// tensor construction.
pub fn clip_weights(x: &Tensor) -> Tensor {
    x.map(|v| v.clamp(-1.0, 1.0))
        .expect("clamping keeps values finite")
}

/// Clamp to [0, 1].
pub fn clip_acts(x: &Tensor) -> Tensor {
    x.map(|v| v.clamp(0.0, 1.0))
        .expect("clamping keeps values finite")
}

pub(crate) fn grid_code(v: f32, levels: i32) -> i32 {
    (f64::from(v) * f64::from(levels)).round() as i32
}

pub fn quantize_weights_wrpn(x: &Tensor, bits: u32) -> Result<QuantizedTensor> {
    if bits < 2 {
        return Err(Error::QuantSpec(format!(
            "{bits}-bit WRPN weights are undefined; binarize with binarize_weights_bwn"
        )));
    }
    let spec = QuantSpec::wrpn_weights(bits)?;
    check_range(x, OperandKind::Weight, "quantize_weights_wrpn")?;
    let levels = spec.max_code();
    let codes = x.data().iter().map(|&v| grid_code(v, levels)).collect();
    QuantizedTensor::new(codes, 1.0 / levels as f32, spec, x.shape().to_vec())
}

pub fn quantize_acts_wrpn(x: &Tensor, bits: u32) -> Result<QuantizedTensor> {
    let spec = QuantSpec::wrpn_acts(bits)?;
    check_range(x, OperandKind::Activation, "quantize_acts_wrpn")?;
    let levels = spec.max_code();
    let codes = x.data().iter().map(|&v| grid_code(v, levels)).collect();
    QuantizedTensor::new(codes, 1.0 / levels as f32, spec, x.shape().to_vec())
}

/// DoReFa weights as odd integer codes in `[-(2^k-1), 2^k-1]` with scale
/// `1/(2^k-1)`; the quantized value is `2·q - 1` where `q` is the k-bit
/// activation-grid quantization of `tanh(w)/(2·max|tanh(w)|) + 1/2`.
/// `max|tanh|` is taken over the whole tensor.
pub fn quantize_weights_dorefa_codes(x: &Tensor, bits: u32) -> Result<QuantizedTensor> {
    let spec = QuantSpec::new(bits, OperandKind::Weight, QuantFamily::Dorefa)?;
    let t: Vec<f64> = x.data().iter().map(|&v| f64::from(v).tanh()).collect();
    let max = t.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max == 0.0 {
        return Err(Error::InvalidArgument(
            "DoReFa is undefined for an all-zero tensor".into(),
        ));
    }
    let levels = spec.max_code();
    let codes = t
        .iter()
        .map(|&v| {
            let unit = v / (2.0 * max) + 0.5;
            let q = (unit * f64::from(levels)).round() as i32;
            2 * q - levels
        })
        .collect();
    QuantizedTensor::new(codes, 1.0 / levels as f32, spec, x.shape().to_vec())
}

pub fn quantize_weights_dorefa(x: &Tensor, bits: u32) -> Result<Tensor> {
    Ok(quantize_weights_dorefa_codes(x, bits)?.dequantize())
}

/// Sign codes (zero maps to +1) scaled by the mean magnitude of the tensor.
pub fn binarize_weights_bwn(x: &Tensor) -> Result<QuantizedTensor> {
    let (codes, scale) = bwn_slice(x.data());
    QuantizedTensor::new(codes, scale, QuantSpec::bwn(), x.shape().to_vec())
}

/// Per-output-channel BWN: one scale per leading-axis slice.
pub fn binarize_weights_bwn_per_channel(x: &Tensor) -> Result<Vec<QuantizedTensor>> {
    let rows = x.shape()[0];
    let inner = x.len() / rows;
    x.data()
        .chunks_exact(inner)
        .map(|row| {
            let (codes, scale) = bwn_slice(row);
            QuantizedTensor::new(codes, scale, QuantSpec::bwn(), vec![inner])
        })
        .collect()
}

/// Codes and mean-|w| scale. An all-zero slice gets scale 1 so the
/// reconstructed values stay nonzero-scaled signs.
pub(crate) fn bwn_slice(w: &[f32]) -> (Vec<i32>, f32) {
    let codes = w.iter().map(|&v| if v < 0.0 { -1 } else { 1 }).collect();
    let mean = w.iter().map(|v| f64::from(v.abs())).sum::<f64>() / w.len() as f64;
    let scale = if mean > 0.0 { mean as f32 } else { 1.0 };
    (codes, scale)
}

/// Straight-through backward: the rounding step passes gradient unchanged;
/// the clip step zeroes it where the pre-clip input lies strictly outside
/// the clip range of `spec`'s operand kind.
pub fn ste_backward(upstream: &Tensor, pre_clip: &Tensor, spec: QuantSpec) -> Result<Tensor> {
    if upstream.shape() != pre_clip.shape() {
        return shape_err(format!(
            "upstream gradient {:?} vs quantizer input {:?}",
            upstream.shape(),
            pre_clip.shape()
        ));
    }
    let (lo, hi) = spec.kind().clip_range();
    upstream.zip_with(pre_clip, |g, x| if x < lo || x > hi { 0.0 } else { g })
}

const QUANT_MAGIC: &[u8; 8] = b"WRPNQTZ1";

fn family_tag(f: QuantFamily) -> u8 {
    match f {
        QuantFamily::Wrpn => 0,
        QuantFamily::Dorefa => 1,
        QuantFamily::BwnBinary => 2,
    }
}

impl QuantizedTensor {
    /// Container: magic `WRPNQTZ1`, then family tag, kind tag, k and a
    /// signedness flag (one byte each), scale as f32 LE, then the tensor
    /// shape block, then one code per element in `code_bytes` bytes LE.
    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(QUANT_MAGIC)?;
        let kind = match self.spec.kind {
            OperandKind::Weight => 0u8,
            OperandKind::Activation => 1,
        };
        w.write_all(&[
            family_tag(self.spec.family),
            kind,
            self.spec.bits as u8,
            self.spec.is_signed() as u8,
        ])?;
        w.write_all(&self.scale.to_le_bytes())?;
        tensor::io_shape::write(w, &self.shape)?;
        let width = self.spec.code_bytes();
        for &c in &self.codes {
            if width == 1 {
                w.write_all(&[c as u8])?;
            } else {
                w.write_all(&(c as i16).to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let bad = |detail: &str| Error::Format {
            what: "quantized tensor",
            detail: detail.into(),
        };
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != QUANT_MAGIC {
            return Err(bad("bad magic"));
        }
        let mut hdr = [0u8; 8];
        r.read_exact(&mut hdr)?;
        let family = match hdr[0] {
            0 => QuantFamily::Wrpn,
            1 => QuantFamily::Dorefa,
            2 => QuantFamily::BwnBinary,
            _ => return Err(bad("unknown family tag")),
        };
        let kind = match hdr[1] {
            0 => OperandKind::Weight,
            1 => OperandKind::Activation,
            _ => return Err(bad("unknown operand kind")),
        };
        let spec = QuantSpec::new(u32::from(hdr[2]), kind, family)?;
        if (hdr[3] != 0) != spec.is_signed() {
            return Err(bad("signedness flag disagrees with operand kind"));
        }
        let scale = f32::from_le_bytes([hdr[4], hdr[5], hdr[6], hdr[7]]);
        let shape = tensor::io_shape::read(r, "quantized tensor")?;
        let n: usize = shape.iter().product();
        let width = spec.code_bytes();
        let mut bytes = vec![0u8; n * width];
        r.read_exact(&mut bytes)?;
        let codes = if width == 1 {
            bytes
                .iter()
                .map(|&b| {
                    if spec.is_signed() {
                        b as i8 as i32
                    } else {
                        b as i32
                    }
                })
                .collect()
        } else {
            bytes
                .chunks_exact(2)
                .map(|c| {
                    let raw = [c[0], c[1]];
                    if spec.is_signed() {
                        i16::from_le_bytes(raw) as i32
                    } else {
                        u16::from_le_bytes(raw) as i32
                    }
                })
                .collect()
        };
        Self::new(codes, scale, spec, shape)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out)
            .expect("writing to a Vec cannot fail");
        out
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<Self> {
        Self::read_from(&mut bytes)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(v: &[f32]) -> Tensor {
        Tensor::new(vec![v.len()], v.to_vec()).unwrap()
    }

    /// Scalar oracle: direct grid evaluation in f64 with an explicit
    /// half-away-from-zero rule.
    fn oracle_round(x: f64) -> f64 {
        let f = x.abs().floor();
        let r = if x.abs() - f >= 0.5 { f + 1.0 } else { f };
        r.copysign(x)
    }

    #[test]
    fn clipping() {
        assert_eq!(
            clip_weights(&t(&[1.7, -0.3, -5.0, 0.0, 5.0])).data(),
            &[1.0, -0.3, -1.0, 0.0, 1.0]
        );
        assert_eq!(clip_acts(&t(&[-0.2, 0.4, 2.0])).data(), &[0.0, 0.4, 1.0]);
        assert!(Tensor::new(vec![1], vec![f32::NAN]).is_err());
    }

    #[test]
    fn wrpn_weight_points() {
        let q = quantize_weights_wrpn(&t(&[0.6]), 2).unwrap();
        assert_eq!((q.codes()[0], q.scale()), (1, 1.0));
        assert_eq!(q.dequantize().data(), &[1.0]);

        let q = quantize_weights_wrpn(&t(&[0.3]), 4).unwrap();
        assert_eq!(q.codes()[0], 2);
        assert_eq!(q.scale(), 1.0 / 7.0);
        assert!((q.dequantize().data()[0] - 2.0 / 7.0).abs() < 1e-7);

        let q = quantize_weights_wrpn(&t(&[-0.5]), 2).unwrap();
        assert_eq!(q.codes()[0], oracle_round(-0.5) as i32);
        assert_eq!(q.dequantize().data(), &[-1.0]);
    }

    #[test]
    fn ternary_grid_at_two_bits() {
        let x = Tensor::from_fn(&[201], |i| i as f32 / 100.0 - 1.0).unwrap();
        let q = quantize_weights_wrpn(&x, 2).unwrap();
        let mut levels: Vec<i32> = q.codes().to_vec();
        levels.sort();
        levels.dedup();
        assert_eq!(levels, vec![-1, 0, 1]);
    }

    #[test]
    fn wrpn_weight_errors() {
        assert!(matches!(
            quantize_weights_wrpn(&t(&[0.1]), 1),
            Err(Error::QuantSpec(_))
        ));
        assert!(matches!(
            quantize_weights_wrpn(&t(&[1.5]), 4),
            Err(Error::OutOfRange { .. })
        ));
        assert!(quantize_acts_wrpn(&t(&[-0.1]), 4).is_err());
    }

    #[test]
    fn wrpn_act_points() {
        let q = quantize_acts_wrpn(&t(&[0.49, 0.51]), 1).unwrap();
        assert_eq!(q.codes(), &[0, 1]);
        let q = quantize_acts_wrpn(&t(&[0.5]), 2).unwrap();
        assert_eq!(q.codes()[0], oracle_round(1.5) as i32);
        assert_eq!(q.codes()[0], 2);
        assert!((q.dequantize().data()[0] - 2.0 / 3.0).abs() < 1e-7);
        let q = quantize_acts_wrpn(&t(&[1.0]), 4).unwrap();
        assert_eq!((q.codes()[0], q.dequantize().data()[0]), (15, 1.0));
    }

    #[test]
    fn dorefa_points() {
        // tanh(±1) = ±0.76159; normalised to {0, 0.5, 1}; 3·0.5 = 1.5 rounds to 2.
        let y = quantize_weights_dorefa(&t(&[-1.0, 0.0, 1.0]), 2).unwrap();
        assert_eq!(y.data()[0], -1.0);
        assert!((y.data()[1] - 1.0 / 3.0).abs() < 1e-7);
        assert_eq!(y.data()[2], 1.0);
        for c in [0.01f32, 0.7, 3.0] {
            for k in [2, 3, 5] {
                assert_eq!(
                    quantize_weights_dorefa(&t(&[-c, c]), k).unwrap().data(),
                    &[-1.0, 1.0]
                );
            }
        }
        assert!(quantize_weights_dorefa(&t(&[0.0, 0.0]), 2).is_err());
        assert!(quantize_weights_dorefa(&t(&[0.5]), 1).is_err());
    }

    #[test]
    fn dorefa_is_odd_away_from_ties() {
        let x = Tensor::from_fn(&[64], |i| ((i as f32 * 0.37).sin() * 2.0) + 0.013).unwrap();
        let neg = x.scale(-1.0).unwrap();
        for k in [2, 3, 4, 8] {
            let a = quantize_weights_dorefa(&x, k).unwrap();
            let b = quantize_weights_dorefa(&neg, k).unwrap();
            for (p, q) in a.data().iter().zip(b.data()) {
                assert_eq!(*p, -q);
            }
        }
    }

    #[test]
    fn bwn_points() {
        let q = binarize_weights_bwn(&t(&[0.5, -0.2, 0.3])).unwrap();
        assert_eq!(q.codes(), &[1, -1, 1]);
        assert!((q.scale() - 1.0 / 3.0).abs() < 1e-7);
        let q = binarize_weights_bwn(&t(&[0.1, 0.2, 0.0])).unwrap();
        assert!(q.codes().iter().all(|&c| c == 1));
        let x = t(&[0.4, -0.9, 0.05, -0.3]);
        let a = binarize_weights_bwn(&x).unwrap();
        let b = binarize_weights_bwn(&x.scale(2.0).unwrap()).unwrap();
        assert_eq!(a.codes(), b.codes());
        assert_eq!(b.scale(), 2.0 * a.scale());
    }

    #[test]
    fn bwn_per_channel_scales_each_row() {
        let x = Tensor::new(vec![2, 2], vec![1.0, -3.0, 0.5, 0.5]).unwrap();
        let rows = binarize_weights_bwn_per_channel(&x).unwrap();
        assert_eq!(rows[0].scale(), 2.0);
        assert_eq!(rows[1].scale(), 0.5);
        assert_eq!(rows[0].codes(), &[1, -1]);
    }

    #[test]
    fn spec_invariants() {
        assert!(QuantSpec::new(1, OperandKind::Activation, QuantFamily::BwnBinary).is_err());
        assert!(QuantSpec::new(2, OperandKind::Weight, QuantFamily::BwnBinary).is_err());
        assert!(QuantSpec::new(1, OperandKind::Weight, QuantFamily::Wrpn).is_err());
        assert!(QuantSpec::new(0, OperandKind::Activation, QuantFamily::Wrpn).is_err());
        assert_eq!(
            QuantSpec::for_bits(1, OperandKind::Weight).unwrap(),
            QuantSpec::bwn()
        );
        assert_eq!(QuantSpec::wrpn_weights(8).unwrap().max_code(), 127);
        assert_eq!(QuantSpec::wrpn_acts(8).unwrap().max_code(), 255);
    }

    #[test]
    fn ste_points() {
        let act = QuantSpec::wrpn_acts(4).unwrap();
        let wt = QuantSpec::wrpn_weights(4).unwrap();
        assert_eq!(
            ste_backward(&t(&[1.0]), &t(&[0.4]), act).unwrap().data(),
            &[1.0]
        );
        assert_eq!(
            ste_backward(&t(&[1.0]), &t(&[1.7]), wt).unwrap().data(),
            &[0.0]
        );
        assert_eq!(
            ste_backward(&t(&[1.0, 1.0]), &t(&[-0.1, 1.0]), act)
                .unwrap()
                .data(),
            &[0.0, 1.0]
        );
        assert!(ste_backward(&t(&[1.0]), &t(&[1.0, 2.0]), act).is_err());
    }

    #[test]
    fn ste_matches_finite_differences_of_clip() {
        // Round replaced by identity leaves clip; its central difference
        // away from the kinks is 0 or 1.
        let xs: Vec<f32> = (0..200).map(|i| i as f32 * 0.0173 - 1.6).collect();
        let up: Vec<f32> = (0..200)
            .map(|i| ((i * 7) % 13) as f32 * 0.25 - 1.0)
            .collect();
        for spec in [
            QuantSpec::wrpn_weights(3).unwrap(),
            QuantSpec::wrpn_acts(3).unwrap(),
        ] {
            let (lo, hi) = spec.kind().clip_range();
            let g = ste_backward(&t(&up), &t(&xs), spec).unwrap();
            for ((&x, &u), &gv) in xs.iter().zip(&up).zip(g.data()) {
                let x = f64::from(x);
                let h = 1e-6;
                let clip = |v: f64| v.clamp(f64::from(lo), f64::from(hi));
                let fd = f64::from(u) * (clip(x + h) - clip(x - h)) / (2.0 * h);
                assert!(
                    (fd - f64::from(gv)).abs() <= 1e-4 * fd.abs().max(1.0),
                    "x={x}"
                );
            }
        }
    }

    #[test]
    fn serialization_round_trip_and_tags() {
        let q = quantize_weights_wrpn(&t(&[-1.0, -0.2, 0.5, 0.9]), 2).unwrap();
        let bytes = q.to_bytes();
        assert_eq!(&bytes[8..12], &[0, 0, 2, 1]);
        assert_eq!(QuantizedTensor::from_bytes(&bytes).unwrap(), q);
        let a = quantize_acts_wrpn(&t(&[0.0, 1.0]), 8).unwrap();
        assert_eq!(
            QuantizedTensor::from_bytes(&a.to_bytes()).unwrap().codes(),
            &[0, 255]
        );
        let d = quantize_weights_dorefa_codes(&t(&[-0.5, 0.25, 1.0]), 8).unwrap();
        assert_eq!(d.spec().code_bytes(), 2);
        assert_eq!(QuantizedTensor::from_bytes(&d.to_bytes()).unwrap(), d);
    }
}
