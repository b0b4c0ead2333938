use crate::error::{shape_err, Error, Result};

/// Fixed per-matrix metadata (rows, cols, tag/scale) counted by
/// `storage_bytes`.
pub const PACKED_HEADER_BYTES: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Signedness {
    /// Codes 0..=15.
    Unsigned,
    /// Codes -7..=7 (the symmetric grid; -8 is never produced).
    Signed,
}

fn check_dims(len: usize, rows: usize, cols: usize) -> Result<()> {
    if rows == 0 || cols == 0 {
        return shape_err(format!(
            "packed matrix needs positive extents, got {rows}x{cols}"
        ));
    }
    if len != rows * cols {
        return shape_err(format!("{len} codes for a {rows}x{cols} matrix"));
    }
    Ok(())
}

/// Two 4-bit codes per byte, row-major; column `2j` in the low nibble.
/// Rows are padded to whole bytes with zero nibbles.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedInt4Matrix {
    rows: usize,
    cols: usize,
    signedness: Signedness,
    payload: Vec<u8>,
}

pub fn pack_int4(
    codes: &[i32],
    rows: usize,
    cols: usize,
    signedness: Signedness,
) -> Result<PackedInt4Matrix> {
    check_dims(codes.len(), rows, cols)?;
    let (lo, hi) = match signedness {
        Signedness::Unsigned => (0, 15),
        Signedness::Signed => (-7, 7),
    };
    let row_bytes = cols.div_ceil(2);
    let mut payload = vec![0u8; rows * row_bytes];
    for (r, row) in codes.chunks_exact(cols).enumerate() {
        let out = &mut payload[r * row_bytes..(r + 1) * row_bytes];
        for (c, &code) in row.iter().enumerate() {
            if code < lo || code > hi {
                return Err(Error::CodeDomain { what: "int4", code });
            }
            let nibble = (code as u8) & 0x0f;
            out[c / 2] |= if c % 2 == 0 { nibble } else { nibble << 4 };
        }
    }
    Ok(PackedInt4Matrix {
        rows,
        cols,
        signedness,
        payload,
    })
}

impl PackedInt4Matrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn signedness(&self) -> Signedness {
        self.signedness
    }

    pub fn row_bytes(&self) -> usize {
        self.cols.div_ceil(2)
    }

    pub fn row(&self, r: usize) -> &[u8] {
        let rb = self.row_bytes();
        &self.payload[r * rb..(r + 1) * rb]
    }

    pub fn payload(&self) -> &[u8] {
        &self.payload
    }

    pub fn get(&self, r: usize, c: usize) -> i32 {
        let byte = self.row(r)[c / 2];
        let nibble = if c.is_multiple_of(2) {
            byte & 0x0f
        } else {
            byte >> 4
        };
        decode_nibble(nibble, self.signedness)
    }

    pub fn unpack(&self) -> Vec<i32> {
        (0..self.rows)
            .flat_map(|r| (0..self.cols).map(move |c| (r, c)))
            .map(|(r, c)| self.get(r, c))
            .collect()
    }

    pub fn payload_bytes(&self) -> usize {
        self.payload.len()
    }

    pub fn storage_bytes(&self) -> usize {
        self.payload_bytes() + PACKED_HEADER_BYTES
    }
}

pub(crate) fn decode_nibble(nibble: u8, signedness: Signedness) -> i32 {
    match signedness {
        Signedness::Unsigned => i32::from(nibble),
        // Sign-extend the 4-bit two's complement value.
        Signedness::Signed => i32::from(((nibble << 4) as i8) >> 4),
    }
}

fn set_bit(plane: &mut [u8], row_bytes: usize, r: usize, c: usize) {
    plane[r * row_bytes + c / 8] |= 1 << (c % 8);
}

/// Zero the bits past `cols` in every row; returns true if any were set.
fn pad_bits_set(plane: &[u8], rows: usize, cols: usize) -> bool {
    let rb = cols.div_ceil(8);
    let tail = cols % 8;
    if tail == 0 {
        return false;
    }
    let mask = !((1u8 << tail) - 1);
    (0..rows).any(|r| plane[r * rb + rb - 1] & mask != 0)
}

/// Ternary weights as two bitplanes: `nonzero` and `sign` (1 = negative).
/// Column `c` of a row is bit `c % 8` of byte `c / 8`.
#[derive(Debug, Clone, PartialEq)]
pub struct PackedTernaryMatrix {
    rows: usize,
    cols: usize,
    nonzero: Vec<u8>,
    sign: Vec<u8>,
    scale: f32,
}

pub fn pack_ternary(
    codes: &[i32],
    rows: usize,
    cols: usize,
    scale: f32,
) -> Result<PackedTernaryMatrix> {
    check_dims(codes.len(), rows, cols)?;
    let rb = cols.div_ceil(8);
    let mut nonzero = vec![0u8; rows * rb];
    let mut sign = vec![0u8; rows * rb];
    for (i, &code) in codes.iter().enumerate() {
        let (r, c) = (i / cols, i % cols);
        match code {
            0 => {}
            1 => set_bit(&mut nonzero, rb, r, c),
            -1 => {
                set_bit(&mut nonzero, rb, r, c);
                set_bit(&mut sign, rb, r, c);
            }
            _ => {
                return Err(Error::CodeDomain {
                    what: "ternary",
                    code,
                })
            }
        }
    }
    PackedTernaryMatrix::from_planes(rows, cols, nonzero, sign, scale)
}

impl PackedTernaryMatrix {
    /// Validates raw bitplanes: a sign bit may only be set where the
    /// nonzero bit is set, and padding bits must be clear.
    pub fn from_planes(
        rows: usize,
        cols: usize,
        nonzero: Vec<u8>,
        sign: Vec<u8>,
        scale: f32,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return shape_err("ternary matrix needs positive extents");
        }
        let expected = rows * cols.div_ceil(8);
        if nonzero.len() != expected || sign.len() != expected {
            return shape_err(format!("bitplanes must be {expected} bytes"));
        }
        if nonzero.iter().zip(&sign).any(|(&n, &s)| s & !n != 0) {
            return Err(Error::InvalidArgument(
                "sign bit set where the nonzero bit is clear".into(),
            ));
        }
        if pad_bits_set(&nonzero, rows, cols) {
            return Err(Error::InvalidArgument(
                "ternary padding bits must be zero".into(),
            ));
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "ternary scale must be positive, got {scale}"
            )));
        }
        Ok(Self {
            rows,
            cols,
            nonzero,
            sign,
            scale,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn scale(&self) -> f32 {
        self.scale
    }

    pub fn row_bytes(&self) -> usize {
        self.cols.div_ceil(8)
    }

    pub fn nonzero_row(&self, r: usize) -> &[u8] {
        let rb = self.row_bytes();
        &self.nonzero[r * rb..(r + 1) * rb]
    }

    pub fn sign_row(&self, r: usize) -> &[u8] {
        let rb = self.row_bytes();
        &self.sign[r * rb..(r + 1) * rb]
    }

    pub fn get(&self, r: usize, c: usize) -> i32 {
        let bit = |plane: &[u8]| (plane[c / 8] >> (c % 8)) & 1;
        match (bit(self.nonzero_row(r)), bit(self.sign_row(r))) {
            (0, _) => 0,
            (_, 0) => 1,
            _ => -1,
        }
    }

    pub fn unpack(&self) -> Vec<i32> {
        (0..self.rows * self.cols)
            .map(|i| self.get(i / self.cols, i % self.cols))
            .collect()
    }

    pub fn payload_bytes(&self) -> usize {
        self.nonzero.len() + self.sign.len()
    }

    pub fn storage_bytes(&self) -> usize {
        self.payload_bytes() + PACKED_HEADER_BYTES
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryDomain {
    /// Bit 1 decodes to 1, bit 0 to 0 (1-bit activations).
    ZeroOne,
    /// Bit 1 decodes to +1, bit 0 to -1 (binarised weights).
    PlusMinusOne,
}

/// One bitplane, rows padded to whole bytes with zero bits.
#[derive(Debug, Clone, PartialEq)]
pub struct PackedBinaryMatrix {
    rows: usize,
    cols: usize,
    bits: Vec<u8>,
    domain: BinaryDomain,
    scale: f32,
}

pub fn pack_binary(
    codes: &[i32],
    rows: usize,
    cols: usize,
    domain: BinaryDomain,
    scale: f32,
) -> Result<PackedBinaryMatrix> {
    check_dims(codes.len(), rows, cols)?;
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "binary scale must be positive, got {scale}"
        )));
    }
    let rb = cols.div_ceil(8);
    let mut bits = vec![0u8; rows * rb];
    for (i, &code) in codes.iter().enumerate() {
        let one = match (domain, code) {
            (BinaryDomain::ZeroOne, 0) | (BinaryDomain::PlusMinusOne, -1) => false,
            (BinaryDomain::ZeroOne, 1) | (BinaryDomain::PlusMinusOne, 1) => true,
            _ => {
                return Err(Error::CodeDomain {
                    what: "binary",
                    code,
                })
            }
        };
        if one {
            set_bit(&mut bits, rb, i / cols, i % cols);
        }
    }
    Ok(PackedBinaryMatrix {
        rows,
        cols,
        bits,
        domain,
        scale,
    })
}

impl PackedBinaryMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn domain(&self) -> BinaryDomain {
        self.domain
    }

    pub fn scale(&self) -> f32 {
        self.scale
    }

    pub fn row_bytes(&self) -> usize {
        self.cols.div_ceil(8)
    }

    pub fn row(&self, r: usize) -> &[u8] {
        let rb = self.row_bytes();
        &self.bits[r * rb..(r + 1) * rb]
    }

    pub fn get(&self, r: usize, c: usize) -> i32 {
        let bit = (self.row(r)[c / 8] >> (c % 8)) & 1;
        match (self.domain, bit) {
            (BinaryDomain::ZeroOne, b) => i32::from(b),
            (BinaryDomain::PlusMinusOne, 1) => 1,
            (BinaryDomain::PlusMinusOne, _) => -1,
        }
    }

    pub fn unpack(&self) -> Vec<i32> {
        (0..self.rows * self.cols)
            .map(|i| self.get(i / self.cols, i % self.cols))
            .collect()
    }

    pub fn payload_bytes(&self) -> usize {
        self.bits.len()
    }

    pub fn storage_bytes(&self) -> usize {
        self.payload_bytes() + PACKED_HEADER_BYTES
    }

    /// Whether every bit past the last column of each row is zero.
    pub fn has_clean_padding(&self) -> bool {
        !pad_bits_set(&self.bits, self.rows, self.cols)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn nibble_layout() {
        let p = pack_int4(&[1, 2, 3], 1, 3, Signedness::Unsigned).unwrap();
        assert_eq!(p.payload(), &[0x21, 0x03]);
        let s = pack_int4(&[-1, 7, -7], 1, 3, Signedness::Signed).unwrap();
        assert_eq!(s.payload(), &[0x7f, 0x09]);
        assert_eq!(s.unpack(), vec![-1, 7, -7]);
    }

    #[test]
    fn zero_matrices_pack_to_zero_payload() {
        let z = vec![0; 15];
        assert!(pack_int4(&z, 3, 5, Signedness::Signed)
            .unwrap()
            .payload()
            .iter()
            .all(|&b| b == 0));
        let t = pack_ternary(&z, 3, 5, 1.0).unwrap();
        assert!(t.nonzero.iter().chain(&t.sign).all(|&b| b == 0));
        let b = pack_binary(&z, 3, 5, BinaryDomain::ZeroOne, 1.0).unwrap();
        assert!(b.bits.iter().all(|&x| x == 0));
    }

    #[test]
    fn out_of_domain_codes_are_rejected() {
        assert!(pack_int4(&[16], 1, 1, Signedness::Unsigned).is_err());
        assert!(pack_int4(&[-1], 1, 1, Signedness::Unsigned).is_err());
        assert!(pack_int4(&[-8], 1, 1, Signedness::Signed).is_err());
        assert!(pack_ternary(&[2], 1, 1, 1.0).is_err());
        assert!(pack_binary(&[-1], 1, 1, BinaryDomain::ZeroOne, 1.0).is_err());
        assert!(pack_binary(&[0], 1, 1, BinaryDomain::PlusMinusOne, 1.0).is_err());
        assert!(pack_int4(&[1, 2], 1, 3, Signedness::Unsigned).is_err());
    }

    #[test]
    fn sign_without_nonzero_is_rejected() {
        assert!(
            PackedTernaryMatrix::from_planes(1, 8, vec![0b0000_0001], vec![0b0000_0010], 1.0)
                .is_err()
        );
        assert!(
            PackedTernaryMatrix::from_planes(1, 8, vec![0b0000_0011], vec![0b0000_0010], 1.0)
                .is_ok()
        );
        // padding bit beyond column 3
        assert!(PackedTernaryMatrix::from_planes(1, 3, vec![0b0000_1000], vec![0], 1.0).is_err());
    }

    #[test]
    fn padding_bits_stay_zero() {
        let b = pack_binary(&[1; 10], 2, 5, BinaryDomain::PlusMinusOne, 1.0).unwrap();
        assert!(b.has_clean_padding());
        assert_eq!(b.row(0), &[0b0001_1111]);
    }

    proptest! {
        #[test]
        fn int4_round_trip(rows in 1usize..6, cols in 1usize..19, seed in any::<u64>(), signed in any::<bool>()) {
            let sg = if signed { Signedness::Signed } else { Signedness::Unsigned };
            let codes: Vec<i32> = (0..rows * cols)
                .map(|i| {
                    let h = (seed ^ (i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)).rotate_left(17) % 15;
                    if signed { h as i32 - 7 } else { h as i32 }
                })
                .collect();
            let p = pack_int4(&codes, rows, cols, sg).unwrap();
            prop_assert_eq!(p.unpack(), codes);
            prop_assert_eq!(p.payload_bytes(), rows * cols.div_ceil(2));
        }

        #[test]
        fn ternary_and_binary_round_trip(rows in 1usize..5, cols in 1usize..70, seed in any::<u64>()) {
            let codes: Vec<i32> = (0..rows * cols)
                .map(|i| ((seed >> (i % 60)) % 3) as i32 - 1)
                .collect();
            prop_assert_eq!(pack_ternary(&codes, rows, cols, 0.5).unwrap().unpack(), codes.clone());
            let pm: Vec<i32> = codes.iter().map(|&c| if c < 0 { -1 } else { 1 }).collect();
            let b = pack_binary(&pm, rows, cols, BinaryDomain::PlusMinusOne, 1.0).unwrap();
            prop_assert!(b.has_clean_padding());
            prop_assert_eq!(b.unpack(), pm);
            let zo: Vec<i32> = codes.iter().map(|&c| c.abs()).collect();
            prop_assert_eq!(pack_binary(&zo, rows, cols, BinaryDomain::ZeroOne, 1.0).unwrap().unpack(), zo);
        }
    }
}
