//! Flat binary tensor container.
//!
//! ```text
//! magic  8 bytes  "WRPNTEN1"
//! rank   u64 LE
//! dims   rank × u64 LE
//! data   prod(dims) × f32 LE
//! ```

use std::io::{Read, Write};
use std::path::Path;

use super::Tensor;
use crate::error::{Error, Result};

pub const TENSOR_MAGIC: &[u8; 8] = b"WRPNTEN1";

pub(crate) fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

/// Reads `rank` + `dims`, refusing absurd ranks or element counts before
/// allocating.
pub(crate) fn read_shape(r: &mut impl Read, what: &'static str) -> Result<Vec<usize>> {
    let rank = read_u64(r)?;
    if rank == 0 || rank > 8 {
        return Err(Error::Format {
            what,
            detail: format!("unsupported rank {rank}"),
        });
    }
    let mut shape = Vec::with_capacity(rank as usize);
    let mut total: u64 = 1;
    for _ in 0..rank {
        let d = read_u64(r)?;
        total = total
            .checked_mul(d)
            .filter(|&t| t <= 1 << 32)
            .ok_or_else(|| Error::Format {
                what,
                detail: "element count overflows".into(),
            })?;
        shape.push(d as usize);
    }
    Ok(shape)
}

pub(crate) fn write_shape(w: &mut impl Write, shape: &[usize]) -> Result<()> {
    w.write_all(&(shape.len() as u64).to_le_bytes())?;
    for &d in shape {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    Ok(())
}

impl Tensor {
    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(TENSOR_MAGIC)?;
        write_shape(w, &self.shape)?;
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != TENSOR_MAGIC {
            return Err(Error::Format {
                what: "tensor file",
                detail: "bad magic".into(),
            });
        }
        let shape = read_shape(r, "tensor file")?;
        let n: usize = shape.iter().product();
        let mut bytes = vec![0u8; n * 4];
        r.read_exact(&mut bytes)?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Tensor::new(shape, data)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 8 * self.rank() + 4 * self.len());
        self.write_to(&mut out)
            .expect("writing to a Vec cannot fail");
        out
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<Self> {
        Self::read_from(&mut bytes)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn layout_is_little_endian() {
        let t = Tensor::new(vec![2], vec![1.0, -2.0]).unwrap();
        let b = t.to_bytes();
        assert_eq!(&b[..8], TENSOR_MAGIC);
        assert_eq!(&b[8..16], &1u64.to_le_bytes());
        assert_eq!(&b[16..24], &2u64.to_le_bytes());
        assert_eq!(&b[24..28], &1.0f32.to_le_bytes());
        assert_eq!(b.len(), 32);
    }

    #[test]
    fn rejects_truncation_and_bad_magic() {
        let b = Tensor::zeros(&[3, 3]).unwrap().to_bytes();
        assert!(Tensor::from_bytes(&b[..b.len() - 1]).is_err());
        let mut bad = b.clone();
        bad[0] = b'X';
        assert!(Tensor::from_bytes(&bad).is_err());
    }

    proptest! {
        #[test]
        fn round_trip(shape in prop::collection::vec(1usize..5, 1..4), seed in any::<u32>()) {
            let t = Tensor::from_fn(&shape, |i| ((i as u32).wrapping_mul(seed) % 1000) as f32 / 7.0 - 50.0).unwrap();
            prop_assert_eq!(Tensor::from_bytes(&t.to_bytes()).unwrap(), t);
        }
    }
}
