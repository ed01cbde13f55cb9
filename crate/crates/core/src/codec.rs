//! Little-endian binary encoding shared by the feature, tree and model formats.

use crate::error::{Error, Result};
use crate::prox::DenseMatrix;

/// Sentinel for an absent `u32` reference.
pub const NONE_U32: u32 = u32::MAX;

#[derive(Debug, Default)]
pub struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn usize(&mut self, v: usize) -> Result<()> {
        let v = u32::try_from(v)
            .map_err(|_| Error::Format { what: "binary", reason: format!("{v} does not fit in u32") })?;
        self.u32(v);
        Ok(())
    }

    pub fn opt_usize(&mut self, v: Option<usize>) -> Result<()> {
        match v {
            Some(v) => self.usize(v),
            None => {
                self.u32(NONE_U32);
                Ok(())
            }
        }
    }

    pub fn usizes(&mut self, v: &[usize]) -> Result<()> {
        self.usize(v.len())?;
        v.iter().try_for_each(|&x| self.usize(x))
    }

    /// Shape followed by column-major entries.
    pub fn matrix(&mut self, m: &DenseMatrix) -> Result<()> {
        self.usize(m.nrows())?;
        self.usize(m.ncols())?;
        m.iter().for_each(|&v| self.f64(v));
        Ok(())
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

pub struct Decoder<'a> {
    buf: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Decoder<'a> {
    pub fn new(buf: &'a [u8], what: &'static str) -> Self {
        Decoder { buf, pos: 0, what }
    }

    pub fn fail<T>(&self, reason: impl Into<String>) -> Result<T> {
        Err(Error::Format { what: self.what, reason: reason.into() })
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return self.fail(format!("truncated at byte {}", self.pos));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn expect_magic(&mut self, magic: &[u8; 4]) -> Result<()> {
        let got = self.take(4)?;
        if got != magic {
            return self.fail(format!("bad magic {got:?}"));
        }
        Ok(())
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub fn usize(&mut self) -> Result<usize> {
        Ok(self.u32()? as usize)
    }

    pub fn opt_usize(&mut self) -> Result<Option<usize>> {
        let v = self.u32()?;
        Ok((v != NONE_U32).then_some(v as usize))
    }

    pub fn usizes(&mut self) -> Result<Vec<usize>> {
        let n = self.usize()?;
        if n > self.remaining() / 4 {
            return self.fail("index list longer than the buffer");
        }
        (0..n).map(|_| self.usize()).collect()
    }

    pub fn matrix(&mut self) -> Result<DenseMatrix> {
        let r = self.usize()?;
        let c = self.usize()?;
        if r.saturating_mul(c) > self.remaining() / 8 {
            return self.fail(format!("{r}x{c} matrix longer than the buffer"));
        }
        let data = (0..r * c).map(|_| self.f64()).collect::<Result<Vec<_>>>()?;
        Ok(DenseMatrix::from_vec(r, c, data))
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn finish(self) -> Result<()> {
        if self.remaining() != 0 {
            return self.fail(format!("{} trailing bytes", self.remaining()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_primitives() {
        let m = DenseMatrix::from_row_slice(2, 3, &[1.0, -0.0, f64::MIN_POSITIVE, 3.5, 1e300, -7.25]);
        let mut enc = Encoder::new();
        enc.bytes(b"TEST");
        enc.u8(7);
        enc.opt_usize(None).unwrap();
        enc.usizes(&[4, 5, 6]).unwrap();
        enc.matrix(&m).unwrap();
        let buf = enc.finish();
        let mut dec = Decoder::new(&buf, "test");
        dec.expect_magic(b"TEST").unwrap();
        assert_eq!(dec.u8().unwrap(), 7);
        assert_eq!(dec.opt_usize().unwrap(), None);
        assert_eq!(dec.usizes().unwrap(), vec![4, 5, 6]);
        let back = dec.matrix().unwrap();
        assert!(back.iter().zip(m.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
        dec.finish().unwrap();
    }

    #[test]
    fn truncation_detected() {
        let mut enc = Encoder::new();
        enc.matrix(&DenseMatrix::zeros(3, 3)).unwrap();
        let buf = enc.finish();
        assert!(Decoder::new(&buf[..20], "test").matrix().is_err());
        assert!(Decoder::new(b"NOPE", "test").expect_magic(b"UOST").is_err());
    }
}
