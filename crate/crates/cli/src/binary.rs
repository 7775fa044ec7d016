//! Little-endian encoding helpers shared by the binary file formats.

use layercl_core::{Matrix, Scalar};

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("not a {what} file (bad magic bytes)")]
    BadMagic { what: &'static str },
    #[error("unsupported {what} version {found} (expected {expected})")]
    Version { what: &'static str, found: u32, expected: u32 },
    #[error("{what} file is truncated")]
    Truncated { what: &'static str },
    #[error("{what}: {reason}")]
    Invalid { what: &'static str, reason: String },
}

#[derive(Default)]
pub struct Encoder {
    pub buf: Vec<u8>,
}

impl Encoder {
    pub fn header(magic: &[u8; 8], version: u32) -> Self {
        let mut e = Self::default();
        e.buf.extend_from_slice(magic);
        e.u32(version);
        e
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

    pub fn u128(&mut self, v: u128) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn bytes(&mut self, v: &[u8]) {
        self.buf.extend_from_slice(v);
    }

    pub fn matrix<T: Scalar>(&mut self, m: &Matrix<T>) {
        for &v in m.as_slice() {
            v.to_le_bytes_vec(&mut self.buf);
        }
    }
}

pub struct Decoder<'a> {
    data: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Decoder<'a> {
    /// Checks magic and version, leaving the cursor after the header.
    pub fn open(data: &'a [u8], what: &'static str, magic: &[u8; 8], version: u32) -> Result<Self, FormatError> {
        let mut d = Self { data, pos: 0, what };
        if d.take(8)? != magic {
            return Err(FormatError::BadMagic { what });
        }
        let found = d.u32()?;
        if found != version {
            return Err(FormatError::Version { what, found, expected: version });
        }
        Ok(d)
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.data.len()).ok_or(FormatError::Truncated { what: self.what })?;
        let s = &self.data[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8, FormatError> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub fn u64(&mut self) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub fn usize(&mut self) -> Result<usize, FormatError> {
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| self.invalid(format!("count {v} does not fit in memory")))
    }

    pub fn u128(&mut self) -> Result<u128, FormatError> {
        Ok(u128::from_le_bytes(self.take(16)?.try_into().expect("16 bytes")))
    }

    pub fn f64(&mut self) -> Result<f64, FormatError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub fn matrix<T: Scalar>(&mut self, rows: usize, cols: usize) -> Result<Matrix<T>, FormatError> {
        let width = (T::BITS / 8) as usize;
        let len = rows.checked_mul(cols).and_then(|n| n.checked_mul(width)).ok_or_else(|| self.invalid("matrix too large".into()))?;
        let bytes = self.take(len)?;
        let data = bytes.chunks_exact(width).map(T::from_le_slice).collect();
        Matrix::from_vec(rows, cols, data).map_err(|e| self.invalid(e.to_string()))
    }

    pub fn finish(&self) -> Result<(), FormatError> {
        if self.pos != self.data.len() {
            return Err(self.invalid(format!("{} trailing bytes", self.data.len() - self.pos)));
        }
        Ok(())
    }

    pub fn invalid(&self, reason: String) -> FormatError {
        FormatError::Invalid { what: self.what, reason }
    }
}
