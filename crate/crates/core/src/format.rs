//! Little-endian binary envelope shared by the model, classifier, prepared
//! dataset and feature files.
//!
//! Every file is `magic (4 bytes) | version u32 | payload | crc32`, where the
//! checksum covers all preceding bytes (IEEE polynomial, as produced by
//! zlib's `crc32`).

use crate::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

/// Appends payload fields to an envelope buffer.
pub struct EnvelopeWriter {
    buf: Vec<u8>,
}

impl EnvelopeWriter {
    pub fn new(magic: &[u8; 4]) -> Self {
        let mut buf = Vec::new();
        buf.extend_from_slice(magic);
        buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        Self { buf }
    }

    pub fn put_u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn put_f64_slice(&mut self, values: &[f64]) {
        for v in values {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
    }

    /// Appends the trailing checksum and returns the finished file image.
    pub fn finish(mut self) -> Vec<u8> {
        let crc = crc32fast::hash(&self.buf);
        self.buf.extend_from_slice(&crc.to_le_bytes());
        self.buf
    }
}

/// Sequential reader over an envelope, verifying magic, version and checksum
/// up front.
pub struct EnvelopeReader<'a> {
    payload: &'a [u8],
    pos: usize,
}

impl<'a> EnvelopeReader<'a> {
    pub fn new(bytes: &'a [u8], magic: &[u8; 4]) -> Result<Self> {
        if bytes.len() < 12 {
            return Err(Error::Format("file truncated: missing header".to_string()));
        }
        if &bytes[..4] != magic {
            return Err(Error::Format(format!(
                "bad magic: expected {:?}",
                std::str::from_utf8(magic).unwrap_or("?")
            )));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported format version {version}, expected {FORMAT_VERSION}"
            )));
        }
        let body = &bytes[..bytes.len() - 4];
        let stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
        let computed = crc32fast::hash(body);
        if stored != computed {
            return Err(Error::Format(format!(
                "checksum mismatch: stored {stored:#010x}, computed {computed:#010x}"
            )));
        }
        Ok(Self {
            payload: &body[8..],
            pos: 0,
        })
    }

    pub fn get_u32(&mut self) -> Result<u32> {
        let bytes = self.take(4)?;
        Ok(u32::from_le_bytes(bytes.try_into().unwrap()))
    }

    pub fn get_usize(&mut self) -> Result<usize> {
        Ok(self.get_u32()? as usize)
    }

    pub fn get_f64_vec(&mut self, count: usize) -> Result<Vec<f64>> {
        let bytes = self.take(count * 8)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    /// Fails unless every payload byte has been consumed.
    pub fn expect_end(&self) -> Result<()> {
        if self.pos != self.payload.len() {
            return Err(Error::Format(format!(
                "trailing bytes: {} unread",
                self.payload.len() - self.pos
            )));
        }
        Ok(())
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.payload.len() {
            return Err(Error::Format(
                "file truncated: payload too short".to_string(),
            ));
        }
        let slice = &self.payload[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }
}

/// Converts a dimension to the u32 stored on disk.
pub fn dim_to_u32(value: usize, what: &str) -> Result<u32> {
    u32::try_from(value)
        .map_err(|_| Error::InvalidInput(format!("{what} {value} too large for file format")))
}
