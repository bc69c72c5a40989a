//! Frame matrix files.
//!
//! Two formats are accepted:
//!
//! * JSON `{"n": N, "m": M, "data": [row-major doubles]}`
//! * binary: the magic `FRMX`, `u32 n`, `u32 m`, four reserved zero bytes,
//!   then `n * m` little-endian doubles in row-major order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::FrameSystem;

pub const MAGIC: &[u8; 4] = b"FRMX";
pub const HEADER_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixFormat {
    Json,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixFile {
    pub n: usize,
    pub m: usize,
    pub data: Vec<f64>,
}

impl MatrixFile {
    pub fn from_frame(frame: &FrameSystem) -> Self {
        Self {
            n: frame.elements(),
            m: frame.dimension(),
            data: frame.to_row_major(),
        }
    }

    pub fn into_frame(self) -> Result<FrameSystem> {
        FrameSystem::from_rows(self.n, self.m, &self.data)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let n = u32::try_from(self.n).map_err(|_| Error::MatrixFormat(format!("n = {} exceeds u32", self.n)))?;
        let m = u32::try_from(self.m).map_err(|_| Error::MatrixFormat(format!("m = {} exceeds u32", self.m)))?;
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&n.to_le_bytes());
        out.extend_from_slice(&m.to_le_bytes());
        out.extend_from_slice(&[0u8; 4]);
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
            return Err(Error::MatrixFormat("missing FRMX header".into()));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes")) as usize;
        let (n, m) = (word(4), word(8));
        let body = &bytes[HEADER_LEN..];
        let expected = n
            .checked_mul(m)
            .and_then(|c| c.checked_mul(8))
            .ok_or_else(|| Error::MatrixFormat(format!("{n} x {m} overflows")))?;
        if body.len() != expected {
            return Err(Error::MatrixFormat(format!(
                "{n} x {m} matrix needs {expected} data bytes, file has {}",
                body.len()
            )));
        }
        let data = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Ok(Self { n, m, data })
    }

    pub fn parse_json(text: &str) -> Result<Self> {
        let file: MatrixFile = serde_json::from_str(text)?;
        if file.data.len() != file.n * file.m {
            return Err(Error::DimensionMismatch {
                expected: file.n * file.m,
                got: file.data.len(),
            });
        }
        Ok(file)
    }

    /// Detects the format from the leading bytes.
    pub fn read(path: &Path) -> Result<(Self, MatrixFormat)> {
        let bytes = fs::read(path)?;
        if bytes.starts_with(MAGIC) {
            Ok((Self::from_bytes(&bytes)?, MatrixFormat::Binary))
        } else {
            let text = std::str::from_utf8(&bytes).map_err(|_| Error::MatrixFormat("neither FRMX nor UTF-8 JSON".into()))?;
            Ok((Self::parse_json(text)?, MatrixFormat::Json))
        }
    }

    pub fn write(&self, path: &Path, format: MatrixFormat) -> Result<()> {
        match format {
            MatrixFormat::Json => fs::write(path, serde_json::to_string(self)?)?,
            MatrixFormat::Binary => fs::write(path, self.to_bytes()?)?,
        }
        Ok(())
    }
}

pub fn read_frame(path: &Path) -> Result<FrameSystem> {
    MatrixFile::read(path)?.0.into_frame()
}
