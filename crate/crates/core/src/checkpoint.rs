//! Binary weight files: magic, format version, a JSON header, then named
//! tensors as little-endian `f64`.
//!
//! ```text
//! "SRPCKPT\0"  u32 version  u32 header_len  header (JSON)
//! per tensor:  u32 name_len  name  u64 rows  u64 cols  rows*cols f64
//! ```

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Linear, Tensor};

pub const MAGIC: &[u8; 8] = b"SRPCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    /// What the tensors describe, e.g. `srp` or `intent`.
    pub kind: String,
    pub config_hash: String,
    /// Model-specific settings needed to rebuild the model.
    pub meta: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub tensors: Vec<(String, Tensor)>,
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn truncated(e: Error) -> Error {
    match e {
        Error::Io(io) if io.kind() == std::io::ErrorKind::UnexpectedEof => Error::Format("truncated checkpoint".into()),
        e => e,
    }
}

impl Checkpoint {
    pub fn new(kind: &str, config_hash: &str, meta: serde_json::Value) -> Self {
        Self {
            header: CheckpointHeader {
                kind: kind.into(),
                config_hash: config_hash.into(),
                meta,
            },
            tensors: Vec::new(),
        }
    }

    pub fn push(&mut self, name: &str, t: &Tensor) {
        self.tensors.push((name.to_string(), t.clone()));
    }

    pub fn push_linear(&mut self, prefix: &str, l: &Linear) {
        self.push(&format!("{prefix}.w"), &l.w);
        self.push(&format!("{prefix}.b"), &l.b);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| Error::Format(format!("checkpoint has no tensor {name:?}")))
    }

    pub fn linear(&self, prefix: &str) -> Result<Linear> {
        Ok(Linear {
            w: self.get(&format!("{prefix}.w"))?.clone(),
            b: self.get(&format!("{prefix}.b"))?.clone(),
        })
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.header.kind != kind {
            return Err(Error::Format(format!(
                "expected a {kind} checkpoint, got {}",
                self.header.kind
            )));
        }
        Ok(())
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        let header = serde_json::to_vec(&self.header)?;
        w.write_all(MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&(header.len() as u32).to_le_bytes())?;
        w.write_all(&header)?;
        w.write_all(&(self.tensors.len() as u32).to_le_bytes())?;
        for (name, t) in &self.tensors {
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&(t.rows as u64).to_le_bytes())?;
            w.write_all(&(t.cols as u64).to_le_bytes())?;
            for v in &t.data {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self> {
        Self::read_inner(&mut r).map_err(truncated)
    }

    fn read_inner<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a checkpoint file".into()));
        }
        let version = read_u32(r)?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let mut header = vec![0u8; read_u32(r)? as usize];
        r.read_exact(&mut header)?;
        let header: CheckpointHeader =
            serde_json::from_slice(&header).map_err(|e| Error::Format(format!("checkpoint header: {e}")))?;
        let n = read_u32(r)?;
        let mut tensors = Vec::with_capacity(n as usize);
        for _ in 0..n {
            let mut name = vec![0u8; read_u32(r)? as usize];
            r.read_exact(&mut name)?;
            let name = String::from_utf8(name).map_err(|_| Error::Format("tensor name is not UTF-8".into()))?;
            let rows = read_u64(r)? as usize;
            let cols = read_u64(r)? as usize;
            let len = rows
                .checked_mul(cols)
                .filter(|&l| l <= 1 << 32)
                .ok_or_else(|| Error::Format(format!("tensor {name} is too large")))?;
            let mut bytes = vec![0u8; len * 8];
            r.read_exact(&mut bytes)?;
            let data = bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
                .collect();
            tensors.push((name, Tensor::from_vec(rows, cols, data)?));
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(Error::Format("trailing bytes after checkpoint".into()));
        }
        Ok(Self { header, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write(std::io::BufWriter::new(f))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read(std::io::BufReader::new(f))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let mut c = Checkpoint::new("srp", "abc", serde_json::json!({}));
        c.push("x", &Tensor::from_vec(1, 2, vec![1.5, -0.0]).unwrap());
        let mut bytes = Vec::new();
        c.write(&mut bytes).unwrap();
        assert_eq!(Checkpoint::read(&bytes[..]).unwrap(), c);
        assert!(matches!(
            Checkpoint::read(&bytes[..bytes.len() - 3]),
            Err(Error::Format(_))
        ));
        bytes[0] = b'X';
        assert!(matches!(Checkpoint::read(&bytes[..]), Err(Error::Format(_))));
    }
}
