//! Checkpoint container.
//!
//! Layout (little-endian): magic `OLEDCKPT`, `u32` version, `u32`-prefixed
//! config text, `u32` entry count, then per entry a `u32`-prefixed name,
//! `u32` rank, `u32` extents and the `f32` payload. A SHA-256 digest of all
//! preceding bytes closes the file.

use std::path::Path;

use sha2::{Digest, Sha256};

use super::read_file;
use crate::error::{OledError, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"OLEDCKPT";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: String,
    pub tensors: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn new(config: impl Into<String>) -> Self {
        Checkpoint {
            config: config.into(),
            tensors: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, t: Tensor) {
        self.tensors.push((name.into(), t));
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Entries whose name starts with `prefix`, with the prefix removed.
    pub fn with_prefix<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = (&'a str, &'a Tensor)> + 'a {
        self.tensors
            .iter()
            .filter_map(move |(n, t)| n.strip_prefix(prefix).map(|rest| (rest, t)))
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend(VERSION.to_le_bytes());
        put_str(&mut out, &self.config);
        out.extend((self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            put_str(&mut out, name);
            out.extend((t.shape().len() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend((d as u32).to_le_bytes());
            }
            for &v in t.data() {
                out.extend(v.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 4 + 32 {
            return Err(OledError::parse("checkpoint", "file too short"));
        }
        if &bytes[..8] != MAGIC {
            return Err(OledError::parse("checkpoint", "bad magic"));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(OledError::Checksum);
        }
        let mut r = Reader { bytes: body, pos: 8 };
        let version = r.u32()?;
        if version != VERSION {
            return Err(OledError::parse("checkpoint", format!("unsupported version {version}")));
        }
        let config = r.string()?;
        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let name = r.string()?;
            let rank = r.u32()? as usize;
            let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let raw = r.take(n * 4)?;
            let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
            tensors.push((name, Tensor::new(shape, data)?));
        }
        if r.pos != body.len() {
            return Err(OledError::parse("checkpoint", "trailing bytes after last entry"));
        }
        Ok(Checkpoint { config, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode()).map_err(|e| OledError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&read_file(path)?).map_err(|e| e.at_path(path))
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend((s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| OledError::parse("checkpoint", "truncated entry"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| OledError::parse("checkpoint", "non-utf8 string"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let mut c = Checkpoint::new("seed = 3\n");
        c.push("r/enc0/weight", Tensor::from_fn(&[2, 1, 3, 3], |i| i as f32 * 0.1 - 0.7));
        c.push("m/out/bias", Tensor::new(vec![1], vec![f32::MIN_POSITIVE]).unwrap());
        c
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let c = sample();
        let d = Checkpoint::decode(&c.encode()).unwrap();
        assert_eq!(c, d);
        assert_eq!(d.with_prefix("r/").count(), 1);
    }

    #[test]
    fn corruption_is_detected() {
        let mut bytes = sample().encode();
        bytes[20] ^= 1;
        assert!(matches!(Checkpoint::decode(&bytes), Err(OledError::Checksum)));
    }

    #[test]
    fn wrong_magic() {
        let mut bytes = sample().encode();
        bytes[0] = b'X';
        assert!(Checkpoint::decode(&bytes).is_err());
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.ckpt");
        sample().save(&p).unwrap();
        assert_eq!(Checkpoint::load(&p).unwrap(), sample());
    }
}
