//! CIFAR-10 binary batches: 3073-byte records of one label byte followed by
//! the red, green and blue 32×32 planes.

use std::path::Path;

use super::{read_file, RawDataset};
use crate::error::{OledError, Result};

pub const RECORD: usize = 1 + 3 * 32 * 32;

pub fn decode(bytes: &[u8]) -> Result<RawDataset> {
    if bytes.is_empty() || !bytes.len().is_multiple_of(RECORD) {
        return Err(OledError::parse(
            "cifar",
            format!("length {} is not a positive multiple of {RECORD}", bytes.len()),
        ));
    }
    let n = bytes.len() / RECORD;
    let mut images = Vec::with_capacity(n * (RECORD - 1));
    let mut labels = Vec::with_capacity(n);
    for (i, rec) in bytes.chunks_exact(RECORD).enumerate() {
        if rec[0] > 9 {
            return Err(OledError::parse("cifar", format!("record {i} has label {}", rec[0])));
        }
        labels.push(rec[0]);
        images.extend_from_slice(&rec[1..]);
    }
    Ok(RawDataset {
        channels: 3,
        height: 32,
        width: 32,
        images,
        labels,
    })
}

pub fn read(path: &Path) -> Result<RawDataset> {
    decode(&read_file(path)?).map_err(|e| e.at_path(path))
}

/// Loads `data_batch_1..5.bin` and `test_batch.bin` from a directory.
pub fn read_dir(dir: &Path) -> Result<(RawDataset, RawDataset)> {
    let train = (1..=5)
        .map(|i| read(&dir.join(format!("data_batch_{i}.bin"))))
        .collect::<Result<Vec<_>>>()?;
    Ok((RawDataset::concat(train)?, read(&dir.join("test_batch.bin"))?))
}
