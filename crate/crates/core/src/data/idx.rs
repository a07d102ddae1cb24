//! IDX container (the MNIST distribution format): big-endian magic
//! `00 00 08 <ndim>`, then `ndim` u32 extents, then unsigned bytes.

use std::path::Path;

use super::{read_file, RawDataset};
use crate::error::{OledError, Result};

pub const IMAGES_MAGIC: u32 = 2051;
pub const LABELS_MAGIC: u32 = 2049;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

pub fn decode(bytes: &[u8]) -> Result<IdxArray> {
    if bytes.len() < 4 {
        return Err(OledError::parse("idx", "file shorter than magic number"));
    }
    if bytes[0] != 0 || bytes[1] != 0 || bytes[2] != 0x08 {
        return Err(OledError::parse(
            "idx",
            format!("bad magic {:02x} {:02x} {:02x} {:02x}", bytes[0], bytes[1], bytes[2], bytes[3]),
        ));
    }
    let ndim = bytes[3] as usize;
    if ndim == 0 || bytes.len() < 4 + 4 * ndim {
        return Err(OledError::parse("idx", "truncated header"));
    }
    let dims: Vec<usize> = bytes[4..4 + 4 * ndim]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    let expected: usize = dims.iter().product();
    let payload = &bytes[4 + 4 * ndim..];
    if payload.len() < expected {
        return Err(OledError::parse(
            "idx",
            format!("payload truncated: header promises {expected} bytes, found {}", payload.len()),
        ));
    }
    if payload.len() > expected {
        return Err(OledError::parse("idx", format!("{} trailing bytes", payload.len() - expected)));
    }
    Ok(IdxArray {
        dims,
        data: payload.to_vec(),
    })
}

pub fn encode(arr: &IdxArray) -> Vec<u8> {
    let mut out = vec![0, 0, 0x08, arr.dims.len() as u8];
    for &d in &arr.dims {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(&arr.data);
    out
}

fn magic(arr: &IdxArray) -> u32 {
    0x0800 + arr.dims.len() as u32
}

pub fn decode_images(bytes: &[u8]) -> Result<(usize, usize, usize, Vec<u8>)> {
    let arr = decode(bytes)?;
    if magic(&arr) != IMAGES_MAGIC {
        return Err(OledError::parse("idx", format!("expected image magic {IMAGES_MAGIC}, got {}", magic(&arr))));
    }
    Ok((arr.dims[0], arr.dims[1], arr.dims[2], arr.data))
}

pub fn decode_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let arr = decode(bytes)?;
    if magic(&arr) != LABELS_MAGIC {
        return Err(OledError::parse("idx", format!("expected label magic {LABELS_MAGIC}, got {}", magic(&arr))));
    }
    Ok(arr.data)
}

/// Reads a matching pair of image and label files.
pub fn read_mnist(images: &Path, labels: &Path) -> Result<RawDataset> {
    let (n, h, w, pixels) = decode_images(&read_file(images)?).map_err(|e| e.at_path(images))?;
    let labels_v = decode_labels(&read_file(labels)?).map_err(|e| e.at_path(labels))?;
    if labels_v.len() != n {
        return Err(OledError::Dataset(format!(
            "{} has {n} images but {} has {} labels",
            images.display(),
            labels.display(),
            labels_v.len()
        )));
    }
    Ok(RawDataset {
        channels: 1,
        height: h,
        width: w,
        images: pixels,
        labels: labels_v,
    })
}
