//! Dataset ingestion, evaluation protocols and checkpoint files.

pub mod checkpoint;
pub mod cifar;
pub mod idx;
pub mod patches;
pub mod pgm;
pub mod protocol;

use std::path::Path;

use crate::error::{OledError, Result};

pub use protocol::{DatasetSplit, Geometry, SplitMeta};

/// 8-bit images with integer class labels, N×C×H×W row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawDataset {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub images: Vec<u8>,
    pub labels: Vec<u8>,
}

impl RawDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image_len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn image(&self, i: usize) -> &[u8] {
        let n = self.image_len();
        &self.images[i * n..(i + 1) * n]
    }

    /// Concatenates datasets of identical geometry.
    pub fn concat(parts: Vec<RawDataset>) -> Result<RawDataset> {
        let mut iter = parts.into_iter();
        let mut out = iter.next().ok_or_else(|| OledError::Dataset("no dataset parts".into()))?;
        for p in iter {
            if (p.channels, p.height, p.width) != (out.channels, out.height, out.width) {
                return Err(OledError::Dataset("cannot concatenate datasets of different geometry".into()));
            }
            out.images.extend_from_slice(&p.images);
            out.labels.extend_from_slice(&p.labels);
        }
        Ok(out)
    }
}

/// Maps 0..=255 onto [−1, 1]; 127.5 (the colour midpoint) lands on 0.
pub fn normalize(v: u8) -> f32 {
    v as f32 / 127.5 - 1.0
}

/// Normalizes a C×H×W image and centres it on a C×canvas_h×canvas_w
/// canvas filled with −1 (intensity 0).
pub fn to_canvas(image: &[u8], channels: usize, h: usize, w: usize, canvas_h: usize, canvas_w: usize) -> Vec<f32> {
    let (oy, ox) = ((canvas_h - h) / 2, (canvas_w - w) / 2);
    let mut out = vec![-1.0f32; channels * canvas_h * canvas_w];
    for c in 0..channels {
        for y in 0..h {
            for x in 0..w {
                out[(c * canvas_h + y + oy) * canvas_w + x + ox] = normalize(image[(c * h + y) * w + x]);
            }
        }
    }
    out
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| OledError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization_endpoints() {
        assert_eq!(normalize(0), -1.0);
        assert_eq!(normalize(255), 1.0);
        assert_eq!(127.5f32 / 127.5 - 1.0, 0.0);
    }

    #[test]
    fn canvas_padding_is_background() {
        let img = [255u8; 4];
        let c = to_canvas(&img, 1, 2, 2, 4, 4);
        assert_eq!(c[0], -1.0);
        assert_eq!(c[5], 1.0);
        assert_eq!(c.iter().filter(|&&v| v == 1.0).count(), 4);
    }
}
