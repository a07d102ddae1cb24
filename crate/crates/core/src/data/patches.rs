use super::pgm::Frame;
use crate::error::{OledError, Result};

/// Non-overlapping `size`×`size` tiles in row-major order.
pub fn extract_patches(frame: &Frame, size: usize) -> Result<Vec<Vec<u8>>> {
    if size == 0 || !frame.height.is_multiple_of(size) || !frame.width.is_multiple_of(size) {
        return Err(OledError::Dataset(format!(
            "{}×{} frame is not divisible into {size}×{size} patches",
            frame.height, frame.width
        )));
    }
    let (rows, cols) = (frame.height / size, frame.width / size);
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let mut p = Vec::with_capacity(size * size);
            for y in 0..size {
                let start = (r * size + y) * frame.width + c * size;
                p.extend_from_slice(&frame.pixels[start..start + size]);
            }
            out.push(p);
        }
    }
    Ok(out)
}

/// Inverse of [`extract_patches`].
pub fn assemble_patches(patches: &[Vec<u8>], size: usize, height: usize, width: usize) -> Result<Frame> {
    if size == 0 || !height.is_multiple_of(size) || !width.is_multiple_of(size) || patches.len() != (height / size) * (width / size) {
        return Err(OledError::Dataset("patch count does not tile the frame".into()));
    }
    let cols = width / size;
    let mut pixels = vec![0u8; height * width];
    for (i, p) in patches.iter().enumerate() {
        if p.len() != size * size {
            return Err(OledError::Dataset(format!("patch {i} has {} pixels", p.len())));
        }
        let (r, c) = (i / cols, i % cols);
        for y in 0..size {
            let start = (r * size + y) * width + c * size;
            pixels[start..start + size].copy_from_slice(&p[y * size..(y + 1) * size]);
        }
    }
    Frame::new(height, width, pixels)
}
