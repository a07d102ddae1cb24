//! Binary (P5) greyscale PGM frames with maxval ≤ 255.

use std::path::Path;

use super::read_file;
use crate::error::{OledError, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<u8>,
}

impl Frame {
    pub fn new(height: usize, width: usize, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != height * width {
            return Err(OledError::shape("frame", &[height * width], &[pixels.len()]));
        }
        Ok(Frame { height, width, pixels })
    }
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn token(&mut self) -> Result<&str> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() && self.bytes[self.pos] != b'#' {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(OledError::parse("pgm", "truncated header"));
        }
        std::str::from_utf8(&self.bytes[start..self.pos]).map_err(|_| OledError::parse("pgm", "non-ascii header"))
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        let t = self.token()?;
        t.parse().map_err(|_| OledError::parse("pgm", format!("bad {what} '{t}'")))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Frame> {
    let mut h = Header { bytes, pos: 0 };
    match h.token()? {
        "P5" => {}
        "P2" => return Err(OledError::parse("pgm", "ASCII (P2) PGM is not supported")),
        other => return Err(OledError::parse("pgm", format!("unsupported magic '{other}'"))),
    }
    let width = h.number("width")?;
    let height = h.number("height")?;
    let maxval = h.number("maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(OledError::parse("pgm", format!("maxval {maxval} outside 1..=255")));
    }
    if width == 0 || height == 0 {
        return Err(OledError::parse("pgm", "zero-sized frame"));
    }
    // exactly one whitespace byte separates the header from the raster
    let start = h.pos + 1;
    let need = width * height;
    if bytes.len() < start + need {
        return Err(OledError::parse("pgm", format!("raster truncated: need {need} bytes")));
    }
    Frame::new(height, width, bytes[start..start + need].to_vec())
}

pub fn encode(frame: &Frame) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", frame.width, frame.height).into_bytes();
    out.extend_from_slice(&frame.pixels);
    out
}

pub fn read(path: &Path) -> Result<Frame> {
    decode(&read_file(path)?).map_err(|e| e.at_path(path))
}

pub fn write(path: &Path, frame: &Frame) -> Result<()> {
    std::fs::write(path, encode(frame)).map_err(|e| OledError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_frame() {
        let mut bytes = b"P5 2 2 255\n".to_vec();
        bytes.extend([1, 2, 3, 4]);
        let f = decode(&bytes).unwrap();
        assert_eq!((f.height, f.width), (2, 2));
        assert_eq!(f.pixels, vec![1, 2, 3, 4]);
    }

    #[test]
    fn ascii_variant_rejected() {
        let err = decode(b"P2 2 2 255\n1 2 3 4\n").unwrap_err();
        assert!(err.to_string().contains("P2"), "{err}");
    }

    #[test]
    fn comments_are_skipped() {
        let mut bytes = b"P5\n# made by hand\n3 1\n# another\n255\n".to_vec();
        bytes.extend([9, 8, 7]);
        assert_eq!(decode(&bytes).unwrap().pixels, vec![9, 8, 7]);
    }

    #[test]
    fn wide_maxval_rejected() {
        assert!(decode(b"P5 1 1 65535\n\0\0").is_err());
    }

    #[test]
    fn roundtrip() {
        let f = Frame::new(2, 3, vec![0, 10, 20, 30, 40, 255]).unwrap();
        assert_eq!(decode(&encode(&f)).unwrap(), f);
    }
}
