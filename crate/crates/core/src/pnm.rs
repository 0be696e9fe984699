//! Binary netpbm codecs: PPM (P6) for RGB images, PGM (P5) for masks.
//!
//! Only 8-bit samples are supported. Float components are quantized with
//! round-to-nearest on write, so a write/read round trip moves each
//! component by at most 1/510.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::{Image, SegmentationMask};

struct HeaderReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> HeaderReader<'a> {
    fn new(bytes: &'a [u8], path: &'a Path) -> Self {
        HeaderReader { bytes, pos: 0, path }
    }

    /// Advances over whitespace and `#` comments (which run to end of line).
    fn skip_separators(&mut self) {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else {
                break;
            }
        }
    }

    fn read_number(&mut self, what: &str) -> Result<u32> {
        self.skip_separators();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::PnmMalformed {
                path: self.path.to_path_buf(),
                message: format!("expected {what}"),
            });
        }
        let text = std::str::from_utf8(&self.bytes[start..self.pos]).expect("digits are ascii");
        text.parse().map_err(|_| Error::PnmMalformed {
            path: self.path.to_path_buf(),
            message: format!("{what} `{text}` out of range"),
        })
    }

    /// Reads `width height maxval` plus the single separator byte before the
    /// binary payload, returning the payload offset.
    fn read_dims_and_maxval(&mut self) -> Result<(usize, usize, u32, usize)> {
        let width = self.read_number("width")? as usize;
        let height = self.read_number("height")? as usize;
        let maxval = self.read_number("maxval")?;
        if self.pos >= self.bytes.len() || !self.bytes[self.pos].is_ascii_whitespace() {
            return Err(Error::PnmMalformed {
                path: self.path.to_path_buf(),
                message: "missing separator before payload".into(),
            });
        }
        self.pos += 1;
        if width == 0 || height == 0 {
            return Err(Error::PnmMalformed {
                path: self.path.to_path_buf(),
                message: format!("degenerate dimensions {width}x{height}"),
            });
        }
        if maxval == 0 {
            return Err(Error::PnmMalformed {
                path: self.path.to_path_buf(),
                message: "maxval 0".into(),
            });
        }
        if maxval > 255 {
            return Err(Error::PnmSixteenBit {
                path: self.path.to_path_buf(),
                maxval,
            });
        }
        Ok((width, height, maxval, self.pos))
    }
}

fn check_magic(bytes: &[u8], expected: &'static str, path: &Path) -> Result<()> {
    if bytes.len() < 2 || &bytes[..2] != expected.as_bytes() {
        let found = bytes
            .iter()
            .take(2)
            .map(|&b| if b.is_ascii_graphic() { b as char } else { '?' })
            .collect();
        return Err(Error::PnmBadMagic {
            path: path.to_path_buf(),
            expected,
            found,
        });
    }
    Ok(())
}

/// Reads a binary P6 PPM into a float image (components divided by maxval).
pub fn read_ppm(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    check_magic(&bytes, "P6", path)?;
    let mut header = HeaderReader::new(&bytes[2..], path);
    let (width, height, maxval, offset) = header.read_dims_and_maxval()?;
    let offset = offset + 2;
    let expected = width * height * 3;
    let payload = &bytes[offset.min(bytes.len())..];
    if payload.len() < expected {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            message: format!("payload {} of {expected} bytes", payload.len()),
        });
    }
    let scale = 1.0 / maxval as f32;
    let pixels = payload[..expected].iter().map(|&b| b as f32 * scale).collect();
    Image::new(width, height, pixels)
}

/// Encodes a binary P6 PPM with maxval 255, quantizing round-to-nearest.
pub fn encode_ppm(image: &Image) -> Vec<u8> {
    let mut bytes = format!("P6\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    bytes.extend(image.pixels().iter().map(|&v| quantize(v)));
    bytes
}

/// Writes a binary P6 PPM with maxval 255, quantizing round-to-nearest.
pub fn write_ppm(image: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_ppm(image)).map_err(|e| Error::io(path, e))
}

fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Reads a binary P5 PGM as a segmentation mask: sample >= 128 is mutable.
pub fn read_pgm_mask(path: impl AsRef<Path>) -> Result<SegmentationMask> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    check_magic(&bytes, "P5", path)?;
    let mut header = HeaderReader::new(&bytes[2..], path);
    let (width, height, _maxval, offset) = header.read_dims_and_maxval()?;
    let offset = offset + 2;
    let expected = width * height;
    let payload = &bytes[offset.min(bytes.len())..];
    if payload.len() < expected {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            message: format!("payload {} of {expected} bytes", payload.len()),
        });
    }
    let mutable = payload[..expected].iter().map(|&b| b >= 128).collect();
    SegmentationMask::new(width, height, mutable)
}

/// Writes a mask as a binary P5 PGM (255 mutable, 0 frozen).
pub fn write_pgm_mask(mask: &SegmentationMask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = format!("P5\n{} {}\n255\n", mask.width(), mask.height()).into_bytes();
    bytes.extend(mask.entries().iter().map(|&m| if m { 255u8 } else { 0u8 }));
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
