//! 16-bit binary PGM (`P5`, maxval 65535, big-endian samples).

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{BandImage, DatasetError, Wavelength};

const MAXVAL: u32 = 65535;

pub fn read_pgm16(path: &Path, wavelength: Wavelength) -> Result<BandImage, DatasetError> {
    let file = File::open(path).map_err(|e| DatasetError::io(path, e))?;
    let mut bytes = Vec::new();
    BufReader::new(file)
        .read_to_end(&mut bytes)
        .map_err(|e| DatasetError::io(path, e))?;
    decode_pgm16(&bytes, wavelength).map_err(|e| e.at(path))
}

pub fn write_pgm16(image: &BandImage, path: &Path) -> Result<(), DatasetError> {
    let bytes = encode_pgm16(image)?;
    let file = File::create(path).map_err(|e| DatasetError::io(path, e))?;
    let mut out = BufWriter::new(file);
    out.write_all(&bytes)
        .and_then(|_| out.flush())
        .map_err(|e| DatasetError::io(path, e))
}

/// Quantizes a value in `[0, 1]` to a 16-bit sample, rounding half away from zero.
pub fn quantize(v: f32) -> u16 {
    (f64::from(v) * f64::from(MAXVAL)).round() as u16
}

pub fn encode_pgm16(image: &BandImage) -> Result<Vec<u8>, DatasetError> {
    let header = format!("P5\n{} {}\n{}\n", image.width(), image.height(), MAXVAL);
    let mut bytes = Vec::with_capacity(header.len() + 2 * image.values().len());
    bytes.extend_from_slice(header.as_bytes());
    for &v in image.values() {
        if !(0.0..=1.0).contains(&v) {
            return Err(DatasetError::Domain(format!(
                "cannot encode value {v} outside [0, 1]"
            )));
        }
        bytes.extend_from_slice(&quantize(v).to_be_bytes());
    }
    Ok(bytes)
}

/// Error produced while decoding an in-memory buffer; the path is attached by the caller.
#[derive(Debug)]
pub enum DecodeError {
    Format(String),
    Unsupported(String),
    Truncated { expected: usize, got: usize },
}

impl DecodeError {
    fn at(self, path: &Path) -> DatasetError {
        match self {
            DecodeError::Format(msg) => DatasetError::Format {
                path: path.to_path_buf(),
                msg,
            },
            DecodeError::Unsupported(msg) => DatasetError::Unsupported {
                path: path.to_path_buf(),
                msg,
            },
            DecodeError::Truncated { expected, got } => DatasetError::io(
                path,
                io::Error::new(
                    io::ErrorKind::UnexpectedEof,
                    format!("payload truncated: expected {expected} bytes, got {got}"),
                ),
            ),
        }
    }
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderCursor<'_> {
    fn skip_whitespace_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u32, DecodeError> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(DecodeError::Format(format!("missing {what} in header")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| DecodeError::Format(format!("invalid {what} in header")))
    }
}

pub fn decode_pgm16(bytes: &[u8], wavelength: Wavelength) -> Result<BandImage, DecodeError> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        let magic = String::from_utf8_lossy(&bytes[..bytes.len().min(2)]).into_owned();
        return Err(DecodeError::Format(format!(
            "expected magic \"P5\", found {magic:?}"
        )));
    }
    let mut cur = HeaderCursor { bytes, pos: 2 };
    let width = cur.number("width")? as usize;
    let height = cur.number("height")? as usize;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(DecodeError::Format(format!(
            "invalid dimensions {width}x{height}"
        )));
    }
    if maxval != MAXVAL {
        return Err(DecodeError::Unsupported(format!(
            "maxval {maxval} (only 65535 is supported)"
        )));
    }
    // exactly one whitespace byte separates the header from the raster
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => return Err(DecodeError::Format("missing whitespace after maxval".into())),
    }
    let payload = &bytes[cur.pos..];
    let expected = width * height * 2;
    if payload.len() < expected {
        return Err(DecodeError::Truncated {
            expected,
            got: payload.len(),
        });
    }
    let values = payload[..expected]
        .chunks_exact(2)
        .map(|c| (f64::from(u16::from_be_bytes([c[0], c[1]])) / f64::from(MAXVAL)) as f32)
        .collect();
    BandImage::new(width, height, wavelength, values)
        .map_err(|e| DecodeError::Format(e.to_string()))
}
