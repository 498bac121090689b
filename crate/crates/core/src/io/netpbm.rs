//! Binary NetPBM: P4 (bitmap), P5 (graymap) and P6 (pixmap). 16-bit
//! samples are big-endian, as the format requires.

use crate::error::{NciError, Result};
use crate::frames::Image;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

impl BitDepth {
    pub fn maxval(self) -> u32 {
        match self {
            BitDepth::Eight => 255,
            BitDepth::Sixteen => 65535,
        }
    }
}

/// Encode a 1- or 3-channel image with samples in `[0, 1]` (values outside
/// are clamped) as P5 or P6.
pub fn write_netpbm(image: &Image, depth: BitDepth) -> Result<Vec<u8>> {
    let magic = match image.channels {
        1 => "P5",
        3 => "P6",
        c => return Err(NciError::invalid(format!("NetPBM needs 1 or 3 channels, got {c}"))),
    };
    let maxval = depth.maxval();
    let mut out = format!("{magic}\n{} {}\n{maxval}\n", image.width, image.height).into_bytes();
    let scale = maxval as f64;
    for &v in &image.data {
        let q = (v.clamp(0.0, 1.0) * scale).round() as u32;
        match depth {
            BitDepth::Eight => out.push(q as u8),
            BitDepth::Sixteen => out.extend_from_slice(&(q as u16).to_be_bytes()),
        }
    }
    Ok(out)
}

/// P4 bitmap; a set bit (black) marks a `true` entry.
pub fn write_pbm(mask: &[bool], width: usize, height: usize) -> Result<Vec<u8>> {
    if mask.len() != width * height {
        return Err(NciError::invalid("mask length does not match dimensions"));
    }
    let mut out = format!("P4\n{width} {height}\n").into_bytes();
    for row in mask.chunks(width.max(1)).take(height) {
        for byte in row.chunks(8) {
            let mut b = 0u8;
            for (i, &on) in byte.iter().enumerate() {
                if on {
                    b |= 0x80 >> i;
                }
            }
            out.push(b);
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self) -> Result<u32> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(NciError::at_byte(start as u64, "expected a decimal number"));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .unwrap()
            .parse()
            .map_err(|_| NciError::at_byte(start as u64, "number out of range"))
    }
}

/// Decode P4, P5 or P6. Samples are scaled to `[0, 1]`; P4 set bits
/// (black) decode to 0.0.
pub fn read_netpbm(bytes: &[u8]) -> Result<Image> {
    if bytes.len() < 2 || bytes[0] != b'P' {
        return Err(NciError::at_byte(0, "missing NetPBM magic"));
    }
    let kind = bytes[1];
    let channels = match kind {
        b'4' | b'5' => 1,
        b'6' => 3,
        _ => return Err(NciError::at_byte(1, format!("unsupported NetPBM type P{}", kind as char))),
    };
    let mut cur = Cursor { bytes, pos: 2 };
    let width = cur.number()? as usize;
    let height = cur.number()? as usize;
    let maxval = if kind == b'4' { 1 } else { cur.number()? };
    if maxval == 0 || maxval > 65535 {
        return Err(NciError::at_byte(cur.pos as u64, format!("invalid maxval {maxval}")));
    }
    if cur.pos >= bytes.len() || !bytes[cur.pos].is_ascii_whitespace() {
        return Err(NciError::at_byte(cur.pos as u64, "expected a single whitespace before raster"));
    }
    cur.pos += 1;
    let raster = &bytes[cur.pos..];
    let (expected, data) = if kind == b'4' {
        let row_bytes = width.div_ceil(8);
        let expected = row_bytes * height;
        if raster.len() < expected {
            return Err(NciError::at_byte(bytes.len() as u64, "truncated raster"));
        }
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let bit = raster[y * row_bytes + x / 8] & (0x80 >> (x % 8));
                data.push(if bit != 0 { 0.0 } else { 1.0 });
            }
        }
        (expected, data)
    } else {
        let bps = if maxval > 255 { 2 } else { 1 };
        let n = width * height * channels;
        let expected = n * bps;
        if raster.len() < expected {
            return Err(NciError::at_byte(bytes.len() as u64, "truncated raster"));
        }
        let scale = maxval as f64;
        let data = (0..n)
            .map(|i| {
                let v = if bps == 2 {
                    u16::from_be_bytes([raster[2 * i], raster[2 * i + 1]]) as f64
                } else {
                    raster[i] as f64
                };
                v / scale
            })
            .collect();
        (expected, data)
    };
    if raster.len() > expected {
        return Err(NciError::at_byte((cur.pos + expected) as u64, "trailing bytes after raster"));
    }
    Image::new(width, height, channels, data)
}
