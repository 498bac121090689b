//! FSEQ: `"FSEQ"`, then little-endian `u32` version, T, H, W, C, then
//! `T*H*W*C` little-endian `f32` samples in `(t, h, w, c)` order.

use crate::error::{NciError, Result};
use crate::frames::FrameSequence;

pub const FSEQ_MAGIC: &[u8; 4] = b"FSEQ";
pub const FSEQ_VERSION: u32 = 1;
pub const FSEQ_HEADER_LEN: usize = 24;

/// Samples are narrowed to `f32`.
pub fn write_fseq(video: &FrameSequence) -> Vec<u8> {
    let mut out = Vec::with_capacity(FSEQ_HEADER_LEN + 4 * video.data.len());
    out.extend_from_slice(FSEQ_MAGIC);
    for v in [FSEQ_VERSION, video.frames as u32, video.height as u32, video.width as u32, video.channels as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for &v in &video.data {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

/// The container carries no frame rate; `fps` is attached to the result.
pub fn read_fseq(bytes: &[u8], fps: f64) -> Result<FrameSequence> {
    if bytes.len() < FSEQ_HEADER_LEN {
        return Err(NciError::at_byte(bytes.len() as u64, "truncated FSEQ header"));
    }
    if &bytes[..4] != FSEQ_MAGIC {
        return Err(NciError::at_byte(0, "bad FSEQ magic"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap());
    let version = word(0);
    if version != FSEQ_VERSION {
        return Err(NciError::at_byte(4, format!("unsupported FSEQ version {version}")));
    }
    let dims = [word(1), word(2), word(3), word(4)].map(|d| d as usize);
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| NciError::at_byte(8, "FSEQ dimensions overflow"))?;
    let expected = FSEQ_HEADER_LEN as u64 + 4 * count as u64;
    if (bytes.len() as u64) < expected {
        return Err(NciError::at_byte(bytes.len() as u64, format!("truncated payload, expected {expected} bytes")));
    }
    if (bytes.len() as u64) > expected {
        return Err(NciError::at_byte(expected, "trailing bytes after payload"));
    }
    let data: Vec<f64> =
        bytes[FSEQ_HEADER_LEN..].chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64).collect();
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(NciError::at_byte((FSEQ_HEADER_LEN + 4 * i) as u64, "non-finite sample"));
    }
    FrameSequence::new(dims[0], dims[1], dims[2], dims[3], fps, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_sample_layout() {
        let v = FrameSequence::new(1, 1, 1, 1, 30.0, vec![0.25]).unwrap();
        let b = write_fseq(&v);
        assert_eq!(b.len(), FSEQ_HEADER_LEN + 4);
        assert_eq!(&b[..4], b"FSEQ");
        assert_eq!(&b[4..24], &[1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0]);
        assert_eq!(u32::from_le_bytes(b[24..28].try_into().unwrap()), 0x3E80_0000);
    }

    #[test]
    fn wrong_magic_and_version() {
        let v = FrameSequence::new(1, 1, 1, 1, 30.0, vec![0.25]).unwrap();
        let mut b = write_fseq(&v);
        b[0] = b'X';
        assert!(matches!(read_fseq(&b, 30.0), Err(NciError::ParseByte { offset: 0, .. })));
        let mut b = write_fseq(&v);
        b[4] = 2;
        assert!(read_fseq(&b, 30.0).unwrap_err().to_string().contains("version"));
    }

    #[test]
    fn truncation_and_trailing_garbage() {
        let v = FrameSequence::new(2, 1, 1, 1, 30.0, vec![0.25, 0.5]).unwrap();
        let b = write_fseq(&v);
        assert!(read_fseq(&b[..b.len() - 1], 30.0).is_err());
        let mut b2 = b.clone();
        b2.push(0);
        assert!(matches!(read_fseq(&b2, 30.0), Err(NciError::ParseByte { offset: 32, .. })));
    }
}
