//! On-disk formats: YUV4MPEG2 video, the FSEQ float container, and binary
//! NetPBM images. All readers report byte offsets on failure and reject
//! trailing bytes; all writers are deterministic.

mod fseq;
mod netpbm;
mod y4m;

pub use fseq::{read_fseq, write_fseq, FSEQ_HEADER_LEN, FSEQ_MAGIC, FSEQ_VERSION};
pub use netpbm::{read_netpbm, write_netpbm, write_pbm, BitDepth};
pub use y4m::{read_y4m, write_y4m, Chroma, Y4mHeader};

use std::fs;
use std::path::Path;

use crate::error::Result;
use crate::frames::FrameSequence;

/// Read a video, choosing the format by extension (`.y4m` or FSEQ otherwise).
pub fn read_video(path: &Path, fps_hint: f64) -> Result<FrameSequence> {
    let bytes = fs::read(path)?;
    let is_y4m = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("y4m"));
    let video = if is_y4m { read_y4m(&bytes)? } else { read_fseq(&bytes, fps_hint)? };
    Ok(video.with_provenance(path.display().to_string()))
}

pub fn write_video(path: &Path, video: &FrameSequence) -> Result<()> {
    let is_y4m = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("y4m"));
    let bytes = if is_y4m { write_y4m(video)? } else { write_fseq(video) };
    fs::write(path, bytes)?;
    Ok(())
}
