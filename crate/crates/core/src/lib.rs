//! Noise-coded illumination toolkit.
//!
//! Lights in a scene are modulated by faint, band-limited pseudo-random codes.
//! Video captured under them carries the codes in its apparent noise, and
//! correlating the video against the known codes recovers per-source
//! transport images ("code images"), registers the video in time, and
//! exposes cuts, speed changes and composited regions.
//!
//! Modules:
//! - [`codegen`]: code generation and the code CSV format
//! - [`simulate`]: synthetic coded video with read and shot noise
//! - [`tamper`]: ground-truth manipulations and their edit logs
//! - [`decode`]: bilateral residuals, stabilization, code images
//! - [`temporal`]: registration, alignment matrices, speed scans
//! - [`spatial`]: manipulation masks and analyst montages
//! - [`snr`]: the read/shot-noise SNR model
//! - [`io`]: Y4M, FSEQ and NetPBM

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod codegen;
pub mod decode;
pub mod error;
pub mod frames;
pub mod io;
pub mod rng;
pub mod selftest;
pub mod simulate;
pub mod snr;
pub mod spatial;
pub mod tamper;
pub mod temporal;

mod correlate;

pub use error::{NciError, Result};
pub use frames::{FrameSequence, Image};
