//! Recovering per-source code images from video.
//!
//! The default pipeline is: optional translation stabilization, optional
//! temporal bilateral residual, then the matched-filter estimate
//! `c . y / c . c` per pixel and channel (optionally transient weighted).
//! Channels are decoded independently.

mod bilateral;
mod code_image;
mod stabilize;

use std::fmt::Write as _;

pub use bilateral::{bilateral_residual, bilateral_residual_trace, BilateralParams};
pub use code_image::{code_image, transient_filtered_code_image, AnalysisWindow, CodeImage, SATURATION_LEVEL};
pub use stabilize::{stabilize_translation, Stabilized};

use crate::error::{NciError, Result};
use crate::frames::{FrameSequence, Image};
use crate::io::{write_netpbm, BitDepth};

/// Transient weight falloff used by default, on a `[0, 1]` brightness scale.
pub const DEFAULT_TRANSIENT_SIGMA: f64 = 0.05;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DecodeOptions {
    pub stabilize: bool,
    pub bilateral: Option<BilateralParams>,
    /// Enables transient filtering with this sigma.
    pub transient_sigma: Option<f64>,
    /// Undo a `v^(1/gamma)` encoding before decoding.
    pub linearize_gamma: Option<f64>,
}

/// Apply the configured pipeline and decode one source.
pub fn decode(
    video: &FrameSequence,
    code: &[f64],
    window: &AnalysisWindow,
    source_id: usize,
    opts: &DecodeOptions,
) -> Result<CodeImage> {
    let mut work = video.clone();
    if let Some(g) = opts.linearize_gamma {
        if !(g > 0.0) {
            return Err(NciError::invalid(format!("gamma must be positive, got {g}")));
        }
        for v in work.data.iter_mut() {
            *v = v.max(0.0).powf(g);
        }
    }
    let mut valid_px: Option<Vec<bool>> = None;
    if opts.stabilize {
        let s = stabilize_translation(&work)?;
        valid_px = Some(s.valid);
        work = s.video;
    }
    let analysed = match &opts.bilateral {
        Some(p) => bilateral_residual(&work, p)?,
        None => work.clone(),
    };
    let mut img = match opts.transient_sigma {
        Some(sigma) => code_image::transient_filtered_with_reference(&analysed, &work, code, window, sigma, source_id)?,
        None => code_image(&analysed, code, window, source_id)?,
    };
    if let Some(valid) = valid_px {
        invalidate_borders(&mut img, &valid, video.width, window.downsample.max(1));
    }
    Ok(img)
}

fn invalidate_borders(img: &mut CodeImage, valid: &[bool], full_width: usize, factor: usize) {
    for y in 0..img.height {
        for x in 0..img.width {
            let ok =
                (0..factor).all(|dy| (0..factor).all(|dx| valid[(y * factor + dy) * full_width + x * factor + dx]));
            if !ok {
                for c in 0..img.channels {
                    let i = (y * img.width + x) * img.channels + c;
                    img.valid[i] = false;
                    img.values[i] = 0.0;
                    if let Some(w) = img.weight_map.as_mut() {
                        w[i] = 0.0;
                    }
                }
            }
        }
    }
}

/// Scale used when exporting a code image: negatives clamp to 0 and the
/// largest valid value maps to full scale.
pub fn export_range(img: &CodeImage) -> (f64, f64) {
    let hi = img.values.iter().zip(&img.valid).filter(|(_, ok)| **ok).map(|(v, _)| *v).fold(0.0f64, f64::max);
    (0.0, if hi > 0.0 { hi } else { 1.0 })
}

/// 16-bit PGM (one channel) or PPM (three channels) plus the sidecar text.
pub fn export_code_image(img: &CodeImage) -> Result<(Vec<u8>, String)> {
    let (lo, hi) = export_range(img);
    let scaled = Image::new(
        img.width,
        img.height,
        img.channels,
        img.values.iter().map(|v| ((v - lo) / (hi - lo)).clamp(0.0, 1.0)).collect(),
    )?;
    let bytes = write_netpbm(&scaled, BitDepth::Sixteen)?;
    let mut side = String::new();
    let _ = writeln!(side, "source_id={}", img.source_id);
    let _ = writeln!(side, "t_center={}", img.t_center);
    let _ = writeln!(side, "frames={}..{}", img.frames.start, img.frames.end);
    let _ = writeln!(side, "window={}", img.frames.len());
    let _ = writeln!(side, "downsample={}", img.downsample);
    let _ = writeln!(side, "min={lo}");
    let _ = writeln!(side, "max={hi}");
    let _ = writeln!(side, "invalid={}", img.invalid_count());
    let _ = writeln!(side, "scale=relative");
    Ok((bytes, side))
}
