use std::ops::Range;

use rayon::prelude::*;

use crate::error::{NciError, Result};
use crate::frames::FrameSequence;

/// Samples at or above this value are treated as sensor-saturated.
pub const SATURATION_LEVEL: f64 = 1.0 - 1e-9;

/// Temporal analysis window and spatial averaging for a code image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalysisWindow {
    pub t_center: usize,
    /// Window length in frames.
    pub w: usize,
    /// Per-axis box-downsampling factor; `M = downsample^2`.
    pub downsample: usize,
}

impl AnalysisWindow {
    pub const DEFAULT_LEN: usize = 450;
    pub const DEFAULT_DOWNSAMPLE: usize = 2;

    pub fn new(t_center: usize, w: usize) -> Self {
        Self { t_center, w, downsample: Self::DEFAULT_DOWNSAMPLE }
    }

    /// The whole video at full resolution.
    pub fn full(frames: usize) -> Self {
        Self { t_center: frames / 2, w: frames, downsample: 1 }
    }

    pub fn with_downsample(mut self, factor: usize) -> Self {
        self.downsample = factor;
        self
    }

    /// Averaged samples per code-image pixel.
    pub fn m(&self) -> usize {
        self.downsample * self.downsample
    }

    /// Frames covered once the window is clamped into `[0, frames)`.
    pub fn frame_range(&self, frames: usize) -> Result<Range<usize>> {
        if self.w < 2 {
            return Err(NciError::invalid(format!("window length {} is below 2 frames", self.w)));
        }
        if frames < 2 {
            return Err(NciError::invalid("video is shorter than 2 frames"));
        }
        let w = self.w.min(frames);
        let start = self.t_center.saturating_sub(w / 2).min(frames - w);
        Ok(start..start + w)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CodeImage {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    /// Transfer-coefficient estimates, known up to the global scale of the
    /// analysis code. Negative values are kept.
    pub values: Vec<f64>,
    /// False where no estimate could be formed; the value there is 0.
    pub valid: Vec<bool>,
    /// Mean transient weight per sample, for transient-filtered images.
    pub weight_map: Option<Vec<f64>>,
    pub source_id: usize,
    /// Frames actually used.
    pub frames: Range<usize>,
    pub t_center: usize,
    pub downsample: usize,
}

impl CodeImage {
    /// Values are proportional to the true transfer coefficients; the
    /// constant depends on the analysis code's calibration.
    pub const SCALE_IS_RELATIVE: bool = true;

    pub fn as_image(&self) -> crate::frames::Image {
        crate::frames::Image {
            width: self.width,
            height: self.height,
            channels: self.channels,
            data: self.values.clone(),
        }
    }

    pub fn invalid_count(&self) -> usize {
        self.valid.iter().filter(|v| !**v).count()
    }
}

pub(crate) fn check_code(video: &FrameSequence, code: &[f64]) -> Result<()> {
    if code.len() != video.frames {
        return Err(NciError::invalid(format!("code has {} samples for a {}-frame video", code.len(), video.frames)));
    }
    Ok(())
}

/// Weighted least-squares slope of `y` on `c`:
/// `sum g (c - c_g) y / sum g (c - c_g) c` with `c_g` the weighted code mean.
/// With unit weights this is `c~ . y / c~ . c~` for the window-demeaned code
/// `c~`, which matches `c . y / c . c` for a zero-mean window and removes the
/// uncoded light otherwise. Returns `None` when the denominator vanishes.
fn weighted_slope(y: impl Fn(usize) -> f64, code: &[f64], weights: Option<&[f64]>) -> Option<f64> {
    let g = |t: usize| weights.map_or(1.0, |w| w[t]);
    let (mut sw, mut swc) = (0.0, 0.0);
    for (t, &c) in code.iter().enumerate() {
        sw += g(t);
        swc += g(t) * c;
    }
    if sw <= 0.0 {
        return None;
    }
    let mean = swc / sw;
    let (mut num, mut den) = (0.0, 0.0);
    for (t, &c) in code.iter().enumerate() {
        let gc = g(t) * (c - mean);
        num += gc * y(t);
        den += gc * c;
    }
    if den.abs() <= f64::MIN_POSITIVE || !den.is_finite() {
        return None;
    }
    Some(num / den)
}

/// Per-pixel, per-channel code image over `window`. `code[t]` is the code
/// sample for video frame `t`.
pub fn code_image(video: &FrameSequence, code: &[f64], window: &AnalysisWindow, source_id: usize) -> Result<CodeImage> {
    check_code(video, code)?;
    let range = window.frame_range(video.frames)?;
    let analysis = &code[range.clone()];
    let mean = analysis.iter().sum::<f64>() / analysis.len() as f64;
    if analysis.iter().all(|&c| (c - mean).abs() == 0.0) {
        return Err(NciError::DegenerateCode(format!("code has no energy over frames {range:?}")));
    }
    let v = video.downsample(window.downsample.max(1));
    let stride = v.frame_len();
    let start = range.start;
    let values: Vec<Option<f64>> = (0..stride)
        .into_par_iter()
        .map(|s| weighted_slope(|t| v.data[(start + t) * stride + s], analysis, None))
        .collect();
    if values.iter().any(|v| v.is_none()) {
        return Err(NciError::DegenerateCode(format!("code has no energy over frames {range:?}")));
    }
    Ok(CodeImage {
        width: v.width,
        height: v.height,
        channels: v.channels,
        values: values.iter().map(|v| v.unwrap()).collect(),
        valid: vec![true; stride],
        weight_map: None,
        source_id,
        frames: range,
        t_center: window.t_center,
        downsample: window.downsample.max(1),
    })
}

/// Saturation flags at the downsampled resolution: a block is saturated in
/// a frame if any of its source samples is.
fn saturation(video: &FrameSequence, factor: usize) -> Vec<bool> {
    let mut flags = Vec::new();
    let (w, h) = (video.width / factor, video.height / factor);
    for t in 0..video.frames {
        let f = video.frame(t);
        for y in 0..h {
            for x in 0..w {
                for c in 0..video.channels {
                    let mut sat = false;
                    for dy in 0..factor {
                        for dx in 0..factor {
                            let i = ((y * factor + dy) * video.width + x * factor + dx) * video.channels + c;
                            sat |= f[i] >= SATURATION_LEVEL;
                        }
                    }
                    flags.push(sat);
                }
            }
        }
    }
    flags
}

/// Transient-filtered code image. Each sample in the window is weighted by
/// `exp(-((y(t+d) - y(t)) / sigma)^2 / 2)` relative to the window's centre
/// frame `t`; saturated samples get weight 0. `weights_from` supplies the
/// brightness used for the weights (defaults to `video`), which lets the
/// estimate run on filtered residuals while weighting by raw intensity.
pub fn transient_filtered_code_image(
    video: &FrameSequence,
    code: &[f64],
    window: &AnalysisWindow,
    sigma: f64,
    source_id: usize,
) -> Result<CodeImage> {
    transient_filtered_with_reference(video, video, code, window, sigma, source_id)
}

pub(crate) fn transient_filtered_with_reference(
    video: &FrameSequence,
    weights_from: &FrameSequence,
    code: &[f64],
    window: &AnalysisWindow,
    sigma: f64,
    source_id: usize,
) -> Result<CodeImage> {
    if !(sigma > 0.0) {
        return Err(NciError::invalid(format!("transient sigma must be positive, got {sigma}")));
    }
    check_code(video, code)?;
    let range = window.frame_range(video.frames)?;
    let analysis = &code[range.clone()];
    let factor = window.downsample.max(1);
    let v = video.downsample(factor);
    let reference = weights_from.downsample(factor);
    let sat = saturation(weights_from, factor);
    let stride = v.frame_len();
    let start = range.start;
    let centre = window.t_center.clamp(range.start, range.end - 1);
    let inv = 1.0 / (2.0 * sigma * sigma);

    let results: Vec<(Option<f64>, f64)> = (0..stride)
        .into_par_iter()
        .map(|s| {
            let y_ref = reference.data[centre * stride + s];
            let g: Vec<f64> = range
                .clone()
                .map(|t| {
                    let i = t * stride + s;
                    if sat[i] {
                        0.0
                    } else {
                        let d = reference.data[i] - y_ref;
                        (-d * d * inv).exp()
                    }
                })
                .collect();
            let mean_g = g.iter().sum::<f64>() / g.len() as f64;
            let value = weighted_slope(|t| v.data[(start + t) * stride + s], analysis, Some(&g));
            (value, mean_g)
        })
        .collect();

    Ok(CodeImage {
        width: v.width,
        height: v.height,
        channels: v.channels,
        values: results.iter().map(|r| r.0.unwrap_or(0.0)).collect(),
        valid: results.iter().map(|r| r.0.is_some()).collect(),
        weight_map: Some(results.iter().map(|r| r.1).collect()),
        source_id,
        frames: range,
        t_center: window.t_center,
        downsample: factor,
    })
}
