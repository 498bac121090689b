//! Spatial manipulation masks: pixels that are well lit in the frame but
//! dark in a code image were likely pasted in, since real surfaces under a
//! coded light carry its code.

use crate::decode::{export_range, CodeImage, SATURATION_LEVEL};
use crate::error::{NciError, Result};
use crate::frames::{Image, LUMA_WEIGHTS};
use crate::simulate::NoiseParams;

/// Noise multiple used for the default code floor.
pub const DEFAULT_FLOOR_SIGMAS: f64 = 3.0;

/// Threshold below which a code-image value counts as dark.
#[derive(Debug, Clone, PartialEq)]
pub enum CodeFloor {
    Explicit(f64),
    /// `sigmas` times the estimator's noise std at each pixel,
    /// `(a + b sqrt(L)) / (rms(c) sqrt(M w))`, with `L` the frame brightness
    /// and `M`, `w` taken from the code image.
    FromNoise {
        noise: Vec<NoiseParams>,
        code_rms: f64,
        sigmas: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskOptions {
    pub bright_thresh: f64,
    pub code_floor: CodeFloor,
    pub min_weight: f64,
}

impl MaskOptions {
    pub fn new(code_floor: CodeFloor) -> Self {
        Self { bright_thresh: 0.25, code_floor, min_weight: 0.5 }
    }

    /// Defaults with a floor derived from the noise model.
    pub fn from_noise(noise: Vec<NoiseParams>, code_rms: f64) -> Self {
        Self::new(CodeFloor::FromNoise { noise, code_rms, sigmas: DEFAULT_FLOOR_SIGMAS })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManipulationMask {
    pub width: usize,
    pub height: usize,
    /// Frame luminance where the code image is dark, else 0.
    pub score: Vec<f64>,
    /// `score > bright_thresh`.
    pub mask: Vec<bool>,
    /// Pixels excluded as saturated, invalid or low-weight.
    pub inconclusive: Vec<bool>,
    pub bright_thresh: f64,
    pub min_weight: f64,
    pub source_id: usize,
    pub t_center: usize,
}

impl ManipulationMask {
    pub fn flagged(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    pub fn score_image(&self) -> Image {
        Image { width: self.width, height: self.height, channels: 1, data: self.score.clone() }
    }
}

/// Compare `frame` with `code` (both at any resolution; the frame is box
/// averaged down to the code image's). A pixel is dark in the code image
/// when every channel's magnitude is below the floor.
pub fn manipulation_mask(frame: &Image, code: &CodeImage, opts: &MaskOptions) -> Result<ManipulationMask> {
    let f = frame.downsample(code.downsample.max(1));
    if f.width != code.width || f.height != code.height || f.channels != code.channels {
        return Err(NciError::invalid(format!(
            "frame {}x{}x{} does not match code image {}x{}x{}",
            f.width, f.height, f.channels, code.width, code.height, code.channels
        )));
    }
    let floor = |i: usize, c: usize| -> Result<f64> {
        match &opts.code_floor {
            CodeFloor::Explicit(v) => Ok(*v),
            CodeFloor::FromNoise { noise, code_rms, sigmas } => {
                let p = noise.get(c).or(noise.first()).ok_or_else(|| {
                    NciError::invalid("code floor needs a noise estimate; give an explicit floor instead")
                })?;
                if !(*code_rms > 0.0) {
                    return Err(NciError::invalid("code rms must be positive"));
                }
                let mw = (code.downsample * code.downsample * code.frames.len()) as f64;
                Ok(sigmas * p.std_at(f.data[i * f.channels + c]) / (code_rms * mw.sqrt()))
            }
        }
    };
    // Saturation is judged on the full-resolution frame.
    let k = code.downsample.max(1);
    let saturated = |x: usize, y: usize| {
        (0..k).any(|dy| {
            (0..k).any(|dx| (0..frame.channels).any(|c| frame.get(x * k + dx, y * k + dy, c) >= SATURATION_LEVEL))
        })
    };

    let luma = f.luminance();
    let n = f.width * f.height;
    let mut score = vec![0.0; n];
    let mut inconclusive = vec![false; n];
    for i in 0..n {
        let (x, y) = (i % f.width, i / f.width);
        let chans = i * f.channels..(i + 1) * f.channels;
        let excluded = saturated(x, y)
            || chans.clone().any(|j| !code.valid[j])
            || code.weight_map.as_ref().is_some_and(|w| chans.clone().any(|j| w[j] < opts.min_weight));
        if excluded {
            inconclusive[i] = true;
            continue;
        }
        let mut dark = true;
        for c in 0..f.channels {
            dark &= code.values[i * f.channels + c].abs() < floor(i, c)?;
        }
        if dark {
            score[i] = luma[i];
        }
    }
    let mask = score.iter().map(|s| *s > opts.bright_thresh).collect();
    Ok(ManipulationMask {
        width: f.width,
        height: f.height,
        score,
        mask,
        inconclusive,
        bright_thresh: opts.bright_thresh,
        min_weight: opts.min_weight,
        source_id: code.source_id,
        t_center: code.t_center,
    })
}

fn to_rgb(img: &Image) -> Image {
    if img.channels == 3 {
        return img.clone();
    }
    Image::from_fn(img.width, img.height, 3, |x, y, _| {
        if img.channels == 1 {
            img.get(x, y, 0)
        } else {
            (0..img.channels.min(3)).map(|c| LUMA_WEIGHTS[c] * img.get(x, y, c)).sum()
        }
    })
}

/// Nearest-neighbour resize onto `w` x `h`.
fn fit(img: &Image, w: usize, h: usize) -> Image {
    Image::from_fn(w, h, img.channels, |x, y, c| {
        let sx = (x * img.width / w).min(img.width - 1);
        let sy = (y * img.height / h).min(img.height - 1);
        img.get(sx, sy, c)
    })
}

/// Frame, each code image (scaled to its export range) and the mask (white
/// where flagged), left to right, each panel the size of the frame.
pub fn side_by_side(frame: &Image, code_images: &[CodeImage], mask: &ManipulationMask) -> Image {
    let (w, h) = (frame.width, frame.height);
    let mut panels = vec![to_rgb(frame)];
    for ci in code_images {
        let (lo, hi) = export_range(ci);
        let mut img = ci.as_image();
        for v in img.data.iter_mut() {
            *v = ((*v - lo) / (hi - lo)).clamp(0.0, 1.0);
        }
        panels.push(to_rgb(&fit(&img, w, h)));
    }
    let m = Image {
        width: mask.width,
        height: mask.height,
        channels: 1,
        data: mask.mask.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
    };
    panels.push(to_rgb(&fit(&m, w, h)));
    Image::from_fn(w * panels.len(), h, 3, |x, y, c| panels[x / w].get(x % w, y, c))
}
