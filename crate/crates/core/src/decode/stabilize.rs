//! Whole-frame translation stabilization by phase correlation against
//! frame 0. Homography and face-tracking stabilization are not provided.

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{NciError, Result};
use crate::frames::FrameSequence;

#[derive(Debug, Clone, PartialEq)]
pub struct Stabilized {
    pub video: FrameSequence,
    /// `(dx, dy)` displacement of each frame's content relative to frame 0.
    pub shifts: Vec<(i64, i64)>,
    /// Per pixel, whether every frame had real content there after shifting.
    pub valid: Vec<bool>,
}

fn fft2(data: &mut [Complex64], w: usize, h: usize, inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let row = if inverse { planner.plan_fft_inverse(w) } else { planner.plan_fft_forward(w) };
    for r in data.chunks_exact_mut(w) {
        row.process(r);
    }
    let col = if inverse { planner.plan_fft_inverse(h) } else { planner.plan_fft_forward(h) };
    let mut buf = vec![Complex64::new(0.0, 0.0); h];
    for x in 0..w {
        for y in 0..h {
            buf[y] = data[y * w + x];
        }
        col.process(&mut buf);
        for y in 0..h {
            data[y * w + x] = buf[y];
        }
    }
}

fn windowed_spectrum(lum: &[f64], w: usize, h: usize) -> Vec<Complex64> {
    let mean = lum.iter().sum::<f64>() / lum.len() as f64;
    let hann = |i: usize, n: usize| {
        if n < 2 {
            1.0
        } else {
            0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos()
        }
    };
    let mut data: Vec<Complex64> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .map(|(x, y)| Complex64::new((lum[y * w + x] - mean) * hann(x, w) * hann(y, h), 0.0))
        .collect();
    fft2(&mut data, w, h, false);
    data
}

/// Displacement `(dx, dy)` of `moving` relative to `reference`, or `(0, 0)`
/// when the correlation surface has no clear peak.
fn phase_shift(reference: &[Complex64], moving: &[f64], w: usize, h: usize) -> (i64, i64) {
    let fm = windowed_spectrum(moving, w, h);
    let mut cross: Vec<Complex64> = reference
        .iter()
        .zip(&fm)
        .map(|(a, b)| {
            let p = b * a.conj();
            let m = p.norm();
            if m > 1e-20 {
                p / m
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect();
    fft2(&mut cross, w, h, true);
    let n = (w * h) as f64;
    let (idx, peak) =
        cross.iter().map(|c| c.re / n).enumerate().max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0))).unwrap();
    if peak < (6.0 / n.sqrt()).max(0.1) {
        return (0, 0);
    }
    let (x, y) = ((idx % w) as i64, (idx / w) as i64);
    let wrap = |v: i64, n: usize| if v > n as i64 / 2 { v - n as i64 } else { v };
    (wrap(x, w), wrap(y, h))
}

pub fn stabilize_translation(video: &FrameSequence) -> Result<Stabilized> {
    if video.frames < 2 {
        return Err(NciError::invalid("stabilization needs at least two frames"));
    }
    let (w, h, ch) = (video.width, video.height, video.channels);
    let reference = windowed_spectrum(&video.frame_image(0).luminance(), w, h);
    let shifts: Vec<(i64, i64)> = (0..video.frames)
        .into_par_iter()
        .map(|t| if t == 0 { (0, 0) } else { phase_shift(&reference, &video.frame_image(t).luminance(), w, h) })
        .collect();

    let mut valid = vec![true; w * h];
    let mut out = video.clone();
    for (t, &(dx, dy)) in shifts.iter().enumerate() {
        if dx == 0 && dy == 0 {
            continue;
        }
        let src = video.frame(t);
        let dst = out.frame_mut(t);
        for y in 0..h {
            for x in 0..w {
                let (sx, sy) = (x as i64 + dx, y as i64 + dy);
                let inside = sx >= 0 && sy >= 0 && sx < w as i64 && sy < h as i64;
                if !inside {
                    valid[y * w + x] = false;
                }
                for c in 0..ch {
                    dst[(y * w + x) * ch + c] =
                        if inside { src[((sy as usize) * w + sx as usize) * ch + c] } else { 0.0 };
                }
            }
        }
    }
    out.provenance = format!("{} | stabilized", video.provenance);
    Ok(Stabilized { video: out, shifts, valid })
}
