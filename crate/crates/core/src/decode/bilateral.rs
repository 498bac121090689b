use rayon::prelude::*;

use crate::error::{NciError, Result};
use crate::frames::FrameSequence;

/// Temporal bilateral filter settings. The temporal kernel is Gaussian with
/// standard deviation `radius / 2` frames, truncated at `radius`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BilateralParams {
    /// Range standard deviation in brightness units.
    pub sigma_r: f64,
    pub radius: usize,
}

impl Default for BilateralParams {
    fn default() -> Self {
        // A 15-frame radius passes >99% of a 2 Hz component at 30 fps.
        Self { sigma_r: 0.05, radius: 15 }
    }
}

/// Filter one trace with a 1-D bilateral and return `y - B(y)`.
pub fn bilateral_residual_trace(y: &[f64], params: &BilateralParams) -> Vec<f64> {
    let r = params.radius as isize;
    let sigma_t = params.radius as f64 / 2.0;
    let spatial: Vec<f64> = (-r..=r).map(|d| (-(d * d) as f64 / (2.0 * sigma_t * sigma_t)).exp()).collect();
    let inv_range = 1.0 / (2.0 * params.sigma_r * params.sigma_r);
    let n = y.len() as isize;
    (0..n)
        .map(|t| {
            let yt = y[t as usize];
            let (mut num, mut den) = (0.0, 0.0);
            for d in -r..=r {
                let s = t + d;
                if s < 0 || s >= n {
                    continue;
                }
                let ys = y[s as usize];
                let diff = ys - yt;
                let w = spatial[(d + r) as usize] * (-diff * diff * inv_range).exp();
                num += w * diff;
                den += w;
            }
            // B(y)(t) = y(t) + num / den
            -num / den
        })
        .collect()
}

/// Per-sample temporal bilateral residual of a whole video.
pub fn bilateral_residual(video: &FrameSequence, params: &BilateralParams) -> Result<FrameSequence> {
    if params.radius < 1 {
        return Err(NciError::invalid("bilateral radius must be at least 1 frame"));
    }
    if !(params.sigma_r > 0.0) {
        return Err(NciError::invalid("bilateral range sigma must be positive"));
    }
    let traces: Vec<Vec<f64>> =
        (0..video.frame_len()).into_par_iter().map(|s| bilateral_residual_trace(&video.trace(s), params)).collect();
    Ok(FrameSequence::from_traces(video, &traces).with_provenance(format!(
        "{} | bilateral sigma_r={} radius={}",
        video.provenance, params.sigma_r, params.radius
    )))
}
