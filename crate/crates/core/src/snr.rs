//! Decode SNR under the read plus shot noise model `a + b sqrt(L)`.
//!
//! A code image pixel averages `M` samples over `w` frames, so its noise std
//! is `(a + b sqrt(L)) / (rms(c) r sqrt(M w))` in units of `r`, giving
//! `SNR = sqrt(M w) rms(c) r / (a + b sqrt(L))`.

use std::fmt::Write as _;

use crate::decode::CodeImage;
use crate::error::{NciError, Result};
use crate::frames::Image;

pub use crate::simulate::NoiseParams as SnrModel;

/// Measured SNRs are clamped to this many dB. It corresponds to a relative
/// error of 1e-12, well above double-precision round-off, so noiseless
/// decodes report exactly this value.
pub const MAX_SNR_DB: f64 = 240.0;

/// Predicted SNR in dB; `f64::INFINITY` when the model has no noise.
pub fn predict_snr(model: &SnrModel, code_rms_times_r: f64, l: f64, w: f64, m: f64) -> Result<f64> {
    for (name, v) in [("code rms", code_rms_times_r), ("brightness", l), ("window", w), ("sample count", m)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(NciError::invalid(format!("{name} must be positive, got {v}")));
        }
    }
    if !(model.read_std >= 0.0 && model.photon_coeff >= 0.0) {
        return Err(NciError::invalid("noise parameters must be non-negative"));
    }
    let noise = model.std_at(l);
    if noise == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(20.0 * ((m * w).sqrt() * code_rms_times_r / noise).log10())
}

fn db(ratio: f64) -> f64 {
    if ratio.is_finite() {
        (20.0 * ratio.log10()).clamp(-MAX_SNR_DB, MAX_SNR_DB)
    } else {
        MAX_SNR_DB
    }
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// SNR of one decode against the true transport image (same resolution).
///
/// With a single estimate per pixel the noise is pooled: the relative error
/// `(est - truth) / truth` over valid pixels with positive truth, and its
/// robust std `1.4826 * median|error|`. The result is the SNR of a typical
/// pixel, `-20 log10(std)`.
pub fn measure_snr(estimate: &CodeImage, truth: &Image) -> Result<f64> {
    if truth.width != estimate.width || truth.height != estimate.height || truth.channels != estimate.channels {
        return Err(NciError::invalid("ground truth does not match the code image"));
    }
    let rel: Vec<f64> = estimate
        .values
        .iter()
        .zip(&estimate.valid)
        .zip(&truth.data)
        .filter(|((_, ok), t)| **ok && **t > 0.0)
        .map(|((e, _), t)| ((e - t) / t).abs())
        .collect();
    let m = median(rel).ok_or_else(|| NciError::invalid("no valid pixels with positive ground truth"))?;
    Ok(db(1.0 / (1.4826 * m)))
}

/// SNR from repeated decodes with independent noise: per pixel
/// `|mean| / std` over trials, aggregated by the median over pixels.
pub fn measure_snr_trials(trials: &[CodeImage]) -> Result<f64> {
    if trials.len() < 20 {
        return Err(NciError::invalid(format!("need at least 20 trials, got {}", trials.len())));
    }
    let first = &trials[0];
    if trials.iter().any(|t| t.values.len() != first.values.len()) {
        return Err(NciError::invalid("trial code images differ in size"));
    }
    let n = trials.len() as f64;
    let per_pixel: Vec<f64> = (0..first.values.len())
        .filter(|&i| trials.iter().all(|t| t.valid[i]))
        .map(|i| {
            let mean = trials.iter().map(|t| t.values[i]).sum::<f64>() / n;
            let var = trials.iter().map(|t| (t.values[i] - mean).powi(2)).sum::<f64>() / (n - 1.0);
            db(mean.abs() / var.sqrt())
        })
        .collect();
    median(per_pixel).ok_or_else(|| NciError::invalid("no pixel is valid in every trial"))
}

/// Prediction grid as CSV with columns `L,code_rms,w,M,snr_db`.
pub fn prediction_table(model: &SnrModel, ls: &[f64], code_rms: &[f64], ws: &[f64], ms: &[f64]) -> Result<String> {
    let mut out = String::from("L,code_rms,w,M,snr_db\n");
    for &l in ls {
        for &r in code_rms {
            for &w in ws {
                for &m in ms {
                    let snr = predict_snr(model, r, l, w, m)?;
                    let _ = writeln!(out, "{l},{r},{w},{m},{snr}");
                }
            }
        }
    }
    Ok(out)
}
