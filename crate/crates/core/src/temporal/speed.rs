use std::ops::Range;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::{check_search, mean_trace, sample_at, scan_resampled, span_len};
use crate::codegen::CodeBank;
use crate::correlate::peak_with_confidence;
use crate::decode::BilateralParams;
use crate::error::{NciError, Result};
use crate::frames::FrameSequence;

#[derive(Debug, Clone, PartialEq)]
pub struct SpeedScanOptions {
    pub rho_min: f64,
    pub rho_max: f64,
    /// Ratio between neighbouring grid points.
    pub step: f64,
    /// Grid points on each side of the spectral optimum that are re-scored
    /// by matched filtering in time.
    pub refine_steps: usize,
    /// Distinct spectral peaks refined. The spectral score is broad on
    /// short clips, so its single best point can sit on the wrong lobe.
    pub candidates: usize,
    pub bilateral: Option<BilateralParams>,
}

impl Default for SpeedScanOptions {
    fn default() -> Self {
        Self { rho_min: 0.5, rho_max: 2.0, step: 1.01, refine_steps: 6, candidates: 3, bilateral: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeedScanResult {
    /// Capture frames per video frame (0.6 for footage slowed to 0.6x).
    pub rho: f64,
    /// Capture time of video frame 0.
    pub offset: u64,
    /// Correlation at `(rho, offset)`.
    pub score: f64,
    pub confidence: f64,
    pub grid: Vec<f64>,
    /// Spectral magnitude score per grid point.
    pub spectral: Vec<f64>,
}

/// Geometric grid `step^k` covering `[lo, hi]`; contains 1 whenever the
/// interval does.
pub fn rho_grid(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi >= lo && step > 1.0) || !hi.is_finite() {
        return Err(NciError::invalid(format!("bad speed grid {lo}..{hi} step {step}")));
    }
    let k0 = (lo.ln() / step.ln() - 1e-9).ceil() as i64;
    let k1 = (hi.ln() / step.ln() + 1e-9).floor() as i64;
    let grid: Vec<f64> = (k0..=k1).map(|k| step.powi(k as i32)).collect();
    if grid.is_empty() {
        return Err(NciError::invalid(format!("speed grid {lo}..{hi} step {step} has no points")));
    }
    Ok(grid)
}

struct Spectrum {
    len: usize,
    fft: std::sync::Arc<dyn rustfft::Fft<f64>>,
    window: Vec<f64>,
}

impl Spectrum {
    fn new(len: usize) -> Self {
        let fft = FftPlanner::<f64>::new().plan_fft_forward(len);
        let window = (0..len).map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / len as f64).cos()).collect();
        Self { len, fft, window }
    }

    /// Magnitudes of bins `1 .. len/2` of the windowed, demeaned input.
    fn magnitude(&self, x: &[f64]) -> Vec<f64> {
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        let mut buf: Vec<Complex64> =
            x.iter().zip(&self.window).map(|(v, w)| Complex64::new((v - mean) * w, 0.0)).collect();
        self.fft.process(&mut buf);
        buf[1..self.len / 2].iter().map(|c| c.norm()).collect()
    }
}

fn normalized_dot(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Estimate playback speed and start offset.
///
/// For each grid speed the code over the search span is resampled, its
/// windowed magnitude spectrum is averaged over half-overlapping windows the
/// length of the video, and compared with the video trace's magnitude
/// spectrum by normalized inner product. Magnitudes do not depend on the
/// unknown offset. Speeds near the spectral optimum are then re-scored by
/// matched filtering in time over every start offset, which fixes both the
/// offset and the final speed.
pub fn speed_scan(
    video: &FrameSequence,
    bank: &CodeBank,
    source_id: usize,
    search: Range<u64>,
    opts: &SpeedScanOptions,
) -> Result<SpeedScanResult> {
    check_search(&search)?;
    let grid = rho_grid(opts.rho_min, opts.rho_max, opts.step)?;
    let n = video.frames;
    if n < 16 {
        return Err(NciError::invalid("speed scan needs at least 16 frames"));
    }
    let trace = mean_trace(video, opts.bilateral.as_ref())?;
    let span = (opts.rho_max * n as f64).ceil() as u64 + 2;
    let code = bank.code_for_interval(search.start, search.end + span, source_id)?;

    let spec = Spectrum::new(n);
    let y_mag = spec.magnitude(&trace);
    let spectral: Vec<f64> = grid
        .par_iter()
        .map(|&rho| {
            let count = ((code.len() - 1) as f64 / rho).floor() as usize + 1;
            let resampled: Vec<f64> = (0..count).map(|j| sample_at(&code, rho * j as f64)).collect();
            let mut avg = vec![0.0; y_mag.len()];
            let hop = (n / 2).max(1);
            let mut start = 0;
            while start + n <= resampled.len() {
                for (a, m) in avg.iter_mut().zip(spec.magnitude(&resampled[start..start + n])) {
                    *a += m;
                }
                start += hop;
            }
            normalized_dot(&y_mag, &avg)
        })
        .collect();

    let mut to_refine = vec![false; grid.len()];
    for c in spectral_peaks(&spectral, opts.refine_steps, opts.candidates.max(1)) {
        let lo = c.saturating_sub(opts.refine_steps);
        let hi = (c + opts.refine_steps).min(grid.len() - 1);
        to_refine[lo..=hi].iter_mut().for_each(|r| *r = true);
    }
    let offsets = span_len(&search);
    let refined: Vec<(usize, Vec<f64>)> = (0..grid.len())
        .into_par_iter()
        .filter(|&g| to_refine[g])
        .map(|g| {
            let rho = grid[g];
            // The last offset must still have code for every video frame.
            let usable = (code.len() as f64 - 1.0 - rho * (n - 1) as f64).floor() as usize + 1;
            (g, scan_resampled(&trace, &code, rho, offsets.min(usable)))
        })
        .collect();
    let (g, scores) = refined
        .iter()
        .max_by(|a, b| {
            let pa = a.1.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let pb = b.1.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            pa.total_cmp(&pb).then(b.0.cmp(&a.0))
        })
        .unwrap();
    let (peak, confidence) = peak_with_confidence(scores).unwrap_or((0, 0.0));
    Ok(SpeedScanResult {
        rho: grid[*g],
        offset: search.start + peak as u64,
        score: scores[peak],
        confidence,
        grid,
        spectral,
    })
}

/// Indices of the `count` highest local maxima of `score`, each more than
/// `min_gap` points from any higher one already taken.
fn spectral_peaks(score: &[f64], min_gap: usize, count: usize) -> Vec<usize> {
    let n = score.len();
    let mut maxima: Vec<usize> =
        (0..n).filter(|&i| (i == 0 || score[i] >= score[i - 1]) && (i + 1 == n || score[i] >= score[i + 1])).collect();
    maxima.sort_by(|&a, &b| score[b].total_cmp(&score[a]).then(a.cmp(&b)));
    let mut picked: Vec<usize> = Vec::new();
    for i in maxima {
        if picked.len() == count {
            break;
        }
        if picked.iter().all(|&p| p.abs_diff(i) > min_gap) {
            picked.push(i);
        }
    }
    picked
}
