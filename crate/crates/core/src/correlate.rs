//! Normalized cross-correlation scans and peak confidence.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

/// Confidence reported when nothing outside the main lobe is positive.
pub const MAX_CONFIDENCE: f64 = 1e6;

/// Zero-mean, unit-norm correlation of `signal` against every window
/// `reference[o .. o + signal.len()]`, for `o = 0 ..= reference.len() - signal.len()`.
/// Windows or signals with no variance score 0.
pub fn ncc_scan(signal: &[f64], reference: &[f64]) -> Vec<f64> {
    let n = signal.len();
    if n == 0 || reference.len() < n {
        return Vec::new();
    }
    let offsets = reference.len() - n + 1;
    let mean = signal.iter().sum::<f64>() / n as f64;
    let centred: Vec<f64> = signal.iter().map(|v| v - mean).collect();
    let sig_norm = centred.iter().map(|v| v * v).sum::<f64>().sqrt();
    if sig_norm == 0.0 {
        return vec![0.0; offsets];
    }
    let numer = cross_correlate(&centred, reference, offsets);

    let mut sum = vec![0.0; reference.len() + 1];
    let mut sum_sq = vec![0.0; reference.len() + 1];
    for (i, &r) in reference.iter().enumerate() {
        sum[i + 1] = sum[i] + r;
        sum_sq[i + 1] = sum_sq[i] + r * r;
    }
    (0..offsets)
        .map(|o| {
            let s = sum[o + n] - sum[o];
            let ss = sum_sq[o + n] - sum_sq[o];
            let var = ss - s * s / n as f64;
            if var <= 0.0 {
                0.0
            } else {
                (numer[o] / (sig_norm * var.sqrt())).clamp(-1.0, 1.0)
            }
        })
        .collect()
}

/// `out[o] = sum_j a[j] * b[o + j]` for `o < offsets`, via FFT.
fn cross_correlate(a: &[f64], b: &[f64], offsets: usize) -> Vec<f64> {
    let len = (a.len() + b.len()).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(len);
    let inv = planner.plan_fft_inverse(len);
    let mut fa: Vec<Complex64> = a.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fa.resize(len, Complex64::new(0.0, 0.0));
    let mut fb: Vec<Complex64> = b.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fb.resize(len, Complex64::new(0.0, 0.0));
    fwd.process(&mut fa);
    fwd.process(&mut fb);
    let mut prod: Vec<Complex64> = fa.iter().zip(&fb).map(|(x, y)| x.conj() * y).collect();
    inv.process(&mut prod);
    let scale = 1.0 / len as f64;
    prod[..offsets].iter().map(|c| c.re * scale).collect()
}

/// Index of the highest score and the ratio of that score to the highest
/// score outside its main lobe (the run of monotonically falling scores on
/// either side of the peak).
pub fn peak_with_confidence(scores: &[f64]) -> Option<(usize, f64)> {
    let (peak, &best) = scores.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))?;
    let mut lo = peak;
    while lo > 0 && scores[lo - 1] <= scores[lo] {
        lo -= 1;
    }
    let mut hi = peak;
    while hi + 1 < scores.len() && scores[hi + 1] <= scores[hi] {
        hi += 1;
    }
    let second = scores[..lo].iter().chain(&scores[hi + 1..]).copied().fold(f64::NEG_INFINITY, f64::max);
    let confidence = if best <= 0.0 {
        0.0
    } else if second <= 0.0 {
        MAX_CONFIDENCE
    } else {
        (best / second).min(MAX_CONFIDENCE)
    };
    Some((peak, confidence))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Xoshiro256StarStar;

    fn direct_ncc(signal: &[f64], window: &[f64]) -> f64 {
        let n = signal.len() as f64;
        let ms = signal.iter().sum::<f64>() / n;
        let mw = window.iter().sum::<f64>() / n;
        let mut num = 0.0;
        let (mut ds, mut dw) = (0.0, 0.0);
        for (s, w) in signal.iter().zip(window) {
            num += (s - ms) * (w - mw);
            ds += (s - ms).powi(2);
            dw += (w - mw).powi(2);
        }
        num / (ds.sqrt() * dw.sqrt())
    }

    #[test]
    fn fft_scan_matches_direct() {
        let mut rng = Xoshiro256StarStar::seed_from_u64(1);
        let reference: Vec<f64> = (0..700).map(|_| rng.standard_normal() * 0.01 + 0.3).collect();
        let signal: Vec<f64> = (0..150).map(|_| rng.standard_normal()).collect();
        let fast = ncc_scan(&signal, &reference);
        assert_eq!(fast.len(), 551);
        for (o, f) in fast.iter().enumerate() {
            let d = direct_ncc(&signal, &reference[o..o + 150]);
            assert!((f - d).abs() < 1e-6, "offset {o}: {f} vs {d}");
        }
    }

    #[test]
    fn finds_embedded_copy() {
        let mut rng = Xoshiro256StarStar::seed_from_u64(2);
        let reference: Vec<f64> = (0..500).map(|_| rng.standard_normal()).collect();
        let signal: Vec<f64> = reference[123..223].iter().map(|v| 2.0 * v + 5.0).collect();
        let scores = ncc_scan(&signal, &reference);
        let (peak, conf) = peak_with_confidence(&scores).unwrap();
        assert_eq!(peak, 123);
        assert!((scores[123] - 1.0).abs() < 1e-9);
        assert!(conf > 1.5);
    }

    #[test]
    fn flat_signal_scores_zero() {
        let scores = ncc_scan(&[1.0; 10], &[0.5; 30]);
        assert!(scores.iter().all(|&s| s == 0.0));
        assert_eq!(peak_with_confidence(&scores).unwrap().1, 0.0);
    }
}
