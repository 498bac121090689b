//! Band-limited, zero-mean illumination code signals.
//!
//! Codes are generated one segment of `segment_len` frames at a time. For a
//! segment, every in-band DFT bin draws an amplitude and a phase from its own
//! seeded stream, *then* bins are dealt to codes in shuffled round-robin
//! order. Because the coefficient draws never depend on the number of codes,
//! the elementwise sum of all codes is the same signal for every `k`.
//!
//! Synthesis is done in 2^-44 fixed point: each bin's contribution to a
//! sample is rounded to an integer multiple of the quantum and the integer
//! contributions are summed exactly. Every partial sum is representable in an
//! `f64`, so summing codes in any order reproduces the single-code signal
//! bit for bit.

mod csv;
mod flicker;

use std::f64::consts::PI;
use std::ops::Range;

use rayon::prelude::*;

use crate::error::{NciError, Result};
use crate::rng::{mix_seed, Xoshiro256StarStar};

pub use csv::{read_code_csv, write_code_csv};
pub use flicker::{FlickerTable, DEFAULT_FLICKER_KNOTS};

const FIXED_POINT_BITS: i32 = 44;
/// Bound on the summed amplitude of a segment that keeps every fixed-point
/// partial sum below 2^52.
const MAX_TOTAL_AMPLITUDE: f64 = 256.0;
const BLOCK_SEED_TAG: u64 = 0x0B10_C5EE_D000_0001;

#[derive(Debug, Clone, PartialEq)]
pub struct CodeSpec {
    pub fps: f64,
    pub segment_len: usize,
    pub band_lo: f64,
    pub band_hi: f64,
    pub num_codes: usize,
    pub master_seed: u64,
    pub amplitude_scale: f64,
    pub flicker: FlickerTable,
}

impl Default for CodeSpec {
    fn default() -> Self {
        Self {
            fps: 30.0,
            segment_len: 256,
            band_lo: 2.0,
            band_hi: 9.0,
            num_codes: 1,
            master_seed: 0,
            amplitude_scale: 0.002,
            flicker: FlickerTable::default(),
        }
    }
}

/// One in-band DFT coefficient of a segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinCoefficient {
    pub bin: usize,
    pub freq: f64,
    pub amplitude: f64,
    pub phase: f64,
}

/// Which code each in-band bin of a segment was dealt to.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentAssignment {
    pub segment_index: u64,
    /// `(bin, code)` in ascending bin order.
    pub bins: Vec<(usize, usize)>,
}

/// All `k` codes over one segment.
#[derive(Debug, Clone, PartialEq)]
pub struct CodeSegment {
    pub index: u64,
    /// `codes[i]` holds `segment_len` samples of code `i`.
    pub codes: Vec<Vec<f64>>,
    pub assignment: SegmentAssignment,
}

impl CodeSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(NciError::invalid(format!("fps must be positive, got {}", self.fps)));
        }
        if !(self.band_lo > 0.0 && self.band_lo < self.band_hi && self.band_hi < self.fps / 2.0) {
            return Err(NciError::invalid(format!(
                "passband must satisfy 0 < band_lo < band_hi < fps/2, got {}..{} at {} fps",
                self.band_lo, self.band_hi, self.fps
            )));
        }
        if self.num_codes == 0 {
            return Err(NciError::invalid("num_codes must be at least 1"));
        }
        if self.segment_len < 2 {
            return Err(NciError::invalid("segment_len must be at least 2"));
        }
        if !(self.amplitude_scale.is_finite() && self.amplitude_scale >= 0.0) {
            return Err(NciError::invalid("amplitude_scale must be finite and non-negative"));
        }
        if !self.flicker.covers(self.band_lo) || !self.flicker.covers(self.band_hi) {
            return Err(NciError::Config(format!(
                "flicker table does not cover the passband {}..{} Hz",
                self.band_lo, self.band_hi
            )));
        }
        let bins = self.in_band_bins();
        if bins.len() < self.num_codes {
            return Err(NciError::Config(format!(
                "{} in-band frequency bins cannot host {} codes; increase segment_len",
                bins.len(),
                self.num_codes
            )));
        }
        let mut total = 0.0;
        for &m in &bins {
            total += 1.5 * self.flicker_weight(self.bin_freq(m))?;
        }
        if total >= MAX_TOTAL_AMPLITUDE {
            return Err(NciError::Config(format!(
                "amplitude_scale {} is far outside the relative-brightness range",
                self.amplitude_scale
            )));
        }
        Ok(())
    }

    pub fn bin_freq(&self, bin: usize) -> f64 {
        bin as f64 * self.fps / self.segment_len as f64
    }

    /// DFT bins whose frequency lies in `[band_lo, band_hi]`, excluding DC
    /// and Nyquist.
    pub fn in_band_bins(&self) -> Vec<usize> {
        let n = self.segment_len as f64;
        let lo = (self.band_lo * n / self.fps - 1e-9).ceil().max(1.0) as usize;
        let hi = (self.band_hi * n / self.fps + 1e-9).floor() as usize;
        let max_bin = (self.segment_len - 1) / 2;
        (lo..=hi.min(max_bin)).collect()
    }

    /// Mean amplitude for a frequency: `amplitude_scale / sensitivity(freq)`.
    pub fn flicker_weight(&self, freq: f64) -> Result<f64> {
        if !(freq >= self.band_lo && freq <= self.band_hi) {
            return Err(NciError::invalid(format!(
                "frequency {freq} Hz outside passband {}..{} Hz",
                self.band_lo, self.band_hi
            )));
        }
        Ok(self.amplitude_scale / self.flicker.sensitivity(freq)?)
    }

    /// Expected RMS of the sum of all codes over one segment. Amplitudes are
    /// uniform on `[0.5 m, 1.5 m]`, so `E[A^2] = 13 m^2 / 12`, and each
    /// sinusoid contributes `A^2 / 2` to the mean square.
    pub fn expected_total_rms(&self) -> Result<f64> {
        let mut ms = 0.0;
        for m in self.in_band_bins() {
            let w = self.flicker_weight(self.bin_freq(m))?;
            ms += 13.0 * w * w / 24.0;
        }
        Ok(ms.sqrt())
    }

    /// The `amplitude_scale` whose expected total RMS equals `target_rms`.
    pub fn amplitude_scale_for_rms(&self, target_rms: f64) -> Result<f64> {
        let unit = CodeSpec { amplitude_scale: 1.0, ..self.clone() };
        let rms = unit.expected_total_rms()?;
        if rms == 0.0 {
            return Err(NciError::Config("passband holds no bins".into()));
        }
        Ok(target_rms / rms)
    }

    /// Amplitude and phase for every in-band bin of a segment. Each bin has
    /// its own stream seeded by `(master_seed, segment, bin)`; the amplitude
    /// is drawn first, then the phase.
    pub fn draw_coefficients(&self, segment_index: u64) -> Result<Vec<BinCoefficient>> {
        self.in_band_bins()
            .into_iter()
            .map(|bin| {
                let freq = self.bin_freq(bin);
                let mean = self.flicker_weight(freq)?;
                let mut rng =
                    Xoshiro256StarStar::seed_from_u64(mix_seed(&[self.master_seed, segment_index, bin as u64]));
                let amplitude = rng.uniform(0.5 * mean, 1.5 * mean);
                let phase = rng.uniform(0.0, 2.0 * PI);
                Ok(BinCoefficient { bin, freq, amplitude, phase })
            })
            .collect()
    }

    /// Deal in-band bins to codes: bins are taken in ascending order in
    /// blocks of `k`, and each block's code order is a Fisher-Yates shuffle
    /// seeded by `(master_seed, segment, tag, block)`.
    pub fn assign_bins(&self, segment_index: u64) -> SegmentAssignment {
        let k = self.num_codes;
        let bins = self.in_band_bins();
        let mut out = Vec::with_capacity(bins.len());
        for (block, chunk) in bins.chunks(k).enumerate() {
            let mut order: Vec<usize> = (0..k).collect();
            let mut rng = Xoshiro256StarStar::seed_from_u64(mix_seed(&[
                self.master_seed,
                segment_index,
                BLOCK_SEED_TAG,
                block as u64,
            ]));
            rng.shuffle(&mut order);
            out.extend(chunk.iter().zip(order).map(|(&bin, code)| (bin, code)));
        }
        SegmentAssignment { segment_index, bins: out }
    }
}

fn to_fixed(v: f64) -> i64 {
    (v * (2f64).powi(FIXED_POINT_BITS)).round() as i64
}

fn from_fixed(v: i64) -> f64 {
    v as f64 * (2f64).powi(-FIXED_POINT_BITS)
}

/// Generate all `k` codes for one segment.
pub fn sample_segment(spec: &CodeSpec, segment_index: i64) -> Result<CodeSegment> {
    if segment_index < 0 {
        return Err(NciError::invalid(format!("segment index {segment_index} is negative")));
    }
    spec.validate()?;
    let seg = segment_index as u64;
    let coeffs = spec.draw_coefficients(seg)?;
    let assignment = spec.assign_bins(seg);
    let n = spec.segment_len;
    let mut acc = vec![vec![0i64; n]; spec.num_codes];
    for (coef, &(bin, code)) in coeffs.iter().zip(&assignment.bins) {
        debug_assert_eq!(coef.bin, bin);
        let row = &mut acc[code];
        for (t, slot) in row.iter_mut().enumerate() {
            // Reduce the angle index modulo n before scaling.
            let k = (bin * t) % n;
            let angle = 2.0 * PI * k as f64 / n as f64 + coef.phase;
            *slot += to_fixed(coef.amplitude * angle.cos());
        }
    }
    let codes = acc.into_iter().map(|row| row.into_iter().map(from_fixed).collect()).collect();
    Ok(CodeSegment { index: seg, codes, assignment })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CodeSignal {
    pub samples: Vec<f64>,
    pub fps: f64,
    pub source_id: usize,
    pub segments: Range<u64>,
}

impl CodeSignal {
    pub fn rms(&self) -> f64 {
        rms(&self.samples)
    }
}

pub fn rms(samples: &[f64]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    (samples.iter().map(|v| v * v).sum::<f64>() / samples.len() as f64).sqrt()
}

/// `k` codes over a contiguous run of segments.
#[derive(Debug, Clone, PartialEq)]
pub struct CodeBank {
    spec: CodeSpec,
    codes: Vec<CodeSignal>,
    assignment_log: Vec<SegmentAssignment>,
}

impl CodeBank {
    pub fn generate(spec: CodeSpec, segments: Range<u64>) -> Result<Self> {
        spec.validate()?;
        if segments.is_empty() {
            return Err(NciError::invalid("segment range is empty"));
        }
        let segs: Vec<CodeSegment> =
            segments.clone().into_par_iter().map(|s| sample_segment(&spec, s as i64)).collect::<Result<_>>()?;
        let mut codes: Vec<CodeSignal> = (0..spec.num_codes)
            .map(|i| CodeSignal {
                samples: Vec::with_capacity(segs.len() * spec.segment_len),
                fps: spec.fps,
                source_id: i,
                segments: segments.clone(),
            })
            .collect();
        let mut assignment_log = Vec::with_capacity(segs.len());
        for seg in segs {
            for (code, samples) in codes.iter_mut().zip(seg.codes) {
                code.samples.extend(samples);
            }
            assignment_log.push(seg.assignment);
        }
        Ok(Self { spec, codes, assignment_log })
    }

    /// Enough segments to cover frames `[0, frames)`.
    pub fn covering(spec: CodeSpec, frames: usize) -> Result<Self> {
        let n = spec.segment_len.max(1);
        let count = frames.div_ceil(n).max(1) as u64;
        Self::generate(spec, 0..count)
    }

    /// Assemble a bank from stored samples, e.g. a parsed CSV file.
    pub fn from_samples(spec: CodeSpec, first_segment: u64, samples: Vec<Vec<f64>>) -> Result<Self> {
        spec.validate()?;
        if samples.len() != spec.num_codes {
            return Err(NciError::invalid(format!("expected {} codes, got {}", spec.num_codes, samples.len())));
        }
        let len = samples[0].len();
        if len == 0 || !len.is_multiple_of(spec.segment_len) || samples.iter().any(|s| s.len() != len) {
            return Err(NciError::invalid(format!(
                "code length {len} is not a whole number of {}-frame segments",
                spec.segment_len
            )));
        }
        let count = (len / spec.segment_len) as u64;
        let segments = first_segment..first_segment + count;
        let assignment_log = segments.clone().map(|s| spec.assign_bins(s)).collect();
        let codes = samples
            .into_iter()
            .enumerate()
            .map(|(i, s)| CodeSignal { samples: s, fps: spec.fps, source_id: i, segments: segments.clone() })
            .collect();
        Ok(Self { spec, codes, assignment_log })
    }

    pub fn spec(&self) -> &CodeSpec {
        &self.spec
    }

    pub fn num_codes(&self) -> usize {
        self.codes.len()
    }

    pub fn codes(&self) -> &[CodeSignal] {
        &self.codes
    }

    pub fn code(&self, source_id: usize) -> Option<&CodeSignal> {
        self.codes.get(source_id)
    }

    pub fn assignment_log(&self) -> &[SegmentAssignment] {
        &self.assignment_log
    }

    pub fn segments(&self) -> Range<u64> {
        self.codes[0].segments.clone()
    }

    /// Absolute frame range held in memory.
    pub fn frame_range(&self) -> Range<u64> {
        let n = self.spec.segment_len as u64;
        let s = self.segments();
        s.start * n..s.end * n
    }

    /// Samples of one code over absolute frames `[t0, t1)`. Segments outside
    /// the stored range are generated on demand.
    pub fn code_for_interval(&self, t0: u64, t1: u64, source_id: usize) -> Result<Vec<f64>> {
        if t1 <= t0 {
            return Err(NciError::invalid(format!("empty interval {t0}..{t1}")));
        }
        if source_id >= self.num_codes() {
            return Err(NciError::invalid(format!(
                "source id {source_id} out of range for {} codes",
                self.num_codes()
            )));
        }
        let n = self.spec.segment_len as u64;
        let stored = self.segments();
        let first = t0 / n;
        let last = (t1 - 1) / n;
        let mut out = Vec::with_capacity((t1 - t0) as usize);
        for s in first..=last {
            let lo = if s == first { (t0 - s * n) as usize } else { 0 };
            let hi = if s == last { (t1 - s * n) as usize } else { n as usize };
            if stored.contains(&s) {
                let base = ((s - stored.start) * n) as usize;
                out.extend_from_slice(&self.codes[source_id].samples[base + lo..base + hi]);
            } else {
                let seg = sample_segment(&self.spec, s as i64)?;
                out.extend_from_slice(&seg.codes[source_id][lo..hi]);
            }
        }
        Ok(out)
    }
}
