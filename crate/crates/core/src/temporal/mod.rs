//! Temporal registration of video against code signals.
//!
//! Offsets are capture times: an offset `o` says video frame 0 was lit by
//! code sample `o`. Scores are zero-mean, unit-norm cross-correlations.

mod speed;

use std::fmt::Write as _;
use std::ops::Range;

use rayon::prelude::*;

pub use speed::{rho_grid, speed_scan, SpeedScanOptions, SpeedScanResult};

use crate::codegen::CodeBank;
use crate::correlate::{ncc_scan, peak_with_confidence};
use crate::decode::{bilateral_residual, BilateralParams};
use crate::error::{NciError, Result};
use crate::frames::{FrameSequence, Image};
use crate::io::{write_netpbm, BitDepth};

/// Peak-to-second-peak ratio below which a registration is inconclusive.
pub const DEFAULT_CONFIDENCE_THRESHOLD: f64 = 1.5;

#[derive(Debug, Clone, PartialEq)]
pub struct RegisterOptions {
    /// Correlate bilateral residuals instead of raw intensity.
    pub bilateral: Option<BilateralParams>,
    pub threshold: f64,
}

impl Default for RegisterOptions {
    fn default() -> Self {
        Self { bilateral: None, threshold: DEFAULT_CONFIDENCE_THRESHOLD }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Registration {
    pub offset: u64,
    pub confidence: f64,
    pub conclusive: bool,
    /// Score for every candidate offset in `search`.
    pub scores: Vec<f64>,
    pub search: Range<u64>,
}

impl Registration {
    pub fn peak_score(&self) -> f64 {
        self.scores[(self.offset - self.search.start) as usize]
    }
}

/// Spatial mean trace, optionally of the bilateral residual.
pub fn mean_trace(video: &FrameSequence, bilateral: Option<&BilateralParams>) -> Result<Vec<f64>> {
    Ok(match bilateral {
        Some(p) => bilateral_residual(video, p)?.spatial_mean(),
        None => video.spatial_mean(),
    })
}

fn registration_from(scores: Vec<f64>, search: Range<u64>, threshold: f64) -> Registration {
    let (peak, confidence) = peak_with_confidence(&scores).unwrap_or((0, 0.0));
    Registration { offset: search.start + peak as u64, confidence, conclusive: confidence >= threshold, scores, search }
}

fn scan_trace(trace: &[f64], bank: &CodeBank, source_id: usize, search: &Range<u64>) -> Result<Vec<f64>> {
    let code = bank.code_for_interval(search.start, search.end - 1 + trace.len() as u64, source_id)?;
    Ok(ncc_scan(trace, &code))
}

pub(crate) fn span_len(r: &Range<u64>) -> usize {
    (r.end.saturating_sub(r.start)) as usize
}

fn check_search(search: &Range<u64>) -> Result<()> {
    if search.is_empty() {
        return Err(NciError::invalid(format!("empty search range {}..{}", search.start, search.end)));
    }
    Ok(())
}

/// Matched-filter the spatially averaged video against every start offset
/// in `search`.
pub fn global_register(
    video: &FrameSequence,
    bank: &CodeBank,
    source_id: usize,
    search: Range<u64>,
    opts: &RegisterOptions,
) -> Result<Registration> {
    check_search(&search)?;
    if video.frames < 2 {
        return Err(NciError::invalid("registration needs at least 2 frames"));
    }
    let trace = mean_trace(video, opts.bilateral.as_ref())?;
    let scores = scan_trace(&trace, bank, source_id, &search)?;
    Ok(registration_from(scores, search, opts.threshold))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchOptions {
    pub patch_size: usize,
    /// Softmax temperature applied to patch confidences.
    pub temperature: f64,
    pub bilateral: Option<BilateralParams>,
    pub threshold: f64,
}

impl Default for PatchOptions {
    fn default() -> Self {
        Self { patch_size: 16, temperature: 0.25, bilateral: None, threshold: DEFAULT_CONFIDENCE_THRESHOLD }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchRegistration {
    pub registration: Registration,
    /// One weight per patch, on the patch grid (edge patches may be partial).
    pub weights: Image,
    pub patch_confidence: Vec<f64>,
}

/// Registration where each patch's correlation curve is weighted by a
/// softmax of its own peak confidence, so a few high-SNR patches can carry
/// a frame dominated by strong uncoded light.
pub fn patch_weighted_register(
    video: &FrameSequence,
    bank: &CodeBank,
    source_id: usize,
    search: Range<u64>,
    opts: &PatchOptions,
) -> Result<PatchRegistration> {
    check_search(&search)?;
    if opts.patch_size == 0 {
        return Err(NciError::invalid("patch size must be positive"));
    }
    if !(opts.temperature > 0.0) {
        return Err(NciError::invalid("softmax temperature must be positive"));
    }
    let work = match &opts.bilateral {
        Some(p) => bilateral_residual(video, p)?,
        None => video.clone(),
    };
    let ps = opts.patch_size;
    let (gw, gh) = (video.width.div_ceil(ps), video.height.div_ceil(ps));
    let code = bank.code_for_interval(search.start, search.end - 1 + video.frames as u64, source_id)?;

    let curves: Vec<(Vec<f64>, f64)> = (0..gw * gh)
        .into_par_iter()
        .map(|p| {
            let (px, py) = (p % gw, p / gw);
            let (x0, y0) = (px * ps, py * ps);
            let (x1, y1) = ((x0 + ps).min(video.width), (y0 + ps).min(video.height));
            let n = ((x1 - x0) * (y1 - y0) * video.channels) as f64;
            let trace: Vec<f64> = (0..video.frames)
                .map(|t| {
                    let f = work.frame(t);
                    let mut acc = 0.0;
                    for y in y0..y1 {
                        let row = (y * video.width) * video.channels;
                        for v in &f[row + x0 * video.channels..row + x1 * video.channels] {
                            acc += v;
                        }
                    }
                    acc / n
                })
                .collect();
            let scores = ncc_scan(&trace, &code);
            let conf = peak_with_confidence(&scores).map_or(0.0, |p| p.1);
            (scores, conf)
        })
        .collect();

    let confs: Vec<f64> = curves.iter().map(|c| c.1).collect();
    let top = confs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = confs.iter().map(|c| ((c - top) / opts.temperature).exp()).collect();
    let total: f64 = raw.iter().sum();
    let weights: Vec<f64> = raw.iter().map(|r| r / total).collect();

    let mut combined = vec![0.0; span_len(&search)];
    for ((scores, _), w) in curves.iter().zip(&weights) {
        for (c, s) in combined.iter_mut().zip(scores) {
            *c += w * s;
        }
    }
    Ok(PatchRegistration {
        registration: registration_from(combined, search, opts.threshold),
        weights: Image::new(gw, gh, 1, weights)?,
        patch_confidence: confs,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixOptions {
    pub col_window: usize,
    pub col_hop: usize,
    /// Correlate against the code played at this speed (capture frames per
    /// video frame).
    pub rho: f64,
    pub bilateral: Option<BilateralParams>,
}

impl Default for MatrixOptions {
    fn default() -> Self {
        Self { col_window: 90, col_hop: 15, rho: 1.0, bilateral: None }
    }
}

/// Column-wise correlation scores. Column `j` covers video frames
/// `[j * col_hop, j * col_hop + col_window)`; row `o` is the capture time
/// `offsets.start + o` of the column's first frame.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentMatrix {
    pub columns: Vec<Vec<f64>>,
    pub offsets: Range<u64>,
    pub col_window: usize,
    pub col_hop: usize,
    pub rho: f64,
}

/// Linear interpolation of `code` at fractional position `p`.
pub(crate) fn sample_at(code: &[f64], p: f64) -> f64 {
    let i = p.floor() as usize;
    let f = p - i as f64;
    if f == 0.0 || i + 1 >= code.len() {
        code[i.min(code.len() - 1)]
    } else {
        (1.0 - f) * code[i] + f * code[i + 1]
    }
}

/// Zero-mean, unit-norm correlation of `a` and `b` (0 for flat inputs).
pub(crate) fn ncc(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut num, mut da, mut db) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        num += (x - ma) * (y - mb);
        da += (x - ma) * (x - ma);
        db += (y - mb) * (y - mb);
    }
    if da <= 0.0 || db <= 0.0 {
        0.0
    } else {
        (num / (da.sqrt() * db.sqrt())).clamp(-1.0, 1.0)
    }
}

/// Scores of `trace` against `code` played at speed `rho` from every
/// integer start in `0..offsets`.
pub(crate) fn scan_resampled(trace: &[f64], code: &[f64], rho: f64, offsets: usize) -> Vec<f64> {
    if rho == 1.0 {
        return ncc_scan(trace, &code[..offsets - 1 + trace.len()]);
    }
    let mut window = vec![0.0; trace.len()];
    (0..offsets)
        .map(|o| {
            for (j, w) in window.iter_mut().enumerate() {
                *w = sample_at(code, o as f64 + rho * j as f64);
            }
            ncc(trace, &window)
        })
        .collect()
}

pub fn alignment_matrix(
    video: &FrameSequence,
    bank: &CodeBank,
    source_id: usize,
    offsets: Range<u64>,
    opts: &MatrixOptions,
) -> Result<AlignmentMatrix> {
    check_search(&offsets)?;
    let (win, hop) = (opts.col_window, opts.col_hop);
    if win < 2 || hop == 0 {
        return Err(NciError::invalid("column window must be at least 2 frames and hop positive"));
    }
    if win > video.frames {
        return Err(NciError::invalid(format!("column window {win} exceeds the {}-frame video", video.frames)));
    }
    if !(opts.rho > 0.0) || !opts.rho.is_finite() {
        return Err(NciError::invalid(format!("speed factor must be positive, got {}", opts.rho)));
    }
    let trace = mean_trace(video, opts.bilateral.as_ref())?;
    let span = (opts.rho * (win - 1) as f64).ceil() as u64 + 1;
    let code = bank.code_for_interval(offsets.start, offsets.end - 1 + span, source_id)?;
    let count = (video.frames - win) / hop + 1;
    let columns = (0..count)
        .into_par_iter()
        .map(|j| scan_resampled(&trace[j * hop..j * hop + win], &code, opts.rho, span_len(&offsets)))
        .collect();
    Ok(AlignmentMatrix { columns, offsets, col_window: win, col_hop: hop, rho: opts.rho })
}

impl AlignmentMatrix {
    pub fn num_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn column_start(&self, j: usize) -> usize {
        j * self.col_hop
    }

    /// Rows are offsets, columns are video windows.
    pub fn to_csv(&self) -> String {
        let mut s = format!("# col_window={}\n# col_hop={}\n# rho={}\noffset", self.col_window, self.col_hop, self.rho);
        for j in 0..self.num_columns() {
            let _ = write!(s, ",f{}", self.column_start(j));
        }
        s.push('\n');
        for (o, offset) in self.offsets.clone().enumerate() {
            let _ = write!(s, "{offset}");
            for col in &self.columns {
                let _ = write!(s, ",{}", col[o]);
            }
            s.push('\n');
        }
        s
    }

    /// 8-bit heatmap, one pixel per score, positive scores scaled to white.
    pub fn to_pgm(&self) -> Result<Vec<u8>> {
        let (w, h) = (self.num_columns(), span_len(&self.offsets));
        let img = Image::from_fn(w, h, 1, |x, y, _| self.columns[x][y].clamp(0.0, 1.0));
        write_netpbm(&img, BitDepth::Eight)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveOptions {
    /// Lag changes larger than this many frames are discontinuities.
    pub jump_threshold: f64,
    pub confidence_floor: f64,
}

impl Default for CurveOptions {
    fn default() -> Self {
        Self { jump_threshold: 2.0, confidence_floor: DEFAULT_CONFIDENCE_THRESHOLD }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub column: usize,
    /// First video frame of the column.
    pub frame: usize,
    /// Best capture time for that frame.
    pub capture: u64,
    pub score: f64,
    pub confidence: f64,
    pub confident: bool,
}

impl CurvePoint {
    pub fn lag(&self) -> i64 {
        self.capture as i64 - self.frame as i64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Discontinuity {
    /// First confident column after the jump.
    pub column: usize,
    pub frame: usize,
    /// Change of capture-minus-frame lag, in frames (positive: skipped forward).
    pub jump: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentCurve {
    pub points: Vec<CurvePoint>,
    pub discontinuities: Vec<Discontinuity>,
    pub rho: f64,
}

/// Per-column argmax and confidence. A discontinuity is reported between
/// consecutive confident columns whose predicted capture times disagree by
/// more than `jump_threshold` frames.
pub fn extract_alignment_curve(matrix: &AlignmentMatrix, opts: &CurveOptions) -> Result<AlignmentCurve> {
    if matrix.columns.is_empty() || matrix.offsets.is_empty() {
        return Err(NciError::invalid("alignment matrix is empty"));
    }
    let points: Vec<CurvePoint> = matrix
        .columns
        .iter()
        .enumerate()
        .map(|(j, col)| {
            let (peak, confidence) = peak_with_confidence(col).unwrap_or((0, 0.0));
            CurvePoint {
                column: j,
                frame: matrix.column_start(j),
                capture: matrix.offsets.start + peak as u64,
                score: col[peak],
                confidence,
                confident: confidence >= opts.confidence_floor,
            }
        })
        .collect();
    let mut discontinuities = Vec::new();
    let mut prev: Option<&CurvePoint> = None;
    for p in points.iter().filter(|p| p.confident) {
        if let Some(q) = prev {
            let expected = q.capture as f64 + matrix.rho * (p.frame - q.frame) as f64;
            let jump = p.capture as f64 - expected;
            if jump.abs() > opts.jump_threshold {
                discontinuities.push(Discontinuity { column: p.column, frame: p.frame, jump: jump.round() as i64 });
            }
        }
        prev = Some(p);
    }
    Ok(AlignmentCurve { points, discontinuities, rho: matrix.rho })
}

impl AlignmentCurve {
    /// Least-squares slope of capture time against video frame over
    /// confident points, pooled within the runs between discontinuities so
    /// a jump does not bias it. `None` without two points in some run.
    pub fn slope(&self) -> Option<f64> {
        let mut runs: Vec<Vec<(f64, f64)>> = vec![Vec::new()];
        for p in self.points.iter().filter(|p| p.confident) {
            if self.discontinuities.iter().any(|d| d.column == p.column) {
                runs.push(Vec::new());
            }
            runs.last_mut().unwrap().push((p.frame as f64, p.capture as f64));
        }
        let (mut sxy, mut sxx) = (0.0, 0.0);
        for run in runs.iter().filter(|r| r.len() >= 2) {
            let n = run.len() as f64;
            let mx = run.iter().map(|p| p.0).sum::<f64>() / n;
            let my = run.iter().map(|p| p.1).sum::<f64>() / n;
            sxy += run.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>();
            sxx += run.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
        }
        (sxx > 0.0).then(|| sxy / sxx)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("# column frame capture lag score confidence confident\n");
        for p in &self.points {
            let _ = writeln!(
                s,
                "{} {} {} {} {} {} {}",
                p.column,
                p.frame,
                p.capture,
                p.lag(),
                p.score,
                p.confidence,
                p.confident as u8
            );
        }
        for d in &self.discontinuities {
            let _ = writeln!(s, "discontinuity column={} frame={} jump={}", d.column, d.frame, d.jump);
        }
        s
    }
}

#[cfg(test)]
mod tests;
