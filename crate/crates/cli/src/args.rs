use std::ops::Range;
use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

/// Noise-coded illumination: code generation, simulation, tampering and
/// forensic analysis of coded video.
///
/// Videos are read and written as `.y4m` or FSEQ (any other extension).
/// Every run writes a JSON manifest next to its first output (or to
/// `--manifest`); `nci replay` re-runs one and checks the output hashes.
///
/// Exit status: 0 success, 2 inconclusive analysis, 1 error.
#[derive(Debug, Parser)]
#[command(name = "nci", version)]
pub struct Cli {
    /// Worker threads (0 = one per core). Results do not depend on it.
    #[arg(long, global = true, env = "NCI_THREADS", default_value_t = 0)]
    pub threads: usize,

    /// Master seed for every random draw.
    #[arg(long, global = true, env = "NCI_SEED", default_value_t = 0)]
    pub seed: u64,

    /// Frame rate assumed for FSEQ input (the container does not store it).
    #[arg(long, global = true, env = "NCI_FPS", default_value_t = 30.0)]
    pub fps: f64,

    /// Where to write the run manifest.
    #[arg(long, global = true, env = "NCI_MANIFEST")]
    pub manifest: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Generate a code bank and write it as CSV.
    GenCode(GenCodeArgs),
    /// Render coded video from a scene directory.
    Render(RenderArgs),
    /// Apply a manipulation and write its edit log.
    Tamper(TamperArgs),
    /// Decode a code image.
    Decode(DecodeArgs),
    /// Register a video against a code (global or patch-weighted).
    Align(AlignArgs),
    /// Alignment matrix and alignment curve with discontinuities.
    AlignMatrix(MatrixArgs),
    /// Joint search over playback speed and offset.
    SpeedScan(SpeedArgs),
    /// Spatial manipulation mask for one frame.
    Mask(MaskArgs),
    /// Fit read and shot noise from flat-field sequences.
    FitNoise(FitNoiseArgs),
    /// Predicted decode SNR over a parameter grid.
    PredictSnr(PredictSnrArgs),
    /// Run the built-in property suite.
    Selftest,
    /// Re-run a manifest and compare output hashes.
    Replay(ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GenCode(_) => "gen-code",
            Command::Render(_) => "render",
            Command::Tamper(_) => "tamper",
            Command::Decode(_) => "decode",
            Command::Align(_) => "align",
            Command::AlignMatrix(_) => "align-matrix",
            Command::SpeedScan(_) => "speed-scan",
            Command::Mask(_) => "mask",
            Command::FitNoise(_) => "fit-noise",
            Command::PredictSnr(_) => "predict-snr",
            Command::Selftest => "selftest",
            Command::Replay(_) => "replay",
        }
    }
}

pub fn parse_range(s: &str) -> Result<Range<u64>, String> {
    let (a, b) = s.split_once("..").ok_or_else(|| format!("expected START..END, got '{s}'"))?;
    let a: u64 = a.trim().parse().map_err(|_| format!("bad range start in '{s}'"))?;
    let b: u64 = b.trim().parse().map_err(|_| format!("bad range end in '{s}'"))?;
    if b <= a {
        return Err(format!("range '{s}' is empty"));
    }
    Ok(a..b)
}

pub fn parse_positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("expected a positive number, got '{s}'")),
    }
}

pub fn parse_non_negative(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("expected a non-negative number, got '{s}'")),
    }
}

fn parse_rect(s: &str) -> Result<[usize; 4], String> {
    let v: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse().map_err(|_| format!("bad rectangle '{s}', expected X,Y,W,H")))
        .collect::<Result<_, _>>()?;
    match v.as_slice() {
        [x, y, w, h] if *w > 0 && *h > 0 => Ok([*x, *y, *w, *h]),
        _ => Err(format!("bad rectangle '{s}', expected X,Y,W,H with W,H > 0")),
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct GenCodeArgs {
    /// Frames to cover; rounded up to whole segments.
    #[arg(long)]
    pub frames: usize,
    #[arg(long, default_value_t = 1)]
    pub num_codes: usize,
    #[arg(long, default_value_t = 256)]
    pub segment_len: usize,
    #[arg(long, default_value_t = 2.0)]
    pub band_lo: f64,
    #[arg(long, default_value_t = 9.0)]
    pub band_hi: f64,
    /// First segment index (capture time = segment * segment_len).
    #[arg(long, default_value_t = 0)]
    pub first_segment: u64,
    /// Target total rms of the codes.
    #[arg(long, value_parser = parse_positive, conflicts_with = "amplitude_scale")]
    pub rms: Option<f64>,
    /// Per-bin amplitude scale `m`.
    #[arg(long, value_parser = parse_non_negative)]
    pub amplitude_scale: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct NoiseArgs {
    /// Read noise std `a`.
    #[arg(long, value_parser = parse_non_negative, default_value_t = 0.002)]
    pub read_std: f64,
    /// Shot noise coefficient `b` in `a + b sqrt(L)`.
    #[arg(long, value_parser = parse_non_negative, default_value_t = 0.01)]
    pub photon_coeff: f64,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct RenderArgs {
    /// Scene directory containing scene.txt.
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long)]
    pub codes: PathBuf,
    /// Capture time of the first rendered frame.
    #[arg(long, default_value_t = 0)]
    pub t0: u64,
    #[arg(long)]
    pub frames: usize,
    #[command(flatten)]
    pub noise: NoiseArgs,
    /// Output bit depth (0 = no quantization).
    #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u32).range(0..=16))]
    pub bits: u32,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct TamperArgs {
    #[arg(long, global = true)]
    pub input: Option<PathBuf>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Edit log path (default: OUT.editlog).
    #[arg(long, global = true)]
    pub log: Option<PathBuf>,
    #[command(subcommand)]
    pub op: TamperOp,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TamperOp {
    /// Remove frames, hiding the seam with a cross-fade.
    Cut {
        #[arg(long)]
        at: usize,
        #[arg(long)]
        remove: usize,
        #[arg(long, default_value_t = nci_core::tamper::DEFAULT_CROSSFADE)]
        crossfade: usize,
    },
    /// Concatenate frame ranges, e.g. `400..600,0..200`.
    Splice {
        #[arg(long)]
        segments: String,
    },
    /// Resample playback speed (rho capture frames per output frame).
    Retime {
        #[arg(long, value_parser = parse_positive)]
        rho: f64,
        #[arg(long, value_parser = parse_range)]
        range: Option<Range<u64>>,
    },
    /// Paste a region: `fill:V[,V..]`, `still:F,X,Y`, `moving:X,Y` or
    /// `image:PATH` (NetPBM).
    Composite {
        #[arg(long, value_parser = parse_rect)]
        rect: [usize; 4],
        #[arg(long, value_parser = parse_range)]
        frames: Range<u64>,
        #[arg(long)]
        patch: String,
    },
    /// Re-apply an edit log to the original video.
    Replay {
        #[arg(long)]
        edits: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct VideoArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Code bank CSV.
    #[arg(long)]
    pub codes: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub source: usize,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct WindowArgs {
    /// Capture time of video frame 0 (from `align`).
    #[arg(long, default_value_t = 0)]
    pub t0: u64,
    /// Window centre frame (default: middle of the video).
    #[arg(long)]
    pub center: Option<usize>,
    #[arg(long, default_value_t = 450)]
    pub window: usize,
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u64).range(1..))]
    pub downsample: u64,
    /// Gaussian falloff for transient filtering; off when absent.
    #[arg(long, value_parser = parse_positive)]
    pub transient_sigma: Option<f64>,
    /// Correlate bilateral residuals.
    #[arg(long)]
    pub bilateral: bool,
    #[arg(long, default_value_t = 0.05, value_parser = parse_positive)]
    pub bilateral_sigma: f64,
    #[arg(long, default_value_t = 15)]
    pub bilateral_radius: usize,
    /// Remove global translation before decoding.
    #[arg(long)]
    pub stabilize: bool,
    /// Undo a `v^(1/gamma)` encoding.
    #[arg(long, value_parser = parse_positive)]
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct DecodeArgs {
    #[command(flatten)]
    pub video: VideoArgs,
    #[command(flatten)]
    pub window: WindowArgs,
    /// 16-bit PGM/PPM; a `.txt` sidecar is written next to it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct AlignArgs {
    #[command(flatten)]
    pub video: VideoArgs,
    /// Candidate offsets START..END (default: the whole code bank).
    #[arg(long, value_parser = parse_range)]
    pub search: Option<Range<u64>>,
    /// Patch-weighted registration.
    #[arg(long)]
    pub patch: bool,
    #[arg(long, default_value_t = 16)]
    pub patch_size: usize,
    #[arg(long, default_value_t = 0.25, value_parser = parse_positive)]
    pub temperature: f64,
    #[arg(long)]
    pub bilateral: bool,
    #[arg(long, default_value_t = nci_core::temporal::DEFAULT_CONFIDENCE_THRESHOLD)]
    pub threshold: f64,
    /// Write `offset,score` for every candidate.
    #[arg(long)]
    pub scores: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[command(group(ArgGroup::new("outputs").required(true).multiple(true).args(["csv", "pgm", "curve"])))]
pub struct MatrixArgs {
    #[command(flatten)]
    pub video: VideoArgs,
    #[arg(long, value_parser = parse_range)]
    pub search: Option<Range<u64>>,
    #[arg(long, default_value_t = 90)]
    pub col_window: usize,
    #[arg(long, default_value_t = 15)]
    pub col_hop: usize,
    #[arg(long, default_value_t = 1.0, value_parser = parse_positive)]
    pub rho: f64,
    #[arg(long)]
    pub bilateral: bool,
    #[arg(long, default_value_t = 2.0)]
    pub jump_threshold: f64,
    #[arg(long, default_value_t = nci_core::temporal::DEFAULT_CONFIDENCE_THRESHOLD)]
    pub confidence_floor: f64,
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub pgm: Option<PathBuf>,
    #[arg(long)]
    pub curve: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SpeedArgs {
    #[command(flatten)]
    pub video: VideoArgs,
    #[arg(long, value_parser = parse_range)]
    pub search: Option<Range<u64>>,
    #[arg(long, default_value_t = 0.5, value_parser = parse_positive)]
    pub rho_min: f64,
    #[arg(long, default_value_t = 2.0, value_parser = parse_positive)]
    pub rho_max: f64,
    #[arg(long, default_value_t = 1.01)]
    pub step: f64,
    #[arg(long, default_value_t = 6)]
    pub refine_steps: usize,
    /// Spectral peaks re-scored in time.
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..))]
    pub candidates: u64,
    #[arg(long)]
    pub bilateral: bool,
    #[arg(long, default_value_t = nci_core::temporal::DEFAULT_CONFIDENCE_THRESHOLD)]
    pub threshold: f64,
    /// Write `rho,spectral_score` for the grid.
    #[arg(long)]
    pub spectrum: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[command(group(ArgGroup::new("floor_source").required(true).args(["floor", "noise_file", "read_std"])))]
pub struct MaskArgs {
    #[command(flatten)]
    pub video: VideoArgs,
    #[command(flatten)]
    pub window: WindowArgs,
    /// Frame to test (default: window centre).
    #[arg(long)]
    pub frame: Option<usize>,
    /// Fixed code floor.
    #[arg(long, value_parser = parse_non_negative)]
    pub floor: Option<f64>,
    /// Noise model file from `fit-noise`.
    #[arg(long)]
    pub noise_file: Option<PathBuf>,
    #[arg(long, value_parser = parse_non_negative, requires = "photon_coeff")]
    pub read_std: Option<f64>,
    #[arg(long, value_parser = parse_non_negative, requires = "read_std")]
    pub photon_coeff: Option<f64>,
    /// Floor in noise standard deviations.
    #[arg(long, default_value_t = nci_core::spatial::DEFAULT_FLOOR_SIGMAS)]
    pub sigmas: f64,
    #[arg(long, default_value_t = 0.25)]
    pub bright_thresh: f64,
    #[arg(long, default_value_t = 0.5)]
    pub min_weight: f64,
    /// PBM mask.
    #[arg(long)]
    pub out: PathBuf,
    /// 16-bit PGM of the score.
    #[arg(long)]
    pub score: Option<PathBuf>,
    /// PPM montage: frame, code images, mask.
    #[arg(long)]
    pub montage: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct FitNoiseArgs {
    /// Flat-field video; repeat for several brightness levels.
    #[arg(long, required = true)]
    pub flat: Vec<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct PredictSnrArgs {
    #[command(flatten)]
    pub noise: NoiseArgs,
    /// Brightness values `L`.
    #[arg(long, value_parser = parse_positive, value_delimiter = ',', default_values_t = [0.1, 0.3, 0.6])]
    pub brightness: Vec<f64>,
    /// Code rms times transfer `rms(c) r`.
    #[arg(long, value_parser = parse_positive, value_delimiter = ',', default_values_t = [0.002, 0.005])]
    pub code_rms: Vec<f64>,
    #[arg(long, value_parser = parse_positive, value_delimiter = ',', default_values_t = [150.0, 450.0])]
    pub window: Vec<f64>,
    /// Samples averaged per pixel (`downsample^2`).
    #[arg(long, value_parser = parse_positive, value_delimiter = ',', default_values_t = [1.0, 4.0])]
    pub m: Vec<f64>,
    /// CSV table.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    /// Manifest written by an earlier run.
    #[arg(value_name = "MANIFEST")]
    pub path: PathBuf,
}
