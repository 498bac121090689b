use std::fmt::Write as _;
use std::ops::Range;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use nci_core::codegen::{read_code_csv, rms, write_code_csv, CodeBank, CodeSpec};
use nci_core::decode::{decode, export_code_image, AnalysisWindow, BilateralParams, CodeImage, DecodeOptions};
use nci_core::io::{read_fseq, read_netpbm, read_y4m, write_fseq, write_netpbm, write_pbm, write_y4m, BitDepth};
use nci_core::simulate::{fit_noise_from_flats, parse_scene, render, NoiseModel, NoiseParams, SCENE_FILE_NAME};
use nci_core::spatial::{manipulation_mask, side_by_side, CodeFloor, MaskOptions};
use nci_core::tamper::{self, EditLog, Patch, Rect};
use nci_core::temporal::{
    alignment_matrix, extract_alignment_curve, global_register, patch_weighted_register, speed_scan, CurveOptions,
    MatrixOptions, PatchOptions, RegisterOptions, SpeedScanOptions,
};
use nci_core::{selftest, snr, FrameSequence, NciError};

use crate::args::*;
use crate::manifest::{sha256_hex, Io};

/// Settings shared by every command.
#[derive(Debug, Clone, Copy)]
pub struct RunContext {
    pub seed: u64,
    pub fps: f64,
}

#[derive(Debug, Default)]
pub struct Report {
    /// Lines printed before the summary.
    pub lines: Vec<String>,
    pub summary: Vec<(String, String)>,
    pub inconclusive: bool,
    /// Completed, but the result is a failure (exit 1).
    pub failed: bool,
}

impl Report {
    fn kv(&mut self, key: &str, value: impl ToString) {
        self.summary.push((key.to_string(), value.to_string()));
    }

    pub fn summary_line(&self) -> String {
        self.summary.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(" ")
    }
}

fn is_y4m(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("y4m"))
}

fn read_video(io: &mut Io, path: &Path, fps: f64) -> anyhow::Result<FrameSequence> {
    let bytes = io.read(path)?;
    let v = if is_y4m(path) { read_y4m(&bytes) } else { read_fseq(&bytes, fps) };
    v.with_context(|| format!("reading {}", path.display()))
}

fn write_video(io: &mut Io, path: &Path, video: &FrameSequence) -> anyhow::Result<()> {
    let bytes = if is_y4m(path) { write_y4m(video)? } else { write_fseq(video) };
    io.write(path, &bytes)
}

fn read_bank(io: &mut Io, path: &Path) -> anyhow::Result<CodeBank> {
    let bytes = io.read(path)?;
    read_code_csv(&bytes[..]).with_context(|| format!("reading {}", path.display()))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn usize_range(r: &Range<u64>) -> Range<usize> {
    r.start as usize..r.end as usize
}

pub fn run(cmd: &Command, ctx: RunContext, io: &mut Io) -> anyhow::Result<Report> {
    match cmd {
        Command::GenCode(a) => gen_code(a, ctx, io),
        Command::Render(a) => render_cmd(a, ctx, io),
        Command::Tamper(a) => tamper_cmd(a, ctx, io),
        Command::Decode(a) => decode_cmd(a, ctx, io),
        Command::Align(a) => align(a, ctx, io),
        Command::AlignMatrix(a) => align_matrix(a, ctx, io),
        Command::SpeedScan(a) => speed(a, ctx, io),
        Command::Mask(a) => mask(a, ctx, io),
        Command::FitNoise(a) => fit_noise(a, ctx, io),
        Command::PredictSnr(a) => predict(a, io),
        Command::Selftest => selftest_cmd(ctx),
        Command::Replay(_) => bail!("replay cannot be nested"),
    }
}

fn gen_code(a: &GenCodeArgs, ctx: RunContext, io: &mut Io) -> anyhow::Result<Report> {
    if a.frames == 0 || a.segment_len == 0 {
        bail!("--frames and --segment-len must be positive");
    }
    let mut spec = CodeSpec {
        fps: ctx.fps,
        segment_len: a.segment_len,
        band_lo: a.band_lo,
        band_hi: a.band_hi,
        num_codes: a.num_codes,
        master_seed: ctx.seed,
        ..CodeSpec::default()
    };
    if let Some(m) = a.amplitude_scale {
        spec.amplitude_scale = m;
    }
    if let Some(r) = a.rms {
        spec.amplitude_scale = spec.amplitude_scale_for_rms(r)?;
    }
    let count = a.frames.div_ceil(a.segment_len) as u64;
    let bank = CodeBank::generate(spec, a.first_segment..a.first_segment + count)?;
    let mut bytes = Vec::new();
    write_code_csv(&bank, &mut bytes)?;
    io.write(&a.out, &bytes)?;
    let range = bank.frame_range();
    let mut r = Report::default();
    r.kv("codes", bank.num_codes());
    r.kv("frames", format!("{}..{}", range.start, range.end));
    r.kv("rms", rms(&bank.codes()[0].samples));
    Ok(r)
}

fn render_cmd(a: &RenderArgs, ctx: RunContext, io: &mut Io) -> anyhow::Result<Report> {
    let text = String::from_utf8(io.read(&a.scene.join(SCENE_FILE_NAME))?)?;
    let scene = parse_scene(&text, |name| {
        let bytes = io.read(&a.scene.join(name)).map_err(|e| NciError::Io(std::io::Error::other(e.to_string())))?;
        read_netpbm(&bytes)
    })?;
    let bank = read_bank(io, &a.codes)?;
    let noise = NoiseModel::new(a.noise.read_std, a.noise.photon_coeff, a.bits, ctx.seed);
    let video = render(&scene, &bank, &noise, a.t0, a.frames)?;
    write_video(io, &a.out, &video)?;
    let mut r = Report::default();
    r.kv("frames", video.frames);
    r.kv("width", video.width);
    r.kv("height", video.height);
    r.kv("channels", video.channels);
    r.kv("t0", a.t0);
    Ok(r)
}

fn parse_patch(io: &mut Io, spec: &str) -> anyhow::Result<Patch> {
    let (kind, rest) = spec.split_once(':').ok_or_else(|| anyhow!("--patch: expected KIND:VALUES, got '{spec}'"))?;
    let nums = |n: Option<usize>| -> anyhow::Result<Vec<f64>> {
        let v: Vec<f64> = rest
            .split(',')
            .map(|p| p.trim().parse::<f64>().map_err(|_| anyhow!("--patch: bad number '{p}'")))
            .collect::<Result<_, _>>()?;
        if n.is_some_and(|n| n != v.len()) {
            bail!("--patch: '{kind}' takes {} values", n.unwrap());
        }
        Ok(v)
    };
    Ok(match kind {
        "fill" => Patch::Fill(nums(None)?),
        "still" => {
            let v = nums(Some(3))?;
            Patch::Still { frame: v[0] as usize, x: v[1] as usize, y: v[2] as usize }
        }
        "moving" => {
            let v = nums(Some(2))?;
            Patch::Moving { x: v[0] as usize, y: v[1] as usize }
        }
        "image" => Patch::Image(read_netpbm(&io.read(Path::new(rest))?)?),
        _ => bail!("--patch: unknown kind '{kind}'"),
    })
}

fn tamper_cmd(a: &TamperArgs, ctx: RunContext, io: &mut Io) -> anyhow::Result<Report> {
    let input = a.input.as_ref().ok_or_else(|| anyhow!("--input is required"))?;
    let out = a.out.as_ref().ok_or_else(|| anyhow!("--out is required"))?;
    let segments = match &a.op {
        TamperOp::Splice { segments } => segments
            .split(',')
            .map(|s| parse_range(s.trim()).map(|r| usize_range(&r)).map_err(|e| anyhow!("--segments: {e}")))
            .collect::<anyhow::Result<Vec<_>>>()?,
        _ => Vec::new(),
    };
    let video = read_video(io, input, ctx.fps)?;
    let (edited, log) = match &a.op {
        TamperOp::Cut { at, remove, crossfade } => tamper::cut(&video, *at, *remove, *crossfade)?,
        TamperOp::Splice { .. } => tamper::splice(&video, &segments)?,
        TamperOp::Retime { rho, range } => tamper::retime(&video, *rho, range.as_ref().map(usize_range))?,
        TamperOp::Composite { rect, frames, patch } => {
            let p = parse_patch(io, patch)?;
            tamper::composite(&video, p, Rect::new(rect[0], rect[1], rect[2], rect[3]), usize_range(frames))?
        }
        TamperOp::Replay { edits } => {
            let log = EditLog::from_text(&String::from_utf8(io.read(edits)?)?)?;
            (log.replay(&video)?, log)
        }
    };
    write_video(io, out, &edited)?;
    let log_path = a.log.clone().unwrap_or_else(|| with_suffix(out, ".editlog"));
    io.write(&log_path, log.to_text().as_bytes())?;
    let mut r = Report::default();
    r.kv("frames_in", video.frames);
    r.kv("frames_out", edited.frames);
    r.kv("edits", log.edits.len());
    r.kv("log", log_path.display());
    Ok(r)
}

fn decode_options(w: &WindowArgs) -> DecodeOptions {
    DecodeOptions {
        stabilize: w.stabilize,
        bilateral: w.bilateral.then_some(BilateralParams { sigma_r: w.bilateral_sigma, radius: w.bilateral_radius }),
        transient_sigma: w.transient_sigma,
        linearize_gamma: w.gamma,
    }
}

/// Decode with the window flags; also returns the full-length code.
fn decode_window(
    video: &FrameSequence,
    bank: &CodeBank,
    v: &VideoArgs,
    w: &WindowArgs,
) -> anyhow::Result<(CodeImage, Vec<f64>)> {
    let code = bank.code_for_interval(w.t0, w.t0 + video.frames as u64, v.source)?;
    let window = AnalysisWindow {
        t_center: w.center.unwrap_or(video.frames / 2),
        w: w.window,
        downsample: w.downsample as usize,
    };
    let img = decode(video, &code, &window, v.source, &decode_options(w))?;
    Ok((img, code))
}

fn decode_cmd(a: &DecodeArgs, ctx: RunContext, io: &mut Io) -> anyhow::Result<Report> {
    let video = read_video(io, &a.video.input, ctx.fps)?;
    let bank = read_bank(io, &a.video.codes)?;
    let (img, _) = decode_window(&video, &bank, &a.video, &a.window)?;
    let (bytes, side) = export_code_image(&img)?;
    io.write(&a.out, &bytes)?;
    io.write(&with_suffix(&a.out, ".txt"), side.as_bytes())?;
    let mut r = Report::default();
    r.kv("source", img.source_id);
    r.kv("frames", format!("{}..{}", img.frames.start, img.frames.end));
    r.kv("width", img.width);
    r.kv("height", img.height);
    let (lo, hi) = nci_core::decode::export_range(&img);
    r.kv("min", lo);
    r.kv("max", hi);
    r.kv("invalid", img.invalid_count());
    Ok(r)
}

fn search_or_default(search: &Option<Range<u64>>, bank: &CodeBank) -> Range<u64> {
    search.clone().unwrap_or_else(|| bank.frame_range())
}

fn bilateral(flag: bool) -> Option<BilateralParams> {
    flag.then(BilateralParams::default)
}

fn align(a: &AlignArgs, ctx: RunContext, io: &mut Io) -> anyhow::Result<Report> {
    let video = read_video(io, &a.video.input, ctx.fps)?;
    let bank = read_bank(io, &a.video.codes)?;
    let search = search_or_default(&a.search, &bank);
    let reg = if a.patch {
        let opts = PatchOptions {
            patch_size: a.patch_size,
            temperature: a.temperature,
            bilateral: bilateral(a.bilateral),
            threshold: a.threshold,
        };
        patch_weighted_register(&video, &bank, a.video.source, search, &opts)?.registration
    } else {
        let opts = RegisterOptions { bilateral: bilateral(a.bilateral), threshold: a.threshold };
        global_register(&video, &bank, a.video.source, search, &opts)?
    };
    if let Some(path) = &a.scores {
        let mut csv = String::from("offset,score\n");
        for (i, s) in reg.scores.iter().enumerate() {
            let _ = writeln!(csv, "{},{s}", reg.search.start + i as u64);
        }
        io.write(path, csv.as_bytes())?;
    }
    let mut r = Report::default();
    r.kv("offset", reg.offset);
    r.kv("confidence", reg.confidence);
    r.kv("score", reg.peak_score());
    r.kv("conclusive", reg.conclusive);
    r.kv("mode", if a.patch { "patch" } else { "global" });
    r.inconclusive = !reg.conclusive;
    Ok(r)
}

fn align_matrix(a: &MatrixArgs, ctx: RunContext, io: &mut Io) -> anyhow::Result<Report> {
    let video = read_video(io, &a.video.input, ctx.fps)?;
    let bank = read_bank(io, &a.video.codes)?;
    let opts =
        MatrixOptions { col_window: a.col_window, col_hop: a.col_hop, rho: a.rho, bilateral: bilateral(a.bilateral) };
    let m = alignment_matrix(&video, &bank, a.video.source, search_or_default(&a.search, &bank), &opts)?;
    let curve = extract_alignment_curve(
        &m,
        &CurveOptions { jump_threshold: a.jump_threshold, confidence_floor: a.confidence_floor },
    )?;
    if let Some(p) = &a.csv {
        io.write(p, m.to_csv().as_bytes())?;
    }
    if let Some(p) = &a.pgm {
        io.write(p, &m.to_pgm()?)?;
    }
    if let Some(p) = &a.curve {
        io.write(p, curve.to_text().as_bytes())?;
    }
    let confident = curve.points.iter().filter(|p| p.confident).count();
    let jumps: Vec<String> = curve.discontinuities.iter().map(|d| format!("{}@{}", d.jump, d.frame)).collect();
    let mut r = Report::default();
    r.kv("columns", m.num_columns());
    r.kv("confident", confident);
    r.kv("discontinuities", curve.discontinuities.len());
    r.kv("jumps", if jumps.is_empty() { "-".to_string() } else { jumps.join(",") });
    if let Some(s) = curve.slope() {
        r.kv("slope", s);
    }
    r.inconclusive = confident == 0;
    Ok(r)
}

fn speed(a: &SpeedArgs, ctx: RunContext, io: &mut Io) -> anyhow::Result<Report> {
    if a.rho_min > a.rho_max {
        bail!("--rho-min must not exceed --rho-max");
    }
    let video = read_video(io, &a.video.input, ctx.fps)?;
    let bank = read_bank(io, &a.video.codes)?;
    let opts = SpeedScanOptions {
        rho_min: a.rho_min,
        rho_max: a.rho_max,
        step: a.step,
        refine_steps: a.refine_steps,
        candidates: a.candidates as usize,
        bilateral: bilateral(a.bilateral),
    };
    let res = speed_scan(&video, &bank, a.video.source, search_or_default(&a.search, &bank), &opts)?;
    if let Some(p) = &a.spectrum {
        let mut csv = String::from("rho,spectral_score\n");
        for (g, s) in res.grid.iter().zip(&res.spectral) {
            let _ = writeln!(csv, "{g},{s}");
        }
        io.write(p, csv.as_bytes())?;
    }
    let conclusive = res.confidence >= a.threshold;
    let mut r = Report::default();
    r.kv("rho", res.rho);
    r.kv("offset", res.offset);
    r.kv("score", res.score);
    r.kv("confidence", res.confidence);
    r.kv("conclusive", conclusive);
    r.inconclusive = !conclusive;
    Ok(r)
}

fn parse_noise_file(text: &str) -> anyhow::Result<Vec<NoiseParams>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("channel") {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        let [c, a, b] = f.as_slice() else {
            bail!("noise file line {}: expected channel,read_std,photon_coeff", i + 1);
        };
        let bad = || anyhow!("noise file line {}: bad number", i + 1);
        if c.parse::<usize>().map_err(|_| bad())? != out.len() {
            bail!("noise file line {}: channels must be listed in order", i + 1);
        }
        out.push(NoiseParams { read_std: a.parse().map_err(|_| bad())?, photon_coeff: b.parse().map_err(|_| bad())? });
    }
    if out.is_empty() {
        bail!("noise file lists no channels");
    }
    Ok(out)
}

fn noise_table(params: &[NoiseParams]) -> String {
    let mut s = String::from("channel,read_std,photon_coeff\n");
    for (c, p) in params.iter().enumerate() {
        let _ = writeln!(s, "{c},{},{}", p.read_std, p.photon_coeff);
    }
    s
}

fn mask(a: &MaskArgs, ctx: RunContext, io: &mut Io) -> anyhow::Result<Report> {
    let video = read_video(io, &a.video.input, ctx.fps)?;
    let bank = read_bank(io, &a.video.codes)?;
    let noise = match (&a.noise_file, a.read_std, a.photon_coeff) {
        (Some(p), _, _) => Some(parse_noise_file(&String::from_utf8(io.read(p)?)?)?),
        (None, Some(read_std), Some(photon_coeff)) => {
            Some(vec![NoiseParams { read_std, photon_coeff }; video.channels])
        }
        _ => None,
    };
    let (img, code) = decode_window(&video, &bank, &a.video, &a.window)?;
    let idx = a.frame.unwrap_or(img.t_center);
    if idx >= video.frames {
        bail!("--frame {idx} is outside the video ({} frames)", video.frames);
    }
    let floor = match (a.floor, noise) {
        (Some(f), _) => CodeFloor::Explicit(f),
        (None, Some(noise)) => {
            CodeFloor::FromNoise { noise, code_rms: rms(&code[img.frames.clone()]), sigmas: a.sigmas }
        }
        (None, None) => bail!("pass --floor, --noise-file or --read-std/--photon-coeff"),
    };
    let opts = MaskOptions { bright_thresh: a.bright_thresh, code_floor: floor, min_weight: a.min_weight };
    let frame = video.frame_image(idx);
    let m = manipulation_mask(&frame, &img, &opts)?;
    io.write(&a.out, &write_pbm(&m.mask, m.width, m.height)?)?;
    if let Some(p) = &a.score {
        let mut s = m.score_image();
        s.data.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        io.write(p, &write_netpbm(&s, BitDepth::Sixteen)?)?;
    }
    if let Some(p) = &a.montage {
        io.write(p, &write_netpbm(&side_by_side(&frame, std::slice::from_ref(&img), &m), BitDepth::Eight)?)?;
    }
    let inconclusive = m.inconclusive.iter().filter(|v| **v).count();
    let pixels = m.width * m.height;
    let mut r = Report::default();
    r.kv("frame", idx);
    r.kv("flagged", m.flagged());
    r.kv("inconclusive", inconclusive);
    r.kv("pixels", pixels);
    r.kv("flagged_fraction", m.flagged() as f64 / pixels as f64);
    r.inconclusive = inconclusive == pixels;
    Ok(r)
}

fn fit_noise(a: &FitNoiseArgs, ctx: RunContext, io: &mut Io) -> anyhow::Result<Report> {
    let flats = a.flat.iter().map(|p| read_video(io, p, ctx.fps)).collect::<anyhow::Result<Vec<_>>>()?;
    let params = fit_noise_from_flats(&flats)?;
    if let Some(p) = &a.out {
        io.write(p, noise_table(&params).as_bytes())?;
    }
    let mut r = Report::default();
    r.kv("channels", params.len());
    for (c, p) in params.iter().enumerate() {
        r.kv(&format!("read_std{c}"), p.read_std);
        r.kv(&format!("photon_coeff{c}"), p.photon_coeff);
    }
    Ok(r)
}

fn predict(a: &PredictSnrArgs, io: &mut Io) -> anyhow::Result<Report> {
    let model = snr::SnrModel { read_std: a.noise.read_std, photon_coeff: a.noise.photon_coeff };
    let table = snr::prediction_table(&model, &a.brightness, &a.code_rms, &a.window, &a.m)?;
    let values: Vec<f64> =
        table.lines().skip(1).filter_map(|l| l.rsplit(',').next().and_then(|v| v.parse().ok())).collect();
    let mut r = Report::default();
    match &a.out {
        Some(p) => io.write(p, table.as_bytes())?,
        None => r.lines.extend(table.lines().map(str::to_string)),
    }
    r.kv("rows", values.len());
    if values.len() == 1 {
        r.kv("snr_db", values[0]);
    } else {
        r.kv("min_db", values.iter().copied().fold(f64::INFINITY, f64::min));
        r.kv("max_db", values.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    }
    Ok(r)
}

fn selftest_cmd(ctx: RunContext) -> anyhow::Result<Report> {
    let outcomes = selftest::run_selftest(ctx.seed);
    let mut r = Report::default();
    let mut all = Vec::new();
    let mut failed = 0;
    for o in &outcomes {
        all.extend_from_slice(o.name.as_bytes());
        all.push(0);
        all.extend_from_slice(&o.fingerprint);
        if !o.passed {
            failed += 1;
            eprintln!("{}: {}", o.name, o.detail);
        }
        r.lines.push(format!("check={} passed={} fingerprint={}", o.name, o.passed, &sha256_hex(&o.fingerprint)[..16]));
    }
    r.kv("checks", outcomes.len());
    r.kv("failed", failed);
    r.kv("digest", sha256_hex(&all));
    r.failed = failed > 0;
    Ok(r)
}
