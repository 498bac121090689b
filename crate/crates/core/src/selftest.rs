//! A small, deterministic property suite that exercises every module.
//!
//! Each check reports pass/fail and a fingerprint of the values it
//! computed. Fingerprints must not depend on the number of worker threads,
//! which makes the suite a cheap determinism probe.

use crate::codegen::{sample_segment, CodeBank, CodeSpec};
use crate::decode::{code_image, transient_filtered_code_image, AnalysisWindow};
use crate::error::Result;
use crate::frames::{FrameSequence, Image};
use crate::io::{read_fseq, read_netpbm, read_y4m, write_fseq, write_netpbm, write_y4m, BitDepth};
use crate::simulate::{render, NoiseModel, NoiseParams, SceneModel};
use crate::snr::{predict_snr, SnrModel};
use crate::spatial::{manipulation_mask, MaskOptions};
use crate::tamper::{composite, cut, retime, EditLog, Patch, Rect};
use crate::temporal::{
    alignment_matrix, extract_alignment_curve, global_register, speed_scan, CurveOptions, MatrixOptions,
    RegisterOptions, SpeedScanOptions,
};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    /// Little-endian bytes of every value the check computed.
    pub fingerprint: Vec<u8>,
}

#[derive(Default)]
struct Print(Vec<u8>);

impl Print {
    fn f(&mut self, vals: &[f64]) {
        for v in vals {
            self.0.extend_from_slice(&v.to_le_bytes());
        }
    }

    fn u(&mut self, vals: &[u64]) {
        for v in vals {
            self.0.extend_from_slice(&v.to_le_bytes());
        }
    }
}

type Check = fn(u64, &mut Print) -> Result<(bool, String)>;

fn bank(seed: u64, k: usize, rms: f64) -> Result<CodeBank> {
    let spec = CodeSpec { master_seed: seed, num_codes: k, ..CodeSpec::default() };
    let spec = CodeSpec { amplitude_scale: spec.amplitude_scale_for_rms(rms)?, ..spec };
    CodeBank::covering(spec, 2048)
}

fn small_scene(size: usize) -> SceneModel {
    let base = Image::from_fn(size, size, 1, |x, y, _| 0.3 + 0.02 * ((x * 3 + y * 5) % 7) as f64);
    SceneModel::new(base, vec![Image::filled(size, size, 1, 0.5)])
}

fn code_sum(seed: u64, p: &mut Print) -> Result<(bool, String)> {
    let spec = |k| CodeSpec { master_seed: seed, num_codes: k, ..CodeSpec::default() };
    let one = sample_segment(&spec(1), 3)?;
    let mut ok = true;
    for k in [2, 3, 5] {
        let seg = sample_segment(&spec(k), 3)?;
        let sum: Vec<f64> = (0..one.codes[0].len()).map(|t| seg.codes.iter().map(|c| c[t]).sum()).collect();
        ok &= sum.iter().zip(&one.codes[0]).all(|(a, b)| a.to_bits() == b.to_bits());
        for (i, a) in seg.codes.iter().enumerate() {
            ok &= (a.iter().sum::<f64>() / a.len() as f64).abs() <= 1e-9;
            for b in &seg.codes[i + 1..] {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                let norm = (a.iter().map(|x| x * x).sum::<f64>() * b.iter().map(|x| x * x).sum::<f64>()).sqrt();
                ok &= dot.abs() <= 1e-9 * norm;
            }
        }
    }
    p.f(&one.codes[0]);
    Ok((ok, "sum over codes independent of k".into()))
}

fn render_noise(seed: u64, p: &mut Print) -> Result<(bool, String)> {
    let b = bank(seed, 1, 0.004)?;
    let v = render(&small_scene(16), &b, &NoiseModel::new(0.002, 0.01, 8, seed), 0, 64)?;
    let again = render(&small_scene(16), &b, &NoiseModel::new(0.002, 0.01, 8, seed), 0, 64)?;
    let on_grid = v.data.iter().all(|x| ((x * 255.0).round() - x * 255.0).abs() < 1e-9);
    p.f(&v.data);
    Ok((on_grid && v.data == again.data, "quantized and reproducible".into()))
}

fn decode_exact(seed: u64, p: &mut Print) -> Result<(bool, String)> {
    let b = bank(seed, 2, 0.01)?;
    let a1 = Image::from_fn(16, 16, 1, |x, _, _| 0.1 + 0.02 * x as f64);
    let scene = SceneModel::new(Image::filled(16, 16, 1, 0.2), vec![a1.clone(), Image::filled(16, 16, 1, 0.4)]);
    let v = render(&scene, &b, &NoiseModel::off(), 0, 256)?;
    let code = b.code_for_interval(0, 256, 0)?;
    let ci = code_image(&v, &code, &AnalysisWindow::full(256), 0)?;
    let err = ci.values.iter().zip(&a1.data).map(|(e, a)| ((e - a) / a).abs()).fold(0.0, f64::max);
    let tf = transient_filtered_code_image(&v, &code, &AnalysisWindow::full(256), 1e9, 0)?;
    p.f(&ci.values);
    p.f(&tf.values);
    Ok((err <= 1e-6 && tf.values == ci.values, format!("max relative error {err:.2e}")))
}

fn register(seed: u64, p: &mut Print) -> Result<(bool, String)> {
    let b = bank(seed, 1, 0.004)?;
    let t0 = 37 + seed % 200;
    let v = render(&small_scene(16), &b, &NoiseModel::new(0.002, 0.005, 8, seed), t0, 200)?;
    let r = global_register(&v, &b, 0, 0..400, &RegisterOptions::default())?;
    p.f(&r.scores);
    p.u(&[r.offset]);
    Ok((r.offset == t0 && r.conclusive, format!("offset {} (planted {t0})", r.offset)))
}

fn cut_detection(seed: u64, p: &mut Print) -> Result<(bool, String)> {
    let b = bank(seed, 1, 0.004)?;
    let v = render(&small_scene(16), &b, &NoiseModel::new(0.002, 0.005, 8, seed), 20, 360)?;
    let (c, _) = cut(&v, 150, 30, 3)?;
    let m = alignment_matrix(&c, &b, 0, 0..400, &MatrixOptions::default())?;
    let curve = extract_alignment_curve(&m, &CurveOptions::default())?;
    for col in &m.columns {
        p.f(col);
    }
    let jumps: Vec<i64> = curve.discontinuities.iter().map(|d| d.jump).collect();
    Ok((jumps.len() == 1 && (jumps[0] - 30).abs() <= 1, format!("jumps {jumps:?}")))
}

fn speed(seed: u64, p: &mut Print) -> Result<(bool, String)> {
    let b = bank(seed, 1, 0.004)?;
    let v = render(&small_scene(16), &b, &NoiseModel::new(0.002, 0.005, 8, seed), 60, 600)?;
    let (slow, _) = retime(&v, 0.8, None)?;
    let r = speed_scan(&slow, &b, 0, 0..200, &SpeedScanOptions::default())?;
    p.f(&r.spectral);
    p.f(&[r.rho]);
    Ok(((r.rho / 0.8).ln().abs() <= 1.01f64.ln() + 1e-9 && r.offset.abs_diff(60) <= 1, format!("rho {:.4}", r.rho)))
}

fn mask(seed: u64, p: &mut Print) -> Result<(bool, String)> {
    // 400 frames at rms 0.008 keep the true 0.5 transfer about 8 sigma
    // above the floor, so clean pixels essentially never drop below it.
    let b = bank(seed, 1, 0.008)?;
    let noise = NoiseParams { read_std: 0.002, photon_coeff: 0.005 };
    let v = render(&small_scene(32), &b, &NoiseModel { params: noise, quant_bits: 8, seed }, 0, 400)?;
    let rect = Rect::new(8, 8, 8, 8);
    let (t, _) = composite(&v, Patch::Fill(vec![0.4]), rect, 0..400)?;
    let code = b.code_for_interval(0, 400, 0)?;
    let ci = code_image(&t, &code, &AnalysisWindow::full(400), 0)?;
    let m =
        manipulation_mask(&t.frame_image(200), &ci, &MaskOptions::from_noise(vec![noise], crate::codegen::rms(&code)))?;
    let inside = (0..32 * 32).filter(|&i| m.mask[i] && rect.contains(i % 32, i / 32)).count();
    p.f(&m.score);
    Ok((inside >= 32 && m.flagged() <= inside + 10, format!("{inside}/64 patch pixels flagged, {} total", m.flagged())))
}

fn snr_formula(_seed: u64, p: &mut Print) -> Result<(bool, String)> {
    let model = SnrModel { read_std: 0.002, photon_coeff: 0.01 };
    let a = predict_snr(&model, 0.004, 0.3, 450.0, 1.0)?;
    let b = predict_snr(&model, 0.004, 0.3, 450.0, 4.0)?;
    p.f(&[a, b]);
    Ok(((b - a - 20.0 * 2f64.log10()).abs() < 1e-12, format!("{a:.3} dB, {b:.3} dB with M=4")))
}

fn formats(seed: u64, p: &mut Print) -> Result<(bool, String)> {
    let mut rng = crate::rng::Xoshiro256StarStar::seed_from_u64(seed);
    let data: Vec<f64> = (0..3 * 4 * 5 * 3).map(|_| rng.next_f64() as f32 as f64).collect();
    let v = FrameSequence::new(3, 4, 5, 3, 30.0, data)?;
    let fseq = write_fseq(&v);
    let fseq_ok = read_fseq(&fseq, 30.0)?.data == v.data;
    let img = Image::from_fn(5, 4, 3, |x, y, c| ((x * 7 + y * 3 + c) % 256) as f64 / 255.0);
    let pnm = write_netpbm(&img, BitDepth::Eight)?;
    let pnm_ok = read_netpbm(&pnm)?.data == img.data;
    let y4m = write_y4m(&v)?;
    let back = read_y4m(&y4m)?;
    let y4m_ok = back.data.iter().zip(&v.data).all(|(a, b)| (a - b).abs() < 0.02);
    p.0.extend_from_slice(&fseq);
    p.0.extend_from_slice(&pnm);
    p.0.extend_from_slice(&y4m);
    Ok((fseq_ok && pnm_ok && y4m_ok, format!("fseq {fseq_ok}, netpbm {pnm_ok}, y4m {y4m_ok}")))
}

fn replay(seed: u64, p: &mut Print) -> Result<(bool, String)> {
    let mut rng = crate::rng::Xoshiro256StarStar::seed_from_u64(seed);
    let v = FrameSequence::new(40, 4, 4, 1, 30.0, (0..640).map(|_| rng.next_f64()).collect())?;
    let (a, l1) = cut(&v, 10, 4, 3)?;
    let (b, l2) = retime(&a, 0.7, Some(3..30))?;
    let log = EditLog::from_text(&l1.then(l2).to_text())?;
    let again = log.replay(&v)?;
    p.f(&again.data);
    Ok((again.data == b.data, format!("{} edits replayed", log.edits.len())))
}

const CHECKS: [(&str, Check); 10] = [
    ("codegen.sum_invariance", code_sum),
    ("simulate.render", render_noise),
    ("decode.noiseless", decode_exact),
    ("temporal.global_register", register),
    ("temporal.cut", cut_detection),
    ("temporal.speed_scan", speed),
    ("spatial.mask", mask),
    ("snr.predict", snr_formula),
    ("io.round_trips", formats),
    ("tamper.replay", replay),
];

/// Run every check with the given seed.
pub fn run_selftest(seed: u64) -> Vec<CheckOutcome> {
    CHECKS
        .iter()
        .map(|(name, check)| {
            let mut p = Print::default();
            match check(seed, &mut p) {
                Ok((passed, detail)) => CheckOutcome { name, passed, detail, fingerprint: p.0 },
                Err(e) => CheckOutcome { name, passed: false, detail: format!("error: {e}"), fingerprint: p.0 },
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass() {
        for seed in [0, 1] {
            for o in run_selftest(seed) {
                assert!(o.passed, "{} (seed {seed}): {}", o.name, o.detail);
                assert!(!o.fingerprint.is_empty());
            }
        }
    }

    #[test]
    fn fingerprints_ignore_thread_count() {
        let run =
            |threads| rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| run_selftest(3));
        let one = run(1);
        assert_eq!(one, run(4));
    }
}
