use std::fs;

use nci_core::codegen::{read_code_csv, write_code_csv, CodeBank, CodeSpec};
use nci_core::decode::{code_image, AnalysisWindow};
use nci_core::io::{read_netpbm, read_y4m, write_netpbm, write_y4m, BitDepth};
use nci_core::simulate::{load_scene, parse_scene, render, NoiseModel, SceneModel};
use nci_core::tamper::{splice, EditLog};
use nci_core::temporal::{
    alignment_matrix, extract_alignment_curve, global_register, speed_scan, CurveOptions, MatrixOptions,
    RegisterOptions, SpeedScanOptions,
};
use nci_core::{FrameSequence, Image};

fn bank(seed: u64, k: usize, code_rms: f64, frames: usize) -> CodeBank {
    let spec = CodeSpec { master_seed: seed, num_codes: k, ..CodeSpec::default() };
    let spec = CodeSpec { amplitude_scale: spec.amplitude_scale_for_rms(code_rms).unwrap(), ..spec };
    CodeBank::covering(spec, frames).unwrap()
}

fn textured(w: usize, h: usize) -> Image {
    Image::from_fn(w, h, 1, |x, y, _| 0.3 + 0.3 * (((x * 7 + y * 13) % 17) as f64 / 16.0))
}

fn corr(a: &[f64], b: &[f64]) -> f64 {
    let ma = a.iter().sum::<f64>() / a.len() as f64;
    let mb = b.iter().sum::<f64>() / b.len() as f64;
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        ab += (x - ma) * (y - mb);
        aa += (x - ma) * (x - ma);
        bb += (y - mb) * (y - mb);
    }
    ab / (aa * bb).sqrt()
}

#[test]
fn code_csv_round_trip() {
    let b = bank(5, 3, 0.01, 600);
    let mut buf = Vec::new();
    write_code_csv(&b, &mut buf).unwrap();
    let back = read_code_csv(buf.as_slice()).unwrap();
    assert_eq!(back.num_codes(), 3);
    assert_eq!(back.frame_range(), b.frame_range());
    for (x, y) in b.codes().iter().zip(back.codes()) {
        assert_eq!(x.samples, y.samples);
    }
}

#[test]
fn render_store_register_decode() {
    let b = bank(11, 2, 0.01, 2048);
    let text = "size = 32x32x1\nbase = const:0.4\ntransport.0 = const:1.0\ntransport.1 = half\n";
    let half = Image::from_fn(32, 32, 1, |x, _, _| if x < 16 { 1.0 } else { 0.0 });
    let scene = parse_scene(text, |name| {
        assert_eq!(name, "half");
        Ok(half.clone())
    })
    .unwrap();
    let v = render(&scene, &b, &NoiseModel::new(0.002, 0.005, 8, 3), 321, 450).unwrap();

    // Grey 8-bit video survives the container; it comes back as RGB.
    let stored = read_y4m(&write_y4m(&v).unwrap()).unwrap();
    assert_eq!(stored.channels, 3);
    assert!(stored.data.chunks(3).zip(&v.data).all(|(rgb, &g)| rgb.iter().all(|&c| c == g)));

    let r = global_register(&stored, &b, 0, 0..1500, &RegisterOptions::default()).unwrap();
    assert!(r.conclusive);
    assert_eq!(r.offset, 321);

    let code = b.code_for_interval(321, 321 + 450, 1).unwrap();
    let ci = code_image(&stored, &code, &AnalysisWindow::full(450), 1).unwrap();
    let red: Vec<f64> = ci.values.iter().step_by(3).copied().collect();
    let r = corr(&red, &half.data);
    assert!(r > 0.9, "correlation {r}");
}

#[test]
fn scene_directory_loads() {
    let dir = tempfile::tempdir().unwrap();
    let base = textured(12, 8);
    fs::write(dir.path().join("base.pgm"), write_netpbm(&base, BitDepth::Sixteen).unwrap()).unwrap();
    fs::write(
        dir.path().join("scene.txt"),
        "# two lights\nsize = 12x8x1\nbase = base.pgm\ntransport.0 = const:1\ntransport.1 = const:0.5\n",
    )
    .unwrap();
    let s = load_scene(dir.path()).unwrap();
    assert_eq!(s.transport.len(), 2);
    let back = read_netpbm(&fs::read(dir.path().join("base.pgm")).unwrap()).unwrap();
    assert_eq!(s.base, back);
    assert!(s.base.data.iter().zip(&base.data).all(|(a, b)| (a - b).abs() <= 0.5 / 65535.0));
}

#[test]
fn scene_rejects_gap_in_transport() {
    let text = "size = 4x4x1\nbase = const:0.5\ntransport.0 = const:1\ntransport.2 = const:1\n";
    assert!(parse_scene(text, |_| unreachable!()).is_err());
}

fn small_video(b: &CodeBank, t0: u64, frames: usize, seed: u64) -> FrameSequence {
    let scene = SceneModel::new(textured(16, 16), vec![Image::filled(16, 16, 1, 0.5)]);
    render(&scene, b, &NoiseModel::new(0.002, 0.005, 8, seed), t0, frames).unwrap()
}

#[test]
fn splice_shows_up_in_alignment_curve() {
    let b = bank(77, 1, 0.004, 2048);
    let v = small_video(&b, 50, 600, 1);
    let (sv, log) = splice(&v, &[0..240, 300..600]).unwrap();

    let replayed = EditLog::from_text(&log.to_text()).unwrap().replay(&v).unwrap();
    assert_eq!(replayed.data, sv.data);

    let m = alignment_matrix(&sv, &b, 0, 0..1000, &MatrixOptions::default()).unwrap();
    let c = extract_alignment_curve(&m, &CurveOptions::default()).unwrap();
    assert_eq!(c.discontinuities.len(), 1, "{:?}", c.discontinuities);
    let d = c.discontinuities[0];
    assert!((d.jump - 60).abs() <= 1);
    assert!(d.frame >= 240 - 90 && d.frame <= 240 + 90);

    // Every confident column agrees with the log's ground truth.
    for p in c.points.iter().filter(|p| p.confident) {
        let src = log.source_position(600, p.frame).unwrap();
        let expect = 50.0 + src;
        assert!((p.capture as f64 - expect).abs() <= 1.0 || p.frame + 90 > 240 && p.frame < 240);
    }
}

#[test]
fn chained_edits_replay_from_text() {
    let b = bank(3, 1, 0.004, 1024);
    let v = small_video(&b, 0, 200, 9);
    let (a, l1) = nci_core::tamper::cut(&v, 50, 20, 3).unwrap();
    let (r, l2) = nci_core::tamper::retime(&a, 1.3, Some(10..120)).unwrap();
    let log = l1.then(l2);
    let back = EditLog::from_text(&log.to_text()).unwrap();
    assert_eq!(back, log);
    assert_eq!(back.replay(&v).unwrap().data, r.data);
}

// On this short clip the spectral score peaks near rho = 1; only the
// time-domain stage can tell, so it must look past the spectral argmax.
#[test]
fn speed_scan_looks_past_the_spectral_argmax() {
    let spec = CodeSpec { master_seed: 54, ..CodeSpec::default() };
    let spec = CodeSpec { amplitude_scale: spec.amplitude_scale_for_rms(0.004).unwrap(), ..spec };
    let b = CodeBank::covering(spec, 1024).unwrap();
    let base = Image::from_fn(8, 8, 1, |x, y, _| 0.3 + 0.02 * ((x * 3 + y * 5) % 7) as f64);
    let v = render(
        &SceneModel::new(base, vec![Image::filled(8, 8, 1, 0.5)]),
        &b,
        &NoiseModel::new(0.002, 0.005, 8, 54),
        60,
        300,
    )
    .unwrap();
    let (slow, _) = nci_core::tamper::retime(&v, 0.8, None).unwrap();
    let r = speed_scan(&slow, &b, 0, 0..200, &SpeedScanOptions::default()).unwrap();
    let best = r.spectral.iter().enumerate().max_by(|a, c| a.1.total_cmp(c.1)).unwrap().0;
    assert!(r.grid[best] > 0.95);
    assert!((r.rho / 0.8).ln().abs() <= 1.01f64.ln() + 1e-9, "rho {}", r.rho);
    assert!(r.offset.abs_diff(60) <= 1);

    let single = SpeedScanOptions { candidates: 1, ..SpeedScanOptions::default() };
    assert!(speed_scan(&slow, &b, 0, 0..200, &single).unwrap().rho > 0.95);
}
