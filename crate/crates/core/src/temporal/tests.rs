use super::*;
use crate::codegen::{CodeBank, CodeSpec};
use crate::simulate::{render, Ambient, NoiseModel, SceneModel};
use crate::tamper::{cut, retime, splice, EditLog};
use proptest::prelude::*;

fn bank(seed: u64, rms: f64) -> CodeBank {
    let spec = CodeSpec { master_seed: seed, ..CodeSpec::default() };
    let spec = CodeSpec { amplitude_scale: spec.amplitude_scale_for_rms(rms).unwrap(), ..spec };
    CodeBank::covering(spec, 2048).unwrap()
}

fn textured(w: usize, h: usize) -> Image {
    Image::from_fn(w, h, 1, |x, y, _| 0.3 + 0.3 * ((x * 7 + y * 13) % 11) as f64 / 10.0)
}

fn scene(size: usize) -> SceneModel {
    SceneModel::new(textured(size, size), vec![Image::filled(size, size, 1, 0.5)])
}

fn video(b: &CodeBank, t0: u64, frames: usize, seed: u64) -> FrameSequence {
    render(&scene(16), b, &NoiseModel::new(0.002, 0.005, 8, seed), t0, frames).unwrap()
}

#[test]
fn recovers_planted_offset() {
    let b = bank(1, 0.004);
    let v = video(&b, 100, 300, 1);
    let r = global_register(&v, &b, 0, 0..1000, &RegisterOptions::default()).unwrap();
    assert_eq!(r.offset, 100);
    assert!(r.conclusive);
    assert_eq!(r.scores.len(), 1000);
}

#[test]
fn in_sync_video_registers_at_zero() {
    let b = bank(2, 0.004);
    let v = video(&b, 0, 300, 2);
    let r = global_register(&v, &b, 0, 0..500, &RegisterOptions::default()).unwrap();
    assert_eq!(r.offset, 0);
    assert!(r.confidence > 1.5, "{}", r.confidence);
    let with_residual = RegisterOptions { bilateral: Some(BilateralParams::default()), ..Default::default() };
    assert_eq!(global_register(&v, &b, 0, 0..500, &with_residual).unwrap().offset, 0);
}

#[test]
fn empty_search_is_rejected() {
    let b = bank(3, 0.004);
    let v = video(&b, 0, 50, 3);
    assert!(global_register(&v, &b, 0, 10..10, &RegisterOptions::default()).is_err());
    assert!(alignment_matrix(&v, &b, 0, 5..5, &MatrixOptions::default()).is_err());
}

#[test]
fn aligned_correlation_beats_misaligned_on_average() {
    let b = bank(4, 0.002);
    let offsets = 0..64u64;
    let mut mean = vec![0.0; 64];
    for seed in 0..50 {
        let v = render(&scene(8), &b, &NoiseModel::new(0.01, 0.02, 0, seed), 32, 150).unwrap();
        let r = global_register(&v, &b, 0, offsets.clone(), &RegisterOptions::default()).unwrap();
        for (m, s) in mean.iter_mut().zip(&r.scores) {
            *m += s / 50.0;
        }
    }
    let true_score = mean[32];
    assert!(mean.iter().enumerate().all(|(o, &s)| o == 32 || s < true_score));
}

fn curve_for(v: &FrameSequence, b: &CodeBank, opts: &MatrixOptions) -> AlignmentCurve {
    let m = alignment_matrix(v, b, 0, 0..1200, opts).unwrap();
    assert!(m.columns.iter().flatten().all(|s| (-1.0..=1.0).contains(s)));
    extract_alignment_curve(&m, &CurveOptions::default()).unwrap()
}

#[test]
fn clean_video_lies_on_one_diagonal() {
    let b = bank(5, 0.004);
    let v = video(&b, 250, 600, 5);
    let c = curve_for(&v, &b, &MatrixOptions::default());
    assert!(c.discontinuities.is_empty(), "{:?}", c.discontinuities);
    let confident: Vec<_> = c.points.iter().filter(|p| p.confident).collect();
    assert!(confident.len() >= c.points.len() * 9 / 10);
    assert!(confident.iter().all(|p| p.lag() == 250));
}

#[test]
fn cut_shows_one_jump() {
    let b = bank(6, 0.004);
    let v = video(&b, 100, 600, 6);
    let (cv, _) = cut(&v, 200, 30, 3).unwrap();
    let c = curve_for(&cv, &b, &MatrixOptions::default());
    assert_eq!(c.discontinuities.len(), 1, "{}", c.to_text());
    let d = c.discontinuities[0];
    assert!((d.jump - 30).abs() <= 1);
    assert!(d.frame >= 200 - 90 && d.frame <= 200 + 90);
}

#[test]
fn reorder_shows_segment_runs() {
    let b = bank(7, 0.004);
    let v = video(&b, 0, 600, 7);
    let segs = [400..600, 200..400, 0..200];
    let (sv, log) = splice(&v, &segs).unwrap();
    let c = curve_for(&sv, &b, &MatrixOptions::default());
    assert_eq!(c.discontinuities.len(), segs.len() - 1, "{}", c.to_text());
    for p in c.points.iter().filter(|p| p.confident) {
        // Columns entirely inside one segment match the log.
        let (a, z) = (log.source_position(600, p.frame).unwrap(), log.source_position(600, p.frame + 89).unwrap());
        if z - a == 89.0 {
            assert_eq!(p.capture as f64, a);
        }
    }
}

#[test]
fn matrix_exports() {
    let b = bank(8, 0.004);
    let v = video(&b, 0, 120, 8);
    let m = alignment_matrix(&v, &b, 0, 0..50, &MatrixOptions { col_window: 60, col_hop: 30, ..Default::default() })
        .unwrap();
    assert_eq!(m.num_columns(), 3);
    let csv = m.to_csv();
    assert_eq!(csv.lines().count(), 3 + 1 + 50);
    assert!(csv.contains("offset,f0,f30,f60"));
    let pgm = m.to_pgm().unwrap();
    assert!(pgm.starts_with(b"P5\n3 50\n255\n"));
    let text = extract_alignment_curve(&m, &CurveOptions::default()).unwrap().to_text();
    assert_eq!(text.lines().count(), 4);
}

fn retimed(rho: f64, seed: u64) -> (FrameSequence, CodeBank) {
    let b = bank(seed, 0.004);
    let v = video(&b, 137, 600, seed);
    let v = if rho == 1.0 { v } else { retime(&v, rho, None).unwrap().0 };
    (v, b)
}

fn within_step(found: f64, planted: f64) -> bool {
    (found / planted).ln().abs() <= 1.01f64.ln() + 1e-9
}

#[test]
fn rho_grid_is_geometric_and_contains_one() {
    let g = rho_grid(0.5, 2.0, 1.01).unwrap();
    assert!(g.contains(&1.0));
    assert!(g[0] >= 0.5 && *g.last().unwrap() <= 2.0);
    assert!(g.windows(2).all(|w| (w[1] / w[0] - 1.01).abs() < 1e-12));
    assert!(rho_grid(1.0, 0.5, 1.01).is_err());
}

#[test]
fn speed_scan_recovers_planted_speeds() {
    for (i, &rho) in [1.0, 0.6, 0.8, 1.25].iter().enumerate() {
        let (v, b) = retimed(rho, 20 + i as u64);
        let r = speed_scan(&v, &b, 0, 0..600, &SpeedScanOptions::default()).unwrap();
        assert!(within_step(r.rho, rho), "planted {rho}, found {}", r.rho);
        assert!((r.offset as i64 - 137).abs() <= 1, "offset {}", r.offset);
        assert_eq!(r.spectral.len(), r.grid.len());
    }
}

#[test]
fn curve_slope_follows_speed() {
    for rho in [0.8, 1.25] {
        let (v, b) = retimed(rho, 30);
        let c = curve_for(&v, &b, &MatrixOptions { rho, ..Default::default() });
        let slope = c.slope().unwrap();
        assert!(within_step(slope, rho), "{slope} vs {rho}");
        assert!(c.discontinuities.is_empty());
    }
}

#[test]
fn patch_weighting_matches_global_on_uniform_scene() {
    let b = bank(9, 0.004);
    let v = render(&scene(32), &b, &NoiseModel::new(0.002, 0.005, 8, 9), 321, 300).unwrap();
    let g = global_register(&v, &b, 0, 0..1000, &RegisterOptions::default()).unwrap();
    let p = patch_weighted_register(&v, &b, 0, 0..1000, &PatchOptions::default()).unwrap();
    assert_eq!(p.registration.offset, g.offset);
    assert_eq!((p.weights.width, p.weights.height), (2, 2));
    assert!((p.weights.data.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

/// Mostly bright, flickering background with a small shaded region; the
/// coded lamp reaches everything equally.
pub(crate) fn outdoor(b: &CodeBank, t0: u64, seed: u64) -> FrameSequence {
    let n = 64;
    let shade = |x: usize, y: usize| y < 16 && x < 26;
    let base = Image::from_fn(n, n, 1, |x, y, _| if shade(x, y) { 0.05 } else { 0.8 });
    let gain = Image::from_fn(n, n, 1, |x, y, _| if shade(x, y) { 0.0 } else { 1.0 });
    let mut s = SceneModel::new(base, vec![Image::filled(n, n, 1, 1.0)]);
    s.ambient.push(Ambient { gain, std: 0.03, seed: seed ^ 0xa5a5 });
    render(&s, b, &NoiseModel::new(0.002, 0.02, 8, seed), t0, 300).unwrap()
}

#[test]
fn patch_weighting_survives_bright_background() {
    let b = bank(10, 0.003);
    let (mut global_fail, mut patch_ok) = (0, 0);
    for seed in 0..10 {
        let t0 = 50 + 71 * seed;
        let v = outdoor(&b, t0, seed);
        let g = global_register(&v, &b, 0, 0..1000, &RegisterOptions::default()).unwrap();
        let p = patch_weighted_register(&v, &b, 0, 0..1000, &PatchOptions::default()).unwrap();
        if !g.conclusive {
            global_fail += 1;
            if p.registration.offset == t0 && p.registration.conclusive {
                patch_ok += 1;
            }
        }
        // The weight goes to the shaded patch.
        let best = p.weights.data.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert_eq!(best, 0, "seed {seed}");
    }
    assert_eq!(global_fail, 10);
    assert!(patch_ok >= 8, "{patch_ok}/10");
}

#[test]
fn zero_code_is_inconclusive() {
    let spec = CodeSpec { amplitude_scale: 0.0, ..CodeSpec::default() };
    let silent = CodeBank::covering(spec, 600).unwrap();
    let b = bank(11, 0.004);
    let v = video(&b, 0, 200, 11);
    let p = patch_weighted_register(&v, &silent, 0, 0..300, &PatchOptions::default()).unwrap();
    assert!(!p.registration.conclusive);
    let g = global_register(&v, &silent, 0, 0..300, &RegisterOptions::default()).unwrap();
    assert!(!g.conclusive);
}

#[test]
fn log_maps_retimed_frames() {
    let (v, _) = retimed(0.6, 40);
    let log = EditLog::from_text("nci-editlog 1\nretime rho=0.6 range=0..600\n").unwrap();
    assert_eq!(v.frames, 1000);
    assert_eq!(log.source_position(600, 500), Some(300.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]
    #[test]
    fn registration_is_shift_equivariant(s in 0usize..200, seed in 0u64..50) {
        let b = bank(12, 0.004);
        let v = video(&b, 40, 500, seed);
        let base = global_register(&v, &b, 0, 0..600, &RegisterOptions::default()).unwrap();
        let shifted = v.slice_frames(s, 500).unwrap();
        let r = global_register(&shifted, &b, 0, 0..600, &RegisterOptions::default()).unwrap();
        prop_assert_eq!(r.offset, base.offset + s as u64);
    }
}
