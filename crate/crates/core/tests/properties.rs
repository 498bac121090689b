use nci_core::codegen::{CodeBank, CodeSpec};
use nci_core::io::{read_fseq, read_netpbm, write_fseq, write_netpbm, BitDepth};
use nci_core::simulate::{render, NoiseModel, SceneModel};
use nci_core::tamper::{cut, retime, EditLog};
use nci_core::{FrameSequence, Image};
use proptest::prelude::*;

// Codes stay small next to the 0.2 floor of `base`, so nothing clips.
fn bank(seed: u64, k: usize, code_rms: f64) -> CodeBank {
    let spec = CodeSpec { master_seed: seed, num_codes: k, ..CodeSpec::default() };
    let scale = if code_rms == 0.0 { 0.0 } else { spec.amplitude_scale_for_rms(code_rms).unwrap() };
    CodeBank::covering(CodeSpec { amplitude_scale: scale, ..spec }, 600).unwrap()
}

fn base(seed: u64) -> Image {
    Image::from_fn(6, 5, 1, |x, y, _| 0.2 + 0.05 * ((x as u64 * 3 + y as u64 * 5 + seed) % 9) as f64)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn two_codes_superpose(seed in 0u64..1000, t0 in 0u64..200, a0 in 0.0f64..1.0, a1 in 0.0f64..1.0) {
        let b = bank(seed, 2, 0.005);
        let t = |v: f64| Image::filled(6, 5, 1, v);
        let both = render(&SceneModel::new(base(seed), vec![t(a0), t(a1)]), &b, &NoiseModel::off(), t0, 40).unwrap();
        let first = render(&SceneModel::new(base(seed), vec![t(a0), t(0.0)]), &b, &NoiseModel::off(), t0, 40).unwrap();
        let second = render(&SceneModel::new(base(seed), vec![t(0.0), t(a1)]), &b, &NoiseModel::off(), t0, 40).unwrap();
        let none = render(&SceneModel::new(base(seed), vec![t(0.0), t(0.0)]), &b, &NoiseModel::off(), t0, 40).unwrap();
        for i in 0..both.data.len() {
            let sum = first.data[i] + second.data[i] - none.data[i];
            prop_assert!((both.data[i] - sum).abs() <= 1e-12);
        }
    }

    #[test]
    fn coded_part_scales_linearly(seed in 0u64..1000, s in 0.1f64..4.0) {
        let scene = SceneModel::new(base(seed), vec![Image::filled(6, 5, 1, 0.7)]);
        let plain = render(&scene, &bank(seed, 1, 0.002), &NoiseModel::off(), 0, 30).unwrap();
        let scaled = render(&scene, &bank(seed, 1, 0.002 * s), &NoiseModel::off(), 0, 30).unwrap();
        let flat = render(&scene, &bank(seed, 1, 0.0), &NoiseModel::off(), 0, 30).unwrap();
        for i in 0..plain.data.len() {
            let coded = plain.data[i] - flat.data[i];
            // Code samples are sums of terms rounded to 2^-44, so the two
            // banks agree only to a few 1e-12.
            prop_assert!((scaled.data[i] - flat.data[i] - s * coded).abs() <= 1e-11);
        }
    }

    #[test]
    fn eight_bit_output_sits_on_the_grid(seed in 0u64..1000, read in 0.0f64..0.02) {
        let scene = SceneModel::new(base(seed), vec![Image::filled(6, 5, 1, 1.0)]);
        let v = render(&scene, &bank(seed, 1, 0.01), &NoiseModel::new(read, 0.01, 8, seed), 0, 20).unwrap();
        for &x in &v.data {
            let q = x * 255.0;
            prop_assert!((q - q.round()).abs() <= 1e-9);
        }
        let again = render(&scene, &bank(seed, 1, 0.01), &NoiseModel::new(read, 0.01, 8, seed), 0, 20).unwrap();
        prop_assert_eq!(v.data, again.data);
    }

    #[test]
    fn fseq_round_trips(frames in 1usize..5, w in 1usize..6, h in 1usize..6, c in prop::sample::select(vec![1usize, 3]),
                        seed in any::<u64>()) {
        let n = frames * w * h * c;
        let data = (0..n).map(|i| f32::from_bits(((seed ^ i as u64) as u32) % 0x3f80_0000) as f64).collect();
        let v = FrameSequence::new(frames, h, w, c, 30.0, data).unwrap();
        let bytes = write_fseq(&v);
        let back = read_fseq(&bytes, 30.0).unwrap();
        prop_assert_eq!(&back.data, &v.data);
        prop_assert_eq!(write_fseq(&back), bytes);
    }

    #[test]
    fn netpbm_round_trips(w in 1usize..9, h in 1usize..9, rgb in any::<bool>(), wide in any::<bool>(), seed in any::<u64>()) {
        let (depth, maxval) = if wide { (BitDepth::Sixteen, 65535u64) } else { (BitDepth::Eight, 255u64) };
        let c = if rgb { 3 } else { 1 };
        let img = Image::from_fn(w, h, c, |x, y, k| {
            ((seed.wrapping_mul(31).wrapping_add((x * 7 + y * 11 + k) as u64)) % (maxval + 1)) as f64 / maxval as f64
        });
        let back = read_netpbm(&write_netpbm(&img, depth).unwrap()).unwrap();
        prop_assert_eq!(back, img);
    }

    #[test]
    fn edit_log_text_round_trips(at in 1usize..60, n in 1usize..30, fade in 0usize..4, rho in 0.3f64..3.0) {
        let v = FrameSequence::new(100, 2, 2, 1, 30.0, (0..400).map(|i| (i % 97) as f64 / 97.0).collect()).unwrap();
        let (c, l1) = cut(&v, at, n, fade).unwrap();
        let (out, l2) = retime(&c, rho, None).unwrap();
        let log = l1.then(l2);
        let back = EditLog::from_text(&log.to_text()).unwrap();
        prop_assert_eq!(&back, &log);
        prop_assert_eq!(back.replay(&v).unwrap().data, out.data);
    }
}
