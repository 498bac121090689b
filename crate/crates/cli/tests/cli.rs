use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn nci(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nci"))
        .current_dir(dir)
        .env_remove("NCI_SEED")
        .env_remove("NCI_THREADS")
        .env_remove("NCI_FPS")
        .env_remove("NCI_MANIFEST")
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// The value of `key` on the last (summary) line.
fn field(o: &Output, key: &str) -> String {
    let out = stdout(o);
    let line = out.lines().last().unwrap_or("");
    line.split(' ')
        .find_map(|kv| kv.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("no {key} in '{line}'"))
        .to_string()
}

/// Codes plus a 600-frame, 16x16 in-sync render.
fn setup() -> TempDir {
    let dir = TempDir::new().unwrap();
    let p = dir.path();
    fs::create_dir(p.join("scene")).unwrap();
    fs::write(p.join("scene/scene.txt"), "size = 16x16x1\nbase = const:0.3\ntransport.0 = const:0.5\n").unwrap();
    let o = nci(p, &["gen-code", "--frames", "2048", "--rms", "0.004", "--out", "codes.csv", "--seed", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = nci(p, &["render", "--scene", "scene", "--codes", "codes.csv", "--frames", "600", "--out", "v.fseq"]);
    assert!(o.status.success(), "{}", stderr(&o));
    dir
}

#[test]
fn help_and_usage_errors() {
    let dir = TempDir::new().unwrap();
    let help = nci(dir.path(), &["--help"]);
    assert_eq!(help.status.code(), Some(0));
    for sub in [
        "gen-code",
        "render",
        "tamper",
        "decode",
        "align",
        "align-matrix",
        "speed-scan",
        "mask",
        "fit-noise",
        "predict-snr",
        "selftest",
    ] {
        assert!(stdout(&help).contains(sub), "{sub} missing from --help");
    }
    let bad = nci(dir.path(), &["align", "--bogus"]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(stderr(&bad).contains("--bogus"));
    let clash =
        nci(dir.path(), &["gen-code", "--frames", "9", "--rms", "0.1", "--amplitude-scale", "0.1", "--out", "x"]);
    assert_eq!(clash.status.code(), Some(1));
    assert!(stderr(&clash).contains("--amplitude-scale"));
    assert!(!dir.path().join("x").exists());
}

#[test]
fn missing_input_is_an_error() {
    let dir = TempDir::new().unwrap();
    let o = nci(dir.path(), &["align", "--input", "none.fseq", "--codes", "none.csv"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("none.fseq"));
}

#[test]
fn align_in_sync_and_after_full_composite() {
    let dir = setup();
    let p = dir.path();
    let o = nci(p, &["align", "--input", "v.fseq", "--codes", "codes.csv", "--search", "0..500"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(field(&o, "offset"), "0");
    assert!(field(&o, "confidence").parse::<f64>().unwrap() > 1.5);

    let o = nci(
        p,
        &[
            "tamper",
            "--input",
            "v.fseq",
            "--out",
            "c.fseq",
            "composite",
            "--rect",
            "0,0,16,16",
            "--frames",
            "0..600",
            "--patch",
            "fill:0.3",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let o = nci(p, &["align", "--input", "c.fseq", "--codes", "codes.csv", "--search", "0..500"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(field(&o, "conclusive"), "false");
}

#[test]
fn cut_shows_in_alignment_matrix() {
    let dir = setup();
    let p = dir.path();
    let o = nci(p, &["tamper", "--input", "v.fseq", "--out", "cut.fseq", "cut", "--at", "200", "--remove", "30"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(field(&o, "frames_out"), "570");
    assert!(fs::read_to_string(p.join("cut.fseq.editlog")).unwrap().contains("cut t_start=200 n_removed=30"));
    let o = nci(
        p,
        &[
            "align-matrix",
            "--input",
            "cut.fseq",
            "--codes",
            "codes.csv",
            "--search",
            "0..1200",
            "--csv",
            "m.csv",
            "--pgm",
            "m.pgm",
            "--curve",
            "curve.txt",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(field(&o, "discontinuities"), "1");
    assert!(field(&o, "jumps").starts_with("30@"));
    assert!(fs::read(p.join("m.pgm")).unwrap().starts_with(b"P5\n"));
    let o = nci(p, &["align-matrix", "--input", "cut.fseq", "--codes", "codes.csv"]);
    assert_eq!(o.status.code(), Some(1), "an output is required");
}

#[test]
fn speed_scan_finds_retime() {
    let dir = setup();
    let p = dir.path();
    let o = nci(p, &["tamper", "--input", "v.fseq", "--out", "slow.fseq", "retime", "--rho", "0.8"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = nci(p, &["speed-scan", "--input", "slow.fseq", "--codes", "codes.csv", "--search", "0..600"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rho: f64 = field(&o, "rho").parse().unwrap();
    assert!((rho / 0.8).ln().abs() <= 1.01f64.ln() + 1e-9, "{rho}");
    // A speed one grid step off drifts by a few frames over the clip, which
    // the best offset splits.
    assert!(field(&o, "offset").parse::<u64>().unwrap() <= 3);
}

#[test]
fn decode_and_mask_write_images() {
    let dir = setup();
    let p = dir.path();
    let o = nci(p, &["decode", "--input", "v.fseq", "--codes", "codes.csv", "--out", "ci.pgm", "--window", "300"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(field(&o, "width"), "8");
    assert!(fs::read_to_string(p.join("ci.pgm.txt")).unwrap().contains("downsample=2"));
    let o = nci(
        p,
        &[
            "mask",
            "--input",
            "v.fseq",
            "--codes",
            "codes.csv",
            "--read-std",
            "0.002",
            "--photon-coeff",
            "0.01",
            "--out",
            "m.pbm",
            "--montage",
            "mm.ppm",
            "--score",
            "s.pgm",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(field(&o, "flagged"), "0");
    assert!(fs::read(p.join("m.pbm")).unwrap().starts_with(b"P4\n8 8\n"));
    let o = nci(p, &["mask", "--input", "v.fseq", "--codes", "codes.csv", "--out", "m.pbm"]);
    assert_eq!(o.status.code(), Some(1), "a floor source is required");
}

#[test]
fn fit_noise_feeds_mask() {
    let dir = setup();
    let p = dir.path();
    for (i, l) in ["0.1", "0.3", "0.6"].iter().enumerate() {
        let d = p.join(format!("flat{i}"));
        fs::create_dir(&d).unwrap();
        fs::write(d.join("scene.txt"), format!("size = 16x16x1\nbase = const:{l}\ntransport.0 = const:0\n")).unwrap();
        let o = nci(
            p,
            &[
                "render",
                "--scene",
                &format!("flat{i}"),
                "--codes",
                "codes.csv",
                "--frames",
                "200",
                "--bits",
                "0",
                "--read-std",
                "0.003",
                "--photon-coeff",
                "0.01",
                "--out",
                &format!("flat{i}.fseq"),
                "--seed",
                &i.to_string(),
            ],
        );
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let o = nci(
        p,
        &["fit-noise", "--flat", "flat0.fseq", "--flat", "flat1.fseq", "--flat", "flat2.fseq", "--out", "noise.csv"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let a: f64 = field(&o, "read_std0").parse().unwrap();
    let b: f64 = field(&o, "photon_coeff0").parse().unwrap();
    assert!((a - 0.003).abs() < 0.001 && (b - 0.01).abs() < 0.002, "{a} {b}");
    let o =
        nci(p, &["mask", "--input", "v.fseq", "--codes", "codes.csv", "--noise-file", "noise.csv", "--out", "m.pbm"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn predict_snr_single_point() {
    let dir = TempDir::new().unwrap();
    let o = nci(
        dir.path(),
        &[
            "predict-snr",
            "--read-std",
            "0.002",
            "--photon-coeff",
            "0.01",
            "--brightness",
            "0.25",
            "--code-rms",
            "0.004",
            "--window",
            "450",
            "--m",
            "4",
        ],
    );
    assert!(o.status.success());
    let snr: f64 = field(&o, "snr_db").parse().unwrap();
    assert!((snr - 20.0 * (1800f64.sqrt() * 0.004 / 0.007).log10()).abs() < 1e-9);
    let o = nci(dir.path(), &["predict-snr", "--out", "t.csv"]);
    assert_eq!(field(&o, "rows"), "24");
    assert_eq!(fs::read_to_string(dir.path().join("t.csv")).unwrap().lines().count(), 25);
}

#[test]
fn manifest_replays_bit_exactly() {
    let dir = setup();
    let p = dir.path();
    let m: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(p.join("v.fseq.manifest.json")).unwrap()).unwrap();
    assert_eq!(m["command"], "render");
    assert_eq!(m["params"]["render"]["frames"], 600);
    assert_eq!(m["inputs"].as_array().unwrap().len(), 2, "scene.txt and codes; const images read no file");
    let before = fs::read(p.join("v.fseq")).unwrap();
    let o = nci(p, &["replay", "v.fseq.manifest.json", "--threads", "3"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(field(&o, "identical"), "true");
    assert_eq!(fs::read(p.join("v.fseq")).unwrap(), before);

    // Changing an input is caught before anything is re-run.
    fs::write(p.join("scene/scene.txt"), "size = 16x16x1\nbase = const:0.4\ntransport.0 = const:0.5\n").unwrap();
    let o = nci(p, &["replay", "v.fseq.manifest.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("changed"));
}

#[test]
fn seed_precedence_flag_over_env() {
    let dir = TempDir::new().unwrap();
    let p = dir.path();
    let run = |out: &str, env: Option<&str>, flag: Option<&str>| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_nci"));
        c.current_dir(p).env_remove("NCI_SEED").args(["gen-code", "--frames", "256", "--out", out]);
        if let Some(e) = env {
            c.env("NCI_SEED", e);
        }
        if let Some(f) = flag {
            c.args(["--seed", f]);
        }
        assert!(c.output().unwrap().status.success());
        fs::read(p.join(out)).unwrap()
    };
    let env5 = run("a.csv", Some("5"), None);
    let flag5 = run("b.csv", None, Some("5"));
    let both = run("c.csv", Some("9"), Some("5"));
    let default = run("d.csv", None, None);
    assert_eq!(env5, flag5);
    assert_eq!(both, flag5);
    assert_ne!(default, flag5);
}

#[test]
fn selftest_is_thread_independent() {
    let dir = TempDir::new().unwrap();
    let one = nci(dir.path(), &["selftest", "--threads", "1"]);
    let four = nci(dir.path(), &["selftest", "--threads", "4"]);
    assert_eq!(one.status.code(), Some(0));
    assert_eq!(one.stdout, four.stdout);
    assert_eq!(stdout(&one).lines().filter(|l| l.starts_with("check=")).count(), 10);
    assert_eq!(field(&one, "failed"), "0");
}
