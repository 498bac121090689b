//! Synthetic coded video.
//!
//! A frame at capture time `t` is rendered as
//! `clean(x) = L(x) + sum_i c_i(t) * alpha_i(x)`, with scripted sprites
//! pasted over it. Sensor noise is Gaussian with per-sample standard
//! deviation `a + b * sqrt(clean)`: read noise plus a Gaussian stand-in for
//! photon shot noise, the same model the SNR predictor uses. The result is
//! clipped to `[0, 1]` (saturation), optionally gamma encoded, then
//! quantized by round-to-nearest.

mod scene_file;

use rayon::prelude::*;

use crate::codegen::CodeBank;
use crate::error::{NciError, Result};
use crate::frames::{FrameSequence, Image};
use crate::rng::{mix_seed, Xoshiro256StarStar};

pub use scene_file::{load_scene, parse_scene, SCENE_FILE_NAME};

/// Content pasted over the scene with its top-left corner at `path[t]`
/// (the last entry is held once the path runs out).
#[derive(Debug, Clone, PartialEq)]
pub struct Sprite {
    pub base: Image,
    /// Either empty (the sprite reflects no coded light) or one image per code.
    pub transport: Vec<Image>,
    pub path: Vec<(i64, i64)>,
}

impl Sprite {
    pub fn position(&self, t: usize) -> Option<(i64, i64)> {
        self.path.get(t).or(self.path.last()).copied()
    }
}

/// Uncoded light that fluctuates from frame to frame (clouds, foliage,
/// exposure hunting). Frame `t` adds `gain(x) * e_t` with `e_t` white
/// Gaussian of standard deviation `std`, shared by every pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct Ambient {
    pub gain: Image,
    pub std: f64,
    pub seed: u64,
}

impl Ambient {
    pub fn level(&self, t: u64) -> f64 {
        self.std * Xoshiro256StarStar::seed_from_u64(mix_seed(&[self.seed, t])).standard_normal()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneModel {
    /// Uncoded light `L(x)`.
    pub base: Image,
    /// Transfer coefficients `alpha_i(x)`, one per code.
    pub transport: Vec<Image>,
    pub sprites: Vec<Sprite>,
    pub ambient: Vec<Ambient>,
    /// Encoding exponent; output is `v^(1/gamma)`. `None` keeps video linear.
    pub gamma: Option<f64>,
}

impl SceneModel {
    pub fn new(base: Image, transport: Vec<Image>) -> Self {
        Self { base, transport, sprites: Vec::new(), ambient: Vec::new(), gamma: None }
    }

    pub fn validate(&self) -> Result<()> {
        for (i, t) in self.transport.iter().enumerate() {
            if !t.same_shape(&self.base) {
                return Err(NciError::invalid(format!(
                    "transport image {i} is {}x{}x{}, base is {}x{}x{}",
                    t.width, t.height, t.channels, self.base.width, self.base.height, self.base.channels
                )));
            }
        }
        for (s, sprite) in self.sprites.iter().enumerate() {
            if sprite.base.channels != self.base.channels {
                return Err(NciError::invalid(format!("sprite {s} channel count differs from the scene")));
            }
            if !sprite.transport.is_empty() && sprite.transport.len() != self.transport.len() {
                return Err(NciError::invalid(format!(
                    "sprite {s} has {} transport images, scene has {}",
                    sprite.transport.len(),
                    self.transport.len()
                )));
            }
            if sprite.transport.iter().any(|t| !t.same_shape(&sprite.base)) {
                return Err(NciError::invalid(format!("sprite {s} transport shape differs from its image")));
            }
            if sprite.path.is_empty() {
                return Err(NciError::invalid(format!("sprite {s} has an empty path")));
            }
        }
        for (i, a) in self.ambient.iter().enumerate() {
            if !a.gain.same_shape(&self.base) {
                return Err(NciError::invalid(format!("ambient {i} gain shape differs from the base image")));
            }
            if !(a.std >= 0.0 && a.std.is_finite()) {
                return Err(NciError::invalid(format!("ambient {i} std must be non-negative")));
            }
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0 && g.is_finite()) {
                return Err(NciError::invalid(format!("gamma must be positive, got {g}")));
            }
        }
        Ok(())
    }

    /// Largest `L + sum_i max|c_i| alpha_i` over the frame.
    pub fn peak_brightness(&self, code_peaks: &[f64]) -> f64 {
        let mut peak = f64::MIN;
        for (i, &l) in self.base.data.iter().enumerate() {
            let v = l + self.transport.iter().zip(code_peaks).map(|(t, p)| p * t.data[i]).sum::<f64>();
            peak = peak.max(v);
        }
        peak
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseParams {
    /// Read noise standard deviation `a`.
    pub read_std: f64,
    /// Photon noise coefficient `b` in `a + b * sqrt(L)`.
    pub photon_coeff: f64,
}

impl NoiseParams {
    pub const ZERO: NoiseParams = NoiseParams { read_std: 0.0, photon_coeff: 0.0 };

    pub fn std_at(&self, brightness: f64) -> f64 {
        self.read_std + self.photon_coeff * brightness.max(0.0).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub params: NoiseParams,
    /// Output bit depth; 0 disables quantization.
    pub quant_bits: u32,
    pub seed: u64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self { params: NoiseParams::ZERO, quant_bits: 8, seed: 0 }
    }
}

impl NoiseModel {
    /// No noise and no quantization.
    pub fn off() -> Self {
        Self { params: NoiseParams::ZERO, quant_bits: 0, seed: 0 }
    }

    pub fn new(read_std: f64, photon_coeff: f64, quant_bits: u32, seed: u64) -> Self {
        Self { params: NoiseParams { read_std, photon_coeff }, quant_bits, seed }
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.params;
        if !(p.read_std >= 0.0 && p.photon_coeff >= 0.0 && p.read_std.is_finite() && p.photon_coeff.is_finite()) {
            return Err(NciError::invalid("noise parameters must be finite and non-negative"));
        }
        if self.quant_bits > 16 {
            return Err(NciError::invalid(format!("quant_bits {} exceeds 16", self.quant_bits)));
        }
        Ok(())
    }
}

/// Render frames for capture times `[t0, t0 + frames)`.
pub fn render(
    scene: &SceneModel,
    bank: &CodeBank,
    noise: &NoiseModel,
    t0: u64,
    frames: usize,
) -> Result<FrameSequence> {
    scene.validate()?;
    noise.validate()?;
    if frames == 0 {
        return Err(NciError::invalid("frame count must be positive"));
    }
    if scene.transport.len() != bank.num_codes() {
        return Err(NciError::invalid(format!(
            "scene has {} transport images but the bank holds {} codes",
            scene.transport.len(),
            bank.num_codes()
        )));
    }
    let codes: Vec<Vec<f64>> =
        (0..bank.num_codes()).map(|i| bank.code_for_interval(t0, t0 + frames as u64, i)).collect::<Result<_>>()?;
    let peaks: Vec<f64> = codes.iter().map(|c| c.iter().fold(0.0f64, |m, v| m.max(v.abs()))).collect();
    let peak = scene.peak_brightness(&peaks);
    if peak > 1.1 {
        log::warn!("scene peaks at {peak:.3} relative brightness; expect clipping");
    }

    let base = &scene.base;
    let frame_len = base.data.len();
    let levels = if noise.quant_bits > 0 { ((1u32 << noise.quant_bits) - 1) as f64 } else { 0.0 };
    let inv_gamma = scene.gamma.map(|g| 1.0 / g);

    let rendered: Vec<Vec<f64>> = (0..frames)
        .into_par_iter()
        .map(|t| {
            let mut frame = base.data.clone();
            for (code, alpha) in codes.iter().zip(&scene.transport) {
                let c = code[t];
                for (v, a) in frame.iter_mut().zip(&alpha.data) {
                    *v += c * a;
                }
            }
            for amb in &scene.ambient {
                let e = amb.level(t0 + t as u64);
                for (v, g) in frame.iter_mut().zip(&amb.gain.data) {
                    *v += e * g;
                }
            }
            for sprite in &scene.sprites {
                paste_sprite(&mut frame, base, sprite, t, &codes);
            }
            let mut rng = Xoshiro256StarStar::seed_from_u64(mix_seed(&[noise.seed, t as u64]));
            for v in frame.iter_mut() {
                let std = noise.params.std_at(*v);
                if std > 0.0 {
                    *v += std * rng.standard_normal();
                }
                *v = v.clamp(0.0, 1.0);
                if let Some(g) = inv_gamma {
                    *v = v.powf(g);
                }
                if levels > 0.0 {
                    *v = (*v * levels).round() / levels;
                }
            }
            frame
        })
        .collect();

    let mut data = Vec::with_capacity(frames * frame_len);
    for f in rendered {
        data.extend(f);
    }
    Ok(FrameSequence::new(frames, base.height, base.width, base.channels, bank.spec().fps, data)?
        .with_provenance(format!("render t0={t0} frames={frames} noise_seed={}", noise.seed)))
}

fn paste_sprite(frame: &mut [f64], base: &Image, sprite: &Sprite, t: usize, codes: &[Vec<f64>]) {
    let Some((px, py)) = sprite.position(t) else { return };
    let img = &sprite.base;
    for sy in 0..img.height {
        let y = py + sy as i64;
        if y < 0 || y >= base.height as i64 {
            continue;
        }
        for sx in 0..img.width {
            let x = px + sx as i64;
            if x < 0 || x >= base.width as i64 {
                continue;
            }
            for c in 0..img.channels {
                let mut v = img.get(sx, sy, c);
                for (code, alpha) in codes.iter().zip(&sprite.transport) {
                    v += code[t] * alpha.get(sx, sy, c);
                }
                frame[base.index(x as usize, y as usize, c)] = v;
            }
        }
    }
}

/// Fit `std = a + b * sqrt(mean)` per channel from static flat-field
/// captures at different brightness levels.
///
/// Each sequence contributes one point per channel: the mean over pixels
/// of the per-pixel temporal mean, and the square root of the mean
/// per-pixel temporal variance. The fit is least squares constrained to
/// `a, b >= 0`.
pub fn fit_noise_from_flats(flats: &[FrameSequence]) -> Result<Vec<NoiseParams>> {
    let first = flats.first().ok_or_else(|| NciError::UnderDetermined("no flat-field sequences".into()))?;
    let channels = first.channels;
    let mut points: Vec<Vec<(f64, f64)>> = vec![Vec::new(); channels];
    for (s, seq) in flats.iter().enumerate() {
        if seq.channels != channels {
            return Err(NciError::invalid(format!("flat {s} has {} channels, expected {channels}", seq.channels)));
        }
        if seq.frames < 2 {
            return Err(NciError::invalid(format!("flat {s} needs at least two frames")));
        }
        let n = seq.frames as f64;
        for (c, pts) in points.iter_mut().enumerate() {
            let (mut mean_acc, mut var_acc) = (0.0, 0.0);
            for p in 0..seq.pixel_count() {
                let tr = seq.trace(p * channels + c);
                let m = tr.iter().sum::<f64>() / n;
                let v = tr.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
                mean_acc += m;
                var_acc += v;
            }
            let px = seq.pixel_count() as f64;
            pts.push(((mean_acc / px).max(0.0).sqrt(), (var_acc / px).sqrt()));
        }
    }
    points.into_iter().map(|pts| fit_line_nonneg(&pts)).collect()
}

fn fit_line_nonneg(pts: &[(f64, f64)]) -> Result<NoiseParams> {
    let mut levels: Vec<f64> = pts.iter().map(|p| p.0).collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup_by(|a, b| (*a - *b).abs() < 1e-6);
    if levels.len() < 3 {
        return Err(NciError::UnderDetermined(format!(
            "need at least 3 distinct brightness levels, got {}",
            levels.len()
        )));
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let det = n * sxx - sx * sx;
    let mut b = (n * sxy - sx * sy) / det;
    let mut a = (sy - b * sx) / n;
    if a < 0.0 {
        a = 0.0;
        b = (sxy / sxx).max(0.0);
    } else if b < 0.0 {
        b = 0.0;
        a = (sy / n).max(0.0);
    }
    Ok(NoiseParams { read_std: a, photon_coeff: b })
}
