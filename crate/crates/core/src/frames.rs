//! Dense image and video containers.
//!
//! Samples are `f64` relative brightness, stored row-major with channels
//! innermost: image index `(y * width + x) * channels + c`, video index
//! `((t * height + y) * width + x) * channels + c`.

use crate::error::{NciError, Result};

/// Rec. 601 luma weights.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 {
            return Err(NciError::invalid("image must have at least one channel"));
        }
        if data.len() != width * height * channels {
            return Err(NciError::invalid(format!(
                "image data length {} does not match {width}x{height}x{channels}",
                data.len()
            )));
        }
        Ok(Self { width, height, channels, data })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Self {
        Self { width, height, channels, data: vec![value; width * height * channels] }
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(x, y, c));
                }
            }
        }
        Self { width, height, channels, data }
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[self.index(x, y, c)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f64) {
        let i = self.index(x, y, c);
        self.data[i] = v;
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    /// Per-pixel luminance. Single-channel images are returned as-is;
    /// three-channel images use Rec. 601 weights; otherwise the channel mean.
    pub fn luminance(&self) -> Vec<f64> {
        self.data
            .chunks_exact(self.channels)
            .map(|px| match px.len() {
                1 => px[0],
                3 => px.iter().zip(LUMA_WEIGHTS).map(|(v, w)| v * w).sum(),
                n => px.iter().sum::<f64>() / n as f64,
            })
            .collect()
    }

    /// Box-average downsample by `factor` per axis; trailing rows and
    /// columns that do not fill a whole block are dropped.
    pub fn downsample(&self, factor: usize) -> Image {
        if factor <= 1 {
            return self.clone();
        }
        let (w, h) = (self.width / factor, self.height / factor);
        let norm = 1.0 / (factor * factor) as f64;
        Image::from_fn(w, h, self.channels, |x, y, c| {
            let mut acc = 0.0;
            for dy in 0..factor {
                for dx in 0..factor {
                    acc += self.get(x * factor + dx, y * factor + dy, c);
                }
            }
            acc * norm
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub fps: f64,
    pub data: Vec<f64>,
    pub provenance: String,
}

impl FrameSequence {
    pub fn new(frames: usize, height: usize, width: usize, channels: usize, fps: f64, data: Vec<f64>) -> Result<Self> {
        if frames == 0 {
            return Err(NciError::invalid("a frame sequence needs at least one frame"));
        }
        if channels == 0 {
            return Err(NciError::invalid("frames must have at least one channel"));
        }
        if data.len() != frames * height * width * channels {
            return Err(NciError::invalid(format!(
                "video data length {} does not match {frames}x{height}x{width}x{channels}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(NciError::invalid(format!("non-finite sample at index {i}")));
        }
        Ok(Self { frames, height, width, channels, fps, data, provenance: String::new() })
    }

    pub fn from_frames(frames: &[Image], fps: f64) -> Result<Self> {
        let first = frames.first().ok_or_else(|| NciError::invalid("a frame sequence needs at least one frame"))?;
        let mut data = Vec::with_capacity(frames.len() * first.data.len());
        for (t, f) in frames.iter().enumerate() {
            if !f.same_shape(first) {
                return Err(NciError::invalid(format!("frame {t} has a different shape")));
            }
            data.extend_from_slice(&f.data);
        }
        Self::new(frames.len(), first.height, first.width, first.channels, fps, data)
    }

    pub fn with_provenance(mut self, note: impl Into<String>) -> Self {
        self.provenance = note.into();
        self
    }

    pub fn frame_len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        let n = self.frame_len();
        &self.data[t * n..(t + 1) * n]
    }

    pub fn frame_mut(&mut self, t: usize) -> &mut [f64] {
        let n = self.frame_len();
        &mut self.data[t * n..(t + 1) * n]
    }

    pub fn frame_image(&self, t: usize) -> Image {
        Image { width: self.width, height: self.height, channels: self.channels, data: self.frame(t).to_vec() }
    }

    /// Sample `(x, y, c)` across all frames.
    pub fn trace(&self, sample: usize) -> Vec<f64> {
        let n = self.frame_len();
        (0..self.frames).map(|t| self.data[t * n + sample]).collect()
    }

    /// Mean over all pixels and channels of every frame.
    pub fn spatial_mean(&self) -> Vec<f64> {
        let n = self.frame_len() as f64;
        (0..self.frames).map(|t| self.frame(t).iter().sum::<f64>() / n).collect()
    }

    /// Frames `[t0, t1)` as a new sequence.
    pub fn slice_frames(&self, t0: usize, t1: usize) -> Result<FrameSequence> {
        if t0 >= t1 || t1 > self.frames {
            return Err(NciError::invalid(format!("frame range {t0}..{t1} outside 0..{}", self.frames)));
        }
        let n = self.frame_len();
        Ok(FrameSequence {
            frames: t1 - t0,
            height: self.height,
            width: self.width,
            channels: self.channels,
            fps: self.fps,
            data: self.data[t0 * n..t1 * n].to_vec(),
            provenance: self.provenance.clone(),
        })
    }

    /// Box-average every frame by `factor` per axis.
    pub fn downsample(&self, factor: usize) -> FrameSequence {
        if factor <= 1 {
            return self.clone();
        }
        let mut data = Vec::new();
        let mut dims = (0, 0);
        for t in 0..self.frames {
            let img = self.frame_image(t).downsample(factor);
            dims = (img.width, img.height);
            data.extend(img.data);
        }
        FrameSequence {
            frames: self.frames,
            height: dims.1,
            width: dims.0,
            channels: self.channels,
            fps: self.fps,
            data,
            provenance: self.provenance.clone(),
        }
    }

    /// Rebuild a sequence from per-sample traces (the transpose of
    /// [`FrameSequence::trace`]).
    pub(crate) fn from_traces(template: &FrameSequence, traces: &[Vec<f64>]) -> FrameSequence {
        let n = template.frame_len();
        let mut data = vec![0.0; template.data.len()];
        for (s, tr) in traces.iter().enumerate() {
            for (t, v) in tr.iter().enumerate() {
                data[t * n + s] = *v;
            }
        }
        FrameSequence { data, ..template.clone() }
    }
}
