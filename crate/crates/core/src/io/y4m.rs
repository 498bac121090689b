//! YUV4MPEG2 reader and 4:4:4 writer.
//!
//! Only 8-bit streams are supported. YCbCr is converted to RGB with the
//! full-range BT.601 (JFIF) matrix
//!
//! ```text
//! R = Y + 1.402    (V - 128)
//! G = Y - 0.344136 (U - 128) - 0.714136 (V - 128)
//! B = Y + 1.772    (U - 128)
//! ```
//!
//! and divided by 255, clamped to `[0, 1]`. 4:2:0 chroma is sited at the
//! centre of each 2x2 luma block and upsampled bilinearly.

use crate::error::{NciError, Result};
use crate::frames::FrameSequence;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Chroma {
    C444,
    C420,
    Mono,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Y4mHeader {
    pub width: usize,
    pub height: usize,
    pub fps_num: u32,
    pub fps_den: u32,
    pub chroma: Chroma,
}

impl Y4mHeader {
    pub fn fps(&self) -> f64 {
        self.fps_num as f64 / self.fps_den as f64
    }

    fn plane_sizes(&self) -> (usize, usize) {
        let luma = self.width * self.height;
        let chroma = match self.chroma {
            Chroma::C444 => luma,
            Chroma::C420 => self.width.div_ceil(2) * self.height.div_ceil(2),
            Chroma::Mono => 0,
        };
        (luma, chroma)
    }
}

fn parse_header(line: &str) -> Result<Y4mHeader> {
    let mut tokens = line.split(' ');
    if tokens.next() != Some("YUV4MPEG2") {
        return Err(NciError::at_byte(0, "missing YUV4MPEG2 magic"));
    }
    let mut offset = "YUV4MPEG2".len() as u64;
    let (mut width, mut height) = (None, None);
    let (mut num, mut den) = (30u32, 1u32);
    // The default when no C tag is present.
    let mut chroma = Chroma::C420;
    for tok in tokens {
        offset += 1;
        if tok.is_empty() {
            continue;
        }
        let (tag, val) = tok.split_at(1);
        let bad = |what: &str| NciError::at_byte(offset, format!("bad {what} '{tok}'"));
        match tag {
            "W" => width = Some(val.parse::<usize>().map_err(|_| bad("width"))?),
            "H" => height = Some(val.parse::<usize>().map_err(|_| bad("height"))?),
            "F" => {
                let (n, d) = val.split_once(':').ok_or_else(|| bad("frame rate"))?;
                num = n.parse().map_err(|_| bad("frame rate"))?;
                den = d.parse().map_err(|_| bad("frame rate"))?;
                if num == 0 || den == 0 {
                    return Err(bad("frame rate"));
                }
            }
            "C" => {
                chroma = match val {
                    "444" => Chroma::C444,
                    "420" | "420jpeg" | "420paldv" | "420mpeg2" => Chroma::C420,
                    "mono" => Chroma::Mono,
                    _ => return Err(NciError::at_byte(offset, format!("unknown chroma tag 'C{val}'"))),
                }
            }
            "I" | "A" | "X" => {}
            _ => return Err(bad("header token")),
        }
        offset += tok.len() as u64;
    }
    let width = width.ok_or_else(|| NciError::at_byte(0, "header lacks W"))?;
    let height = height.ok_or_else(|| NciError::at_byte(0, "header lacks H"))?;
    if width == 0 || height == 0 {
        return Err(NciError::at_byte(0, "zero frame dimension"));
    }
    Ok(Y4mHeader { width, height, fps_num: num, fps_den: den, chroma })
}

fn ycc_to_rgb(y: f64, u: f64, v: f64) -> [f64; 3] {
    let (u, v) = (u - 128.0, v - 128.0);
    [y + 1.402 * v, y - 0.344136 * u - 0.714136 * v, y + 1.772 * u].map(|c| (c / 255.0).clamp(0.0, 1.0))
}

/// Bilinear sample of a half-resolution chroma plane at luma pixel (x, y).
fn upsample(plane: &[u8], cw: usize, ch: usize, x: usize, y: usize) -> f64 {
    let fx = ((x as f64 + 0.5) / 2.0 - 0.5).clamp(0.0, (cw - 1) as f64);
    let fy = ((y as f64 + 0.5) / 2.0 - 0.5).clamp(0.0, (ch - 1) as f64);
    let (x0, y0) = (fx.floor() as usize, fy.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(cw - 1), (y0 + 1).min(ch - 1));
    let (ax, ay) = (fx - x0 as f64, fy - y0 as f64);
    let p = |xx: usize, yy: usize| plane[yy * cw + xx] as f64;
    let top = p(x0, y0) * (1.0 - ax) + p(x1, y0) * ax;
    let bottom = p(x0, y1) * (1.0 - ax) + p(x1, y1) * ax;
    top * (1.0 - ay) + bottom * ay
}

pub fn read_y4m(bytes: &[u8]) -> Result<FrameSequence> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| NciError::at_byte(bytes.len() as u64, "unterminated Y4M header"))?;
    let line = std::str::from_utf8(&bytes[..nl]).map_err(|_| NciError::at_byte(0, "non-ASCII Y4M header"))?;
    let header = parse_header(line)?;
    let (luma, chroma) = header.plane_sizes();
    let frame_bytes = luma + 2 * chroma;
    let (w, h) = (header.width, header.height);
    let (cw, ch) = (w.div_ceil(2), h.div_ceil(2));

    let mut pos = nl + 1;
    let mut data = Vec::new();
    let mut frames = 0usize;
    while pos < bytes.len() {
        if !bytes[pos..].starts_with(b"FRAME") {
            return Err(NciError::at_byte(pos as u64, format!("expected FRAME marker for frame {frames}")));
        }
        let marker_end = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| NciError::at_byte(pos as u64, format!("unterminated FRAME marker for frame {frames}")))?;
        pos += marker_end + 1;
        if bytes.len() - pos < frame_bytes {
            return Err(NciError::at_byte(
                bytes.len() as u64,
                format!("frame {frames} truncated: {} of {frame_bytes} bytes", bytes.len() - pos),
            ));
        }
        let payload = &bytes[pos..pos + frame_bytes];
        let (yp, rest) = payload.split_at(luma);
        let (up, vp) = rest.split_at(chroma);
        data.reserve(3 * luma);
        for y in 0..h {
            for x in 0..w {
                let yy = yp[y * w + x] as f64;
                let (u, v) = match header.chroma {
                    Chroma::C444 => (up[y * w + x] as f64, vp[y * w + x] as f64),
                    Chroma::C420 => (upsample(up, cw, ch, x, y), upsample(vp, cw, ch, x, y)),
                    Chroma::Mono => (128.0, 128.0),
                };
                data.extend(ycc_to_rgb(yy, u, v));
            }
        }
        pos += frame_bytes;
        frames += 1;
    }
    if frames == 0 {
        return Err(NciError::at_byte(pos as u64, "stream contains no frames"));
    }
    FrameSequence::new(frames, h, w, 3, header.fps(), data)
}

fn fps_rational(fps: f64) -> (u32, u32) {
    if (fps - fps.round()).abs() < 1e-9 {
        return (fps.round() as u32, 1);
    }
    let ntsc = fps * 1001.0;
    if (ntsc - ntsc.round()).abs() < 1e-6 {
        return (ntsc.round() as u32, 1001);
    }
    ((fps * 1000.0).round() as u32, 1000)
}

/// Write 8-bit 4:4:4. One-channel video is written as neutral-chroma gray.
pub fn write_y4m(video: &FrameSequence) -> Result<Vec<u8>> {
    if video.channels != 1 && video.channels != 3 {
        return Err(NciError::invalid(format!("Y4M needs 1 or 3 channels, got {}", video.channels)));
    }
    let (num, den) = fps_rational(video.fps);
    let mut out = format!("YUV4MPEG2 W{} H{} F{num}:{den} Ip A1:1 C444\n", video.width, video.height).into_bytes();
    let px = video.pixel_count();
    let q = |v: f64| v.round().clamp(0.0, 255.0) as u8;
    for t in 0..video.frames {
        out.extend_from_slice(b"FRAME\n");
        let frame = video.frame(t);
        let mut planes = vec![0u8; 3 * px];
        for i in 0..px {
            let (r, g, b) = if video.channels == 1 {
                let v = frame[i] * 255.0;
                (v, v, v)
            } else {
                (frame[3 * i] * 255.0, frame[3 * i + 1] * 255.0, frame[3 * i + 2] * 255.0)
            };
            planes[i] = q(0.299 * r + 0.587 * g + 0.114 * b);
            planes[px + i] = q(128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b);
            planes[2 * px + i] = q(128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b);
        }
        out.extend_from_slice(&planes);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn neutral_gray_444() {
        let mut b = b"YUV4MPEG2 W2 H2 F30:1 C444\nFRAME\n".to_vec();
        b.extend_from_slice(&[128; 12]);
        let v = read_y4m(&b).unwrap();
        assert_eq!((v.frames, v.height, v.width, v.channels), (1, 2, 2, 3));
        for s in &v.data {
            assert!((s - 0.502).abs() < 1e-3);
        }
    }

    #[test]
    fn ntsc_rate() {
        let mut b = b"YUV4MPEG2 W1 H1 F30000:1001 C444\nFRAME\n".to_vec();
        b.extend_from_slice(&[0, 128, 128]);
        assert!((read_y4m(&b).unwrap().fps - 29.97).abs() < 1e-3);
    }

    #[test]
    fn truncated_frame_names_index() {
        let mut b = b"YUV4MPEG2 W2 H2 F30:1 C444\nFRAME\n".to_vec();
        b.extend_from_slice(&[128; 12]);
        b.extend_from_slice(b"FRAME\n");
        b.extend_from_slice(&[128; 5]);
        let err = read_y4m(&b).unwrap_err().to_string();
        assert!(err.contains("frame 1"), "{err}");
    }

    #[test]
    fn unknown_chroma_and_trailing_garbage() {
        assert!(read_y4m(b"YUV4MPEG2 W2 H2 F30:1 C422\n").unwrap_err().to_string().contains("C422"));
        let mut b = b"YUV4MPEG2 W1 H1 F30:1 C444\nFRAME\n".to_vec();
        b.extend_from_slice(&[1, 2, 3, 9]);
        assert!(matches!(read_y4m(&b), Err(NciError::ParseByte { offset: 36, .. })));
    }

    #[test]
    fn chroma_420_upsampling_is_flat_for_flat_planes() {
        let mut b = b"YUV4MPEG2 W4 H2 F25:1 C420jpeg\nFRAME\n".to_vec();
        b.extend_from_slice(&[100; 8]);
        b.extend_from_slice(&[90, 90]);
        b.extend_from_slice(&[200, 200]);
        let v = read_y4m(&b).unwrap();
        let expect = ycc_to_rgb(100.0, 90.0, 200.0);
        for px in v.data.chunks(3) {
            for (a, e) in px.iter().zip(expect) {
                assert!((a - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn write_then_read_is_close() {
        let v = FrameSequence::new(2, 2, 3, 3, 30.0, (0..36).map(|i| (i as f64 * 0.027) % 1.0).collect()).unwrap();
        let back = read_y4m(&write_y4m(&v).unwrap()).unwrap();
        for (a, b) in v.data.iter().zip(&back.data) {
            assert!((a - b).abs() < 0.02, "{a} vs {b}");
        }
    }
}
