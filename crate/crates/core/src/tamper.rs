//! Ground-truth video manipulations.
//!
//! Every edit returns the modified video together with an [`EditLog`] that
//! fully determines it: replaying the log on the original reproduces the
//! output bit for bit. Logs serialize to line-oriented text.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use crate::error::{NciError, Result};
use crate::frames::{FrameSequence, Image};

const LOG_HEADER: &str = "nci-editlog 1";

/// Default length of the cross-fade that stands in for a warp cut.
pub const DEFAULT_CROSSFADE: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl Rect {
    pub fn new(x: usize, y: usize, w: usize, h: usize) -> Self {
        Rect { x, y, w, h }
    }

    pub fn area(&self) -> usize {
        self.w * self.h
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x && x < self.x + self.w && y >= self.y && y < self.y + self.h
    }

    fn fits(&self, width: usize, height: usize) -> bool {
        self.x + self.w <= width && self.y + self.h <= height
    }
}

/// Content pasted by a composite.
#[derive(Debug, Clone, PartialEq)]
pub enum Patch {
    /// A flat colour, one value per channel, or a single value for all.
    Fill(Vec<f64>),
    /// The region at `(x, y)` of original frame `frame`, held still.
    Still { frame: usize, x: usize, y: usize },
    /// The region at `(x, y)` of the same frame (copy-move). With `(x, y)`
    /// equal to the target corner this reproduces the original pixels.
    Moving { x: usize, y: usize },
    /// A static image the size of the target rectangle.
    Image(Image),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Edit {
    /// Frames `t_start .. t_start + n_removed` are dropped. With a
    /// cross-fade of `c` frames, the first `c` frames after the seam are
    /// replaced by linear blends of the last frame before it and the first
    /// frame after the blend.
    Cut {
        t_start: usize,
        n_removed: usize,
        crossfade: usize,
    },
    /// Concatenation of the listed frame ranges.
    Splice {
        segments: Vec<Range<usize>>,
    },
    /// Linear-interpolation resampling of `range` by speed factor `rho`:
    /// output frame `j` of the range shows source position `start + j * rho`.
    Retime {
        rho: f64,
        range: Range<usize>,
    },
    Composite {
        rect: Rect,
        frames: Range<usize>,
        patch: Patch,
    },
}

/// Ordered list of edits.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EditLog {
    pub edits: Vec<Edit>,
}

fn check_range(r: &Range<usize>, frames: usize, what: &str) -> Result<()> {
    if r.start > r.end || r.end > frames {
        return Err(NciError::invalid(format!("{what} {}..{} outside a {frames}-frame video", r.start, r.end)));
    }
    Ok(())
}

fn assemble(template: &FrameSequence, frames: Vec<Vec<f64>>) -> Result<FrameSequence> {
    if frames.is_empty() {
        return Err(NciError::invalid("edit leaves no frames"));
    }
    let n = frames.len();
    let data = frames.concat();
    FrameSequence::new(n, template.height, template.width, template.channels, template.fps, data)
}

/// Output length of a retime of `len` frames.
pub fn retimed_len(len: usize, rho: f64) -> usize {
    (len as f64 / rho).round() as usize
}

impl Edit {
    /// Apply this edit to `video`.
    pub fn apply(&self, video: &FrameSequence) -> Result<FrameSequence> {
        let t = video.frames;
        let out = match self {
            Edit::Cut { t_start, n_removed, crossfade } => {
                let (s, n) = (*t_start, *n_removed);
                check_range(&(s..s + n), t, "cut")?;
                if n == 0 {
                    return Ok(video.clone());
                }
                let mut frames: Vec<Vec<f64>> =
                    (0..t).filter(|&i| i < s || i >= s + n).map(|i| video.frame(i).to_vec()).collect();
                let c = *crossfade;
                if c > 0 {
                    if s == 0 || s + n + c >= t {
                        return Err(NciError::invalid(format!(
                            "cross-fade of {c} frames needs a frame on each side of the seam at {s}"
                        )));
                    }
                    let a = video.frame(s - 1);
                    let b = video.frame(s + n + c);
                    for i in 0..c {
                        let lam = (i + 1) as f64 / (c + 1) as f64;
                        frames[s + i] = a.iter().zip(b).map(|(x, y)| (1.0 - lam) * x + lam * y).collect();
                    }
                }
                assemble(video, frames)?
            }
            Edit::Splice { segments } => {
                let mut frames = Vec::new();
                for seg in segments {
                    check_range(seg, t, "segment")?;
                    frames.extend(seg.clone().map(|i| video.frame(i).to_vec()));
                }
                assemble(video, frames)?
            }
            Edit::Retime { rho, range } => {
                if !(*rho > 0.0) || !rho.is_finite() {
                    return Err(NciError::invalid(format!("speed factor must be positive, got {rho}")));
                }
                check_range(range, t, "retime range")?;
                let len = range.len();
                let mut frames: Vec<Vec<f64>> = (0..range.start).map(|i| video.frame(i).to_vec()).collect();
                if len > 0 {
                    for j in 0..retimed_len(len, *rho) {
                        let p = (j as f64 * rho).min((len - 1) as f64);
                        let i0 = p.floor() as usize;
                        let f = p - i0 as f64;
                        let a = video.frame(range.start + i0);
                        if f == 0.0 {
                            frames.push(a.to_vec());
                        } else {
                            let b = video.frame(range.start + i0 + 1);
                            frames.push(a.iter().zip(b).map(|(x, y)| (1.0 - f) * x + f * y).collect());
                        }
                    }
                }
                frames.extend((range.end..t).map(|i| video.frame(i).to_vec()));
                assemble(video, frames)?
            }
            Edit::Composite { rect, frames: span, patch } => {
                check_range(span, t, "composite frames")?;
                if !rect.fits(video.width, video.height) {
                    return Err(NciError::invalid(format!(
                        "rectangle {rect:?} outside {}x{} frame",
                        video.width, video.height
                    )));
                }
                let ch = video.channels;
                let source_fits = |x: usize, y: usize| Rect::new(x, y, rect.w, rect.h).fits(video.width, video.height);
                match patch {
                    Patch::Fill(v) if v.len() != ch && v.len() != 1 => {
                        return Err(NciError::invalid(format!("fill has {} values for {ch} channels", v.len())))
                    }
                    Patch::Still { frame, x, y } if *frame >= t || !source_fits(*x, *y) => {
                        return Err(NciError::invalid("still patch source outside the video"))
                    }
                    Patch::Moving { x, y } if !source_fits(*x, *y) => {
                        return Err(NciError::invalid("moving patch source outside the frame"))
                    }
                    Patch::Image(img) if img.width != rect.w || img.height != rect.h || img.channels != ch => {
                        return Err(NciError::invalid("patch image does not match the rectangle"))
                    }
                    _ => {}
                }
                let mut out = video.clone();
                let stride = video.width * ch;
                for f in span.clone() {
                    for dy in 0..rect.h {
                        for dx in 0..rect.w {
                            for c in 0..ch {
                                let v = match patch {
                                    Patch::Fill(v) => v[c.min(v.len() - 1)],
                                    Patch::Still { frame, x, y } => {
                                        video.frame(*frame)[(y + dy) * stride + (x + dx) * ch + c]
                                    }
                                    Patch::Moving { x, y } => video.frame(f)[(y + dy) * stride + (x + dx) * ch + c],
                                    Patch::Image(img) => img.get(dx, dy, c),
                                };
                                out.frame_mut(f)[(rect.y + dy) * stride + (rect.x + dx) * ch + c] = v;
                            }
                        }
                    }
                }
                out
            }
        };
        Ok(out.with_provenance(format!("{}; {}", video.provenance, self)))
    }

    /// Map an output frame back to a (fractional) source frame. Returns
    /// `None` for synthesized frames and indices past the end.
    pub fn source_position(&self, input_frames: usize, j: usize) -> Option<f64> {
        match self {
            Edit::Cut { t_start, n_removed, crossfade } => {
                let out_len = input_frames - n_removed;
                if j >= out_len {
                    None
                } else if j < *t_start || *n_removed == 0 {
                    Some(j as f64)
                } else if j < t_start + crossfade {
                    None
                } else {
                    Some((j + n_removed) as f64)
                }
            }
            Edit::Splice { segments } => {
                let mut base = 0;
                for seg in segments {
                    if j < base + seg.len() {
                        return Some((seg.start + j - base) as f64);
                    }
                    base += seg.len();
                }
                None
            }
            Edit::Retime { rho, range } => {
                let out = retimed_len(range.len(), *rho);
                if j < range.start {
                    Some(j as f64)
                } else if j < range.start + out {
                    Some(
                        range.start as f64 + ((j - range.start) as f64 * rho).min(range.len().saturating_sub(1) as f64),
                    )
                } else {
                    let k = j - out + range.len();
                    (k < input_frames).then_some(k as f64)
                }
            }
            Edit::Composite { .. } => (j < input_frames).then_some(j as f64),
        }
    }

    /// Number of output frames for an input of `input_frames`.
    pub fn output_len(&self, input_frames: usize) -> usize {
        match self {
            Edit::Cut { n_removed, .. } => input_frames - n_removed,
            Edit::Splice { segments } => segments.iter().map(|s| s.len()).sum(),
            Edit::Retime { rho, range } => input_frames - range.len() + retimed_len(range.len(), *rho),
            Edit::Composite { .. } => input_frames,
        }
    }
}

pub fn cut(
    video: &FrameSequence,
    t_start: usize,
    n_removed: usize,
    crossfade: usize,
) -> Result<(FrameSequence, EditLog)> {
    single(video, Edit::Cut { t_start, n_removed, crossfade })
}

pub fn splice(video: &FrameSequence, segments: &[Range<usize>]) -> Result<(FrameSequence, EditLog)> {
    single(video, Edit::Splice { segments: segments.to_vec() })
}

/// Retime `range` (the whole video when `None`) by speed factor `rho`.
pub fn retime(video: &FrameSequence, rho: f64, range: Option<Range<usize>>) -> Result<(FrameSequence, EditLog)> {
    let range = range.unwrap_or(0..video.frames);
    single(video, Edit::Retime { rho, range })
}

pub fn composite(
    video: &FrameSequence,
    patch: Patch,
    rect: Rect,
    frames: Range<usize>,
) -> Result<(FrameSequence, EditLog)> {
    single(video, Edit::Composite { rect, frames, patch })
}

fn single(video: &FrameSequence, edit: Edit) -> Result<(FrameSequence, EditLog)> {
    let out = edit.apply(video)?;
    Ok((out, EditLog { edits: vec![edit] }))
}

impl EditLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Append the edits of `next`, which were applied after these.
    pub fn then(mut self, next: EditLog) -> Self {
        self.edits.extend(next.edits);
        self
    }

    /// Reapply every edit in order.
    pub fn replay(&self, original: &FrameSequence) -> Result<FrameSequence> {
        let mut v = original.clone();
        for e in &self.edits {
            v = e.apply(&v)?;
        }
        Ok(v)
    }

    /// Source frame (in the original video) shown at output frame `j`.
    pub fn source_position(&self, original_frames: usize, j: usize) -> Option<f64> {
        let mut lens = vec![original_frames];
        for e in &self.edits {
            lens.push(e.output_len(*lens.last().unwrap()));
        }
        let mut pos = j as f64;
        for (e, &len) in self.edits.iter().zip(&lens).rev() {
            // Positions are integral except after a retime; interpolate
            // through later edits by their floor.
            let frac = pos - pos.floor();
            pos = e.source_position(len, pos.floor() as usize)? + frac;
        }
        Some(pos)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from(LOG_HEADER);
        s.push('\n');
        for e in &self.edits {
            s.push_str(&e.to_string());
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'));
        match lines.next() {
            Some((_, l)) if l.trim() == LOG_HEADER => {}
            Some((i, _)) => return Err(NciError::at_line(i + 1, format!("expected '{LOG_HEADER}'"))),
            None => return Err(NciError::at_line(1, "empty edit log")),
        }
        let edits =
            lines.map(|(i, l)| parse_edit(l).map_err(|m| NciError::at_line(i + 1, m))).collect::<Result<_>>()?;
        Ok(EditLog { edits })
    }
}

fn fmt_range(r: &Range<usize>) -> String {
    format!("{}..{}", r.start, r.end)
}

impl fmt::Display for Edit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Edit::Cut { t_start, n_removed, crossfade } => {
                write!(f, "cut t_start={t_start} n_removed={n_removed} crossfade={crossfade}")
            }
            Edit::Splice { segments } => {
                let segs: Vec<String> = segments.iter().map(fmt_range).collect();
                write!(f, "splice segments={}", segs.join(","))
            }
            Edit::Retime { rho, range } => write!(f, "retime rho={rho} range={}", fmt_range(range)),
            Edit::Composite { rect, frames, patch } => {
                write!(
                    f,
                    "composite rect={},{},{},{} frames={} patch=",
                    rect.x,
                    rect.y,
                    rect.w,
                    rect.h,
                    fmt_range(frames)
                )?;
                match patch {
                    Patch::Fill(v) => {
                        let vals: Vec<String> = v.iter().map(|x| x.to_string()).collect();
                        write!(f, "fill:{}", vals.join(","))
                    }
                    Patch::Still { frame, x, y } => write!(f, "still:{frame},{x},{y}"),
                    Patch::Moving { x, y } => write!(f, "moving:{x},{y}"),
                    Patch::Image(img) => {
                        let vals: Vec<String> = img.data.iter().map(|x| x.to_string()).collect();
                        write!(f, "image:{}x{}x{}:{}", img.width, img.height, img.channels, vals.join(","))
                    }
                }
            }
        }
    }
}

fn num<T: FromStr>(s: &str, what: &str) -> std::result::Result<T, String> {
    s.trim().parse().map_err(|_| format!("bad {what} '{s}'"))
}

fn parse_range(s: &str) -> std::result::Result<Range<usize>, String> {
    let (a, b) = s.split_once("..").ok_or_else(|| format!("bad range '{s}'"))?;
    let r = num(a, "range start")?..num(b, "range end")?;
    if r.start > r.end {
        return Err(format!("reversed range '{s}'"));
    }
    Ok(r)
}

fn list<T: FromStr>(s: &str, what: &str) -> std::result::Result<Vec<T>, String> {
    s.split(',').map(|p| num(p, what)).collect()
}

fn parse_edit(line: &str) -> std::result::Result<Edit, String> {
    let mut words = line.split_whitespace();
    let kind = words.next().ok_or("empty record")?;
    let mut fields = std::collections::BTreeMap::new();
    for w in words {
        let (k, v) = w.split_once('=').ok_or_else(|| format!("expected key=value, got '{w}'"))?;
        if fields.insert(k, v).is_some() {
            return Err(format!("duplicate key '{k}'"));
        }
    }
    let mut take = |k: &str| fields.remove(k).ok_or_else(|| format!("{kind}: missing '{k}'"));
    let edit = match kind {
        "cut" => Edit::Cut {
            t_start: num(take("t_start")?, "t_start")?,
            n_removed: num(take("n_removed")?, "n_removed")?,
            crossfade: num(take("crossfade")?, "crossfade")?,
        },
        "splice" => {
            let segs = take("segments")?;
            let segments = if segs.is_empty() {
                Vec::new()
            } else {
                segs.split(',').map(parse_range).collect::<std::result::Result<_, _>>()?
            };
            Edit::Splice { segments }
        }
        "retime" => Edit::Retime { rho: num(take("rho")?, "rho")?, range: parse_range(take("range")?)? },
        "composite" => {
            let r: Vec<usize> = list(take("rect")?, "rect")?;
            if r.len() != 4 {
                return Err("rect needs x,y,w,h".into());
            }
            let frames = parse_range(take("frames")?)?;
            let p = take("patch")?;
            let (pk, pv) = p.split_once(':').ok_or_else(|| format!("bad patch '{p}'"))?;
            let patch = match pk {
                "fill" => Patch::Fill(list(pv, "fill value")?),
                "still" => match list::<usize>(pv, "still")?[..] {
                    [frame, x, y] => Patch::Still { frame, x, y },
                    _ => return Err("still needs frame,x,y".into()),
                },
                "moving" => match list::<usize>(pv, "moving")?[..] {
                    [x, y] => Patch::Moving { x, y },
                    _ => return Err("moving needs x,y".into()),
                },
                "image" => {
                    let (dims, vals) = pv.split_once(':').ok_or("image needs WxHxC:values")?;
                    let d: Vec<usize> =
                        dims.split('x').map(|v| num(v, "image size")).collect::<std::result::Result<_, _>>()?;
                    if d.len() != 3 {
                        return Err(format!("bad image size '{dims}'"));
                    }
                    let img = Image::new(d[0], d[1], d[2], list(vals, "pixel")?).map_err(|e| e.to_string())?;
                    Patch::Image(img)
                }
                _ => return Err(format!("unknown patch kind '{pk}'")),
            };
            Edit::Composite { rect: Rect::new(r[0], r[1], r[2], r[3]), frames, patch }
        }
        _ => return Err(format!("unknown edit '{kind}'")),
    };
    if let Some(k) = fields.keys().next() {
        return Err(format!("{kind}: unexpected key '{k}'"));
    }
    Ok(edit)
}
