//! Scene description directories.
//!
//! A scene directory holds `scene.txt` plus the images it names. Lines are
//! `key = value`; `#` starts a comment. Image values are NetPBM paths
//! relative to the directory, or `const:<v>` for a flat image (which needs
//! `size`).
//!
//! | key | meaning |
//! |-----|---------|
//! | `size` | `WxHxC`, required when any image is `const:` |
//! | `base` | uncoded light `L(x)` |
//! | `transport.<i>` | transfer image for code `i`, `i = 0..k` contiguous |
//! | `gamma` | optional encode exponent |
//! | `sprite.<j>.image` | sprite content |
//! | `sprite.<j>.size` | `WxH` for a `const:` sprite image |
//! | `sprite.<j>.transport.<i>` | optional sprite transfer images |
//! | `sprite.<j>.path` | space-separated `x,y` top-left positions per frame |
//! | `sprite.<j>.start`, `.velocity`, `.frames` | alternative linear path |
//! | `ambient.<j>.image` | gain of a fluctuating uncoded light |
//! | `ambient.<j>.std`, `.seed` | its per-frame standard deviation and seed |

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::{Ambient, SceneModel, Sprite};
use crate::error::{NciError, Result};
use crate::frames::Image;
use crate::io::read_netpbm;

pub const SCENE_FILE_NAME: &str = "scene.txt";

pub fn load_scene(dir: &Path) -> Result<SceneModel> {
    let text = fs::read_to_string(dir.join(SCENE_FILE_NAME))?;
    parse_scene(&text, |name| {
        let bytes = fs::read(dir.join(name))?;
        read_netpbm(&bytes)
    })
}

fn parse_pair(line: usize, s: &str) -> Result<(i64, i64)> {
    let (x, y) = s.split_once(',').ok_or_else(|| NciError::at_line(line, format!("expected x,y but found '{s}'")))?;
    let p = |v: &str| v.trim().parse::<i64>().map_err(|_| NciError::at_line(line, format!("bad integer '{v}'")));
    Ok((p(x)?, p(y)?))
}

fn parse_dims(line: usize, s: &str) -> Result<Vec<usize>> {
    s.split('x')
        .map(|d| d.trim().parse::<usize>().map_err(|_| NciError::at_line(line, format!("bad size '{s}'"))))
        .collect()
}

/// Parse scene text; `load` resolves image file names.
pub fn parse_scene(text: &str, mut load: impl FnMut(&str) -> Result<Image>) -> Result<SceneModel> {
    let mut entries: BTreeMap<String, (usize, String)> = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| NciError::at_line(idx + 1, format!("expected key = value, found '{line}'")))?;
        if entries.insert(k.trim().to_string(), (idx + 1, v.trim().to_string())).is_some() {
            return Err(NciError::at_line(idx + 1, format!("duplicate key '{}'", k.trim())));
        }
    }

    let size = match entries.get("size") {
        Some((line, v)) => {
            let d = parse_dims(*line, v)?;
            if d.len() != 3 {
                return Err(NciError::at_line(*line, "size must be WxHxC"));
            }
            Some((*line, d[0], d[1], d[2]))
        }
        None => None,
    };
    let mut image = |key: &str, dims: Option<(usize, usize, usize)>| -> Result<Option<Image>> {
        let Some((line, v)) = entries.get(key) else { return Ok(None) };
        if let Some(c) = v.strip_prefix("const:") {
            let val: f64 = c.trim().parse().map_err(|_| NciError::at_line(*line, format!("bad constant '{c}'")))?;
            let (w, h, ch) =
                dims.ok_or_else(|| NciError::at_line(*line, format!("'{key}' is const: but no size given")))?;
            Ok(Some(Image::filled(w, h, ch, val)))
        } else {
            load(v).map(Some).map_err(|e| NciError::at_line(*line, format!("{key}: {e}")))
        }
    };

    let scene_dims = size.map(|(_, w, h, c)| (w, h, c));
    let base = image("base", scene_dims)?.ok_or_else(|| NciError::at_line(0, "scene lacks 'base'"))?;
    let mut transport = Vec::new();
    while let Some(t) =
        image(&format!("transport.{}", transport.len()), Some((base.width, base.height, base.channels)))?
    {
        transport.push(t);
    }
    let gamma = match entries.get("gamma") {
        Some((line, v)) => Some(v.parse::<f64>().map_err(|_| NciError::at_line(*line, format!("bad gamma '{v}'")))?),
        None => None,
    };

    let mut sprites = Vec::new();
    loop {
        let j = sprites.len();
        let prefix = format!("sprite.{j}.");
        if !entries.contains_key(&format!("{prefix}image")) {
            break;
        }
        let sprite_dims = match entries.get(&format!("{prefix}size")) {
            Some((line, v)) => {
                let d = parse_dims(*line, v)?;
                if d.len() != 2 {
                    return Err(NciError::at_line(*line, "sprite size must be WxH"));
                }
                Some((d[0], d[1], base.channels))
            }
            None => None,
        };
        let img = image(&format!("{prefix}image"), sprite_dims)?.expect("checked above");
        let mut st = Vec::new();
        while let Some(t) =
            image(&format!("{prefix}transport.{}", st.len()), Some((img.width, img.height, img.channels)))?
        {
            st.push(t);
        }
        let path = if let Some((line, v)) = entries.get(&format!("{prefix}path")) {
            v.split_whitespace().map(|p| parse_pair(*line, p)).collect::<Result<Vec<_>>>()?
        } else {
            let get = |k: &str| entries.get(&format!("{prefix}{k}"));
            let (line, start) =
                get("start").ok_or_else(|| NciError::at_line(0, format!("{prefix}path or {prefix}start required")))?;
            let start = parse_pair(*line, start)?;
            let vel = match get("velocity") {
                Some((l, v)) => parse_pair(*l, v)?,
                None => (0, 0),
            };
            let frames = match get("frames") {
                Some((l, v)) => {
                    v.parse::<usize>().map_err(|_| NciError::at_line(*l, format!("bad frame count '{v}'")))?
                }
                None => 1,
            };
            (0..frames as i64).map(|t| (start.0 + vel.0 * t, start.1 + vel.1 * t)).collect()
        };
        sprites.push(Sprite { base: img, transport: st, path });
    }

    let mut ambient = Vec::new();
    loop {
        let prefix = format!("ambient.{}.", ambient.len());
        let Some(gain) = image(&format!("{prefix}image"), Some((base.width, base.height, base.channels)))? else {
            break;
        };
        let get = |k: &str| entries.get(&format!("{prefix}{k}"));
        let std = match get("std") {
            Some((l, v)) => v.parse::<f64>().map_err(|_| NciError::at_line(*l, format!("bad std '{v}'")))?,
            None => return Err(NciError::at_line(0, format!("{prefix}std required"))),
        };
        let seed = match get("seed") {
            Some((l, v)) => v.parse::<u64>().map_err(|_| NciError::at_line(*l, format!("bad seed '{v}'")))?,
            None => 0,
        };
        ambient.push(Ambient { gain, std, seed });
    }

    for (key, (line, _)) in &entries {
        if !key_is_used(key, transport.len(), &sprites, ambient.len()) {
            return Err(NciError::at_line(*line, format!("unknown or out-of-sequence key '{key}'")));
        }
    }
    if let Some((line, ..)) = size {
        if base.width != scene_dims.unwrap().0 || base.height != scene_dims.unwrap().1 {
            return Err(NciError::at_line(line, "size disagrees with the base image"));
        }
    }

    let scene = SceneModel { base, transport, sprites, ambient, gamma };
    scene.validate()?;
    Ok(scene)
}

/// Whether `key` was consumed. Indexed keys must fall inside the
/// contiguous run that was read, so `transport.2` without `transport.1`
/// is rejected rather than dropped.
fn key_is_used(key: &str, transports: usize, sprites: &[Sprite], ambients: usize) -> bool {
    let index = |s: &str| s.parse::<usize>().ok();
    let mut parts = key.splitn(3, '.');
    match (parts.next(), parts.next(), parts.next()) {
        (Some("size" | "base" | "gamma"), None, None) => true,
        (Some("transport"), Some(i), None) => index(i).is_some_and(|i| i < transports),
        (Some("ambient"), Some(j), Some("image" | "std" | "seed")) => index(j).is_some_and(|j| j < ambients),
        (Some("sprite"), Some(j), Some(field)) => {
            let Some(sprite) = index(j).and_then(|j| sprites.get(j)) else { return false };
            match field.split_once('.') {
                Some(("transport", i)) => index(i).is_some_and(|i| i < sprite.transport.len()),
                None => matches!(field, "image" | "size" | "path" | "start" | "velocity" | "frames"),
                _ => false,
            }
        }
        _ => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_scene_with_linear_sprite() {
        let text = "size = 8x4x1\nbase = const:0.3\ntransport.0 = const:0.5\ntransport.1 = const:0.1\n\
                    sprite.0.image = const:0.9\nsprite.0.size = 2x2\nsprite.0.start = 0,1\nsprite.0.velocity = 1,0\nsprite.0.frames = 5\n";
        let s = parse_scene(text, |_| unreachable!()).unwrap();
        assert_eq!(s.transport.len(), 2);
        assert_eq!(s.sprites[0].path[4], (4, 1));
        assert_eq!(s.sprites[0].base.width, 2);
    }

    #[test]
    fn loads_named_images() {
        let text = "base = base.pgm # comment\ntransport.0 = t.pgm\ngamma = 2.2\n";
        let s =
            parse_scene(text, |name| Ok(Image::filled(3, 2, 1, if name == "base.pgm" { 0.2 } else { 0.4 }))).unwrap();
        assert_eq!(s.base.data[0], 0.2);
        assert_eq!(s.transport[0].data[0], 0.4);
        assert_eq!(s.gamma, Some(2.2));
        assert!(s.ambient.is_empty());
    }

    #[test]
    fn ambient_light_keys() {
        let text =
            "size = 4x4x1\nbase = const:0.3\nambient.0.image = const:0.5\nambient.0.std = 0.02\nambient.0.seed = 9\n";
        let s = parse_scene(text, |_| unreachable!()).unwrap();
        assert_eq!(s.ambient.len(), 1);
        assert_eq!((s.ambient[0].std, s.ambient[0].seed), (0.02, 9));
        assert!(
            parse_scene("size = 4x4x1\nbase = const:0.3\nambient.0.image = const:0.5\n", |_| unreachable!()).is_err()
        );
    }

    #[test]
    fn errors_carry_line_numbers() {
        match parse_scene("size = 2x2x1\nbase = const:0.1\nbogus = 1\n", |_| unreachable!()) {
            Err(NciError::ParseLine { line: 3, .. }) => {}
            other => panic!("{other:?}"),
        }
        assert!(parse_scene("base = const:0.1\n", |_| unreachable!()).is_err());
    }
}
