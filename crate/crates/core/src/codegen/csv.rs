//! Code bank text format.
//!
//! ```text
//! # fps=30
//! # segment_len=256
//! # band_lo=2
//! # band_hi=9
//! # num_codes=2
//! # master_seed=42
//! # amplitude_scale=0.002
//! # first_segment=0
//! # flicker=1:0.2,2:0.3,...
//! 0.0012,-0.0004
//! ...
//! ```
//!
//! One row per frame, one column per code. Samples are written with the
//! shortest representation that parses back to the same `f64`.
//! `first_segment` and `flicker` are optional on input.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use super::{CodeBank, CodeSpec, FlickerTable};
use crate::error::{NciError, Result};

pub fn write_code_csv<W: Write>(bank: &CodeBank, mut out: W) -> Result<()> {
    let s = bank.spec();
    let mut text = String::new();
    let _ = writeln!(text, "# fps={}", s.fps);
    let _ = writeln!(text, "# segment_len={}", s.segment_len);
    let _ = writeln!(text, "# band_lo={}", s.band_lo);
    let _ = writeln!(text, "# band_hi={}", s.band_hi);
    let _ = writeln!(text, "# num_codes={}", s.num_codes);
    let _ = writeln!(text, "# master_seed={}", s.master_seed);
    let _ = writeln!(text, "# amplitude_scale={}", s.amplitude_scale);
    let _ = writeln!(text, "# first_segment={}", bank.segments().start);
    let _ = writeln!(text, "# flicker={}", s.flicker.to_header());
    out.write_all(text.as_bytes())?;
    let len = bank.codes()[0].samples.len();
    for t in 0..len {
        text.clear();
        for (i, code) in bank.codes().iter().enumerate() {
            if i > 0 {
                text.push(',');
            }
            let _ = write!(text, "{}", code.samples[t]);
        }
        text.push('\n');
        out.write_all(text.as_bytes())?;
    }
    Ok(())
}

fn parse_num<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T> {
    v.trim().parse().map_err(|_| NciError::at_line(line, format!("bad value '{v}' for {key}")))
}

pub fn read_code_csv<R: BufRead>(input: R) -> Result<CodeBank> {
    let mut fps = None;
    let mut segment_len = None;
    let mut band_lo = None;
    let mut band_hi = None;
    let mut num_codes = None;
    let mut master_seed = None;
    let mut amplitude_scale = None;
    let mut first_segment = 0u64;
    let mut flicker = FlickerTable::default();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut first_row_line = None;
    let mut last_line = 0;

    for (idx, line) in input.lines().enumerate() {
        let lineno = idx + 1;
        last_line = lineno;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(header) = trimmed.strip_prefix('#') {
            if first_row_line.is_some() {
                return Err(NciError::at_line(lineno, "header line after sample rows"));
            }
            let (key, value) = header
                .split_once('=')
                .ok_or_else(|| NciError::at_line(lineno, format!("malformed header '{trimmed}'")))?;
            let key = key.trim();
            match key {
                "fps" => fps = Some(parse_num::<f64>(lineno, key, value)?),
                "segment_len" => segment_len = Some(parse_num::<usize>(lineno, key, value)?),
                "band_lo" => band_lo = Some(parse_num::<f64>(lineno, key, value)?),
                "band_hi" => band_hi = Some(parse_num::<f64>(lineno, key, value)?),
                "num_codes" => num_codes = Some(parse_num::<usize>(lineno, key, value)?),
                "master_seed" => master_seed = Some(parse_num::<u64>(lineno, key, value)?),
                "amplitude_scale" => amplitude_scale = Some(parse_num::<f64>(lineno, key, value)?),
                "first_segment" => first_segment = parse_num::<u64>(lineno, key, value)?,
                "flicker" => {
                    flicker =
                        FlickerTable::from_header(value.trim()).map_err(|e| NciError::at_line(lineno, e.to_string()))?
                }
                other => return Err(NciError::at_line(lineno, format!("unknown header key '{other}'"))),
            }
            continue;
        }
        let k = num_codes.ok_or_else(|| NciError::at_line(lineno, "sample row before num_codes header"))?;
        if first_row_line.is_none() {
            first_row_line = Some(lineno);
            columns = vec![Vec::new(); k];
        }
        let mut count = 0;
        for (i, field) in trimmed.split(',').enumerate() {
            if i >= k {
                count = i + 1;
                break;
            }
            let v: f64 =
                field.trim().parse().map_err(|_| NciError::at_line(lineno, format!("bad sample '{field}'")))?;
            columns[i].push(v);
            count = i + 1;
        }
        if count != k {
            return Err(NciError::at_line(lineno, format!("expected {k} values per row")));
        }
    }

    let missing = |name: &str| NciError::at_line(last_line.max(1), format!("missing header key '{name}'"));
    let spec = CodeSpec {
        fps: fps.ok_or_else(|| missing("fps"))?,
        segment_len: segment_len.ok_or_else(|| missing("segment_len"))?,
        band_lo: band_lo.ok_or_else(|| missing("band_lo"))?,
        band_hi: band_hi.ok_or_else(|| missing("band_hi"))?,
        num_codes: num_codes.ok_or_else(|| missing("num_codes"))?,
        master_seed: master_seed.ok_or_else(|| missing("master_seed"))?,
        amplitude_scale: amplitude_scale.ok_or_else(|| missing("amplitude_scale"))?,
        flicker,
    };
    let Some(first_row) = first_row_line else {
        return Err(NciError::at_line(last_line + 1, "no samples"));
    };
    let rows = columns[0].len();
    if !rows.is_multiple_of(spec.segment_len) {
        return Err(NciError::at_line(
            last_line,
            format!("sample count mismatch: {rows} rows is not a multiple of segment_len {}", spec.segment_len),
        ));
    }
    CodeBank::from_samples(spec, first_segment, columns).map_err(|e| NciError::at_line(first_row, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bank(k: usize) -> CodeBank {
        let spec = CodeSpec { segment_len: 128, num_codes: k, master_seed: 17, ..CodeSpec::default() };
        CodeBank::generate(spec, 2..4).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let b = bank(3);
        let mut buf = Vec::new();
        write_code_csv(&b, &mut buf).unwrap();
        let back = read_code_csv(&buf[..]).unwrap();
        assert_eq!(back, b);
    }

    #[test]
    fn empty_body_is_an_error() {
        let b = bank(1);
        let mut buf = Vec::new();
        write_code_csv(&b, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let header: String = text.lines().filter(|l| l.starts_with('#')).map(|l| format!("{l}\n")).collect();
        let err = read_code_csv(header.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("no samples"), "{err}");
    }

    #[test]
    fn header_plus_rows_gives_k_codes() {
        let mut text = String::from(
            "# fps=30\n# segment_len=128\n# band_lo=2\n# band_hi=9\n# num_codes=2\n# master_seed=1\n# amplitude_scale=0.01\n",
        );
        for t in 0..128 {
            text.push_str(&format!("{},{}\n", t as f64 * 1e-3, -(t as f64) * 1e-3));
        }
        let b = read_code_csv(text.as_bytes()).unwrap();
        assert_eq!(b.num_codes(), 2);
        assert_eq!(b.code(1).unwrap().samples[5], -0.005);
        assert_eq!(b.spec().fps, 30.0);
    }

    #[test]
    fn reports_line_numbers() {
        let text = "# fps=30\n# segment_len=abc\n";
        match read_code_csv(text.as_bytes()) {
            Err(NciError::ParseLine { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        let text = "# fps=30\n# segment_len=2\n# band_lo=2\n# band_hi=9\n# num_codes=2\n# master_seed=1\n# amplitude_scale=0.01\n1,2\n3\n";
        match read_code_csv(text.as_bytes()) {
            Err(NciError::ParseLine { line, .. }) => assert_eq!(line, 9),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_header_rejected() {
        assert!(read_code_csv("# fps 30\n".as_bytes()).is_err());
    }
}
