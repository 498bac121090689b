//! Tabulated flicker sensitivity and the inverse-sensitivity amplitude rule.
//!
//! The default table is a smooth stand-in: relative sensitivity rises from
//! the low end of the band to a plateau near 8-9 Hz and falls beyond it. It
//! reproduces the qualitative shape of classic temporal contrast sensitivity
//! measurements only; it is not a calibrated psychophysical curve. Callers
//! with their own measurements should build a [`FlickerTable`] from them.

use crate::error::{NciError, Result};

/// Default knots as `(frequency Hz, relative sensitivity)`.
pub const DEFAULT_FLICKER_KNOTS: [(f64, f64); 8] =
    [(1.0, 0.20), (2.0, 0.30), (4.0, 0.55), (6.0, 0.80), (8.0, 0.97), (9.0, 1.00), (10.0, 0.96), (12.0, 0.80)];

/// Piecewise-linear sensitivity curve over strictly increasing frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct FlickerTable {
    knots: Vec<(f64, f64)>,
}

impl Default for FlickerTable {
    fn default() -> Self {
        Self { knots: DEFAULT_FLICKER_KNOTS.to_vec() }
    }
}

impl FlickerTable {
    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(NciError::invalid("flicker table needs at least two knots"));
        }
        for w in knots.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(NciError::invalid("flicker table frequencies must strictly increase"));
            }
        }
        if knots.iter().any(|&(f, s)| !f.is_finite() || !(s > 0.0) || !s.is_finite()) {
            return Err(NciError::invalid("flicker table sensitivities must be positive and finite"));
        }
        Ok(Self { knots })
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    pub fn covers(&self, freq: f64) -> bool {
        freq >= self.knots[0].0 && freq <= self.knots[self.knots.len() - 1].0
    }

    /// Linearly interpolated sensitivity; knot frequencies return the knot
    /// value exactly.
    pub fn sensitivity(&self, freq: f64) -> Result<f64> {
        if !self.covers(freq) {
            return Err(NciError::invalid(format!(
                "frequency {freq} Hz outside flicker table range {}..{} Hz",
                self.knots[0].0,
                self.knots[self.knots.len() - 1].0
            )));
        }
        let i = self.knots.partition_point(|&(f, _)| f <= freq);
        // i >= 1 because freq >= first knot.
        let (f0, s0) = self.knots[i - 1];
        if f0 == freq || i == self.knots.len() {
            return Ok(s0);
        }
        let (f1, s1) = self.knots[i];
        let u = (freq - f0) / (f1 - f0);
        Ok(s0 + u * (s1 - s0))
    }

    pub(crate) fn to_header(&self) -> String {
        self.knots.iter().map(|(f, s)| format!("{f}:{s}")).collect::<Vec<_>>().join(",")
    }

    pub(crate) fn from_header(text: &str) -> Result<Self> {
        let mut knots = Vec::new();
        for item in text.split(',') {
            let (f, s) = item.split_once(':').ok_or_else(|| NciError::invalid(format!("bad flicker knot '{item}'")))?;
            let f: f64 = f.trim().parse().map_err(|_| NciError::invalid(format!("bad frequency '{f}'")))?;
            let s: f64 = s.trim().parse().map_err(|_| NciError::invalid(format!("bad sensitivity '{s}'")))?;
            knots.push((f, s));
        }
        Self::new(knots)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_at_knots() {
        let t = FlickerTable::default();
        for &(f, s) in &DEFAULT_FLICKER_KNOTS {
            assert_eq!(t.sensitivity(f).unwrap(), s);
        }
    }

    #[test]
    fn interpolates_between_knots() {
        let t = FlickerTable::default();
        assert!((t.sensitivity(3.0).unwrap() - 0.425).abs() < 1e-15);
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(FlickerTable::default().sensitivity(0.5).is_err());
        assert!(FlickerTable::default().sensitivity(12.5).is_err());
    }

    #[test]
    fn header_round_trip() {
        let t = FlickerTable::default();
        assert_eq!(FlickerTable::from_header(&t.to_header()).unwrap(), t);
    }
}
