//! Notch detection on |S11| / |S21| traces.
//!
//! Minima are found on the dB trace, refined by fitting a parabola through
//! the discrete minimum and its two neighbours (in dB, not linear
//! magnitude) and optionally characterised by a Q factor measured at a
//! fixed offset above the notch floor.

use serde::Serialize;
use thiserror::Error;

use crate::response::{FrequencyResponse, Mode};

pub const DEFAULT_THRESHOLD_DB: f64 = -10.0;
pub const DEFAULT_MIN_SEPARATION_HZ: f64 = 50e6;
pub const DEFAULT_Q_OFFSET_DB: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ResonanceError {
    #[error("need at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("threshold must be negative, got {0} dB")]
    NonNegativeThreshold(f64),
    #[error("parabolic refinement needs f_prev < f_min < f_next and a central minimum")]
    NotAMinimum,
    #[error("no {offset} dB crossing on the {side:?} side of the notch at {freq_hz} Hz")]
    NoCrossing { side: Side, offset: f64, freq_hz: f64 },
    #[error("grid index {0} is outside the trace")]
    BadIndex(usize),
}

/// A detected notch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Resonance {
    /// Refined frequency in Hz.
    pub frequency: f64,
    /// Refined depth in dB.
    pub depth: f64,
    pub q: Option<f64>,
    pub mode: Mode,
    /// Index of the discrete minimum in the source trace.
    pub grid_index: usize,
}

/// Vertex of the parabola through three (frequency, dB) samples.
///
/// Falls back to `(f_min, d_min)` when the samples have no upward
/// curvature (collinear or flat). The returned frequency always lies
/// between the midpoints of the two sample intervals.
pub fn refine_parabolic(
    f_prev: f64,
    f_min: f64,
    f_next: f64,
    d_prev: f64,
    d_min: f64,
    d_next: f64,
) -> Result<(f64, f64), ResonanceError> {
    if !(f_prev < f_min && f_min < f_next) || d_min > d_prev || d_min > d_next {
        return Err(ResonanceError::NotAMinimum);
    }
    // y = d_min + b·u + a·u², u = f − f_min
    let h0 = f_prev - f_min;
    let h2 = f_next - f_min;
    let s0 = (d_prev - d_min) / h0;
    let s2 = (d_next - d_min) / h2;
    let a = (s2 - s0) / (h2 - h0);
    if !(a > 0.0 && a.is_finite()) {
        return Ok((f_min, d_min));
    }
    let b = s2 - a * h2;
    let u = (-b / (2.0 * a)).clamp(h0 / 2.0, h2 / 2.0);
    let depth = d_min + b * u + a * u * u;
    Ok((f_min + u, depth.min(d_min)))
}

/// All local minima of the dB trace strictly below `threshold`, refined and
/// merged so that no two reported notches are closer than `min_separation`
/// (the deeper of a close pair survives). Sorted by frequency.
pub fn find_notches(
    resp: &FrequencyResponse,
    mode: Mode,
    threshold: f64,
    min_separation: f64,
) -> Result<Vec<Resonance>, ResonanceError> {
    if resp.len() < 3 {
        return Err(ResonanceError::TooFewPoints(resp.len()));
    }
    if threshold.is_nan() || threshold >= 0.0 {
        return Err(ResonanceError::NonNegativeThreshold(threshold));
    }
    let f = resp.freqs();
    let d = resp.channel_db(mode);

    let mut found: Vec<Resonance> = Vec::new();
    for i in 1..d.len() - 1 {
        // first sample of a flat-bottomed minimum
        if !(d[i] < threshold && d[i] < d[i - 1] && d[i] <= d[i + 1]) {
            continue;
        }
        let (frequency, depth) = refine_parabolic(f[i - 1], f[i], f[i + 1], d[i - 1], d[i], d[i + 1])?;
        let r = Resonance {
            frequency,
            depth,
            q: None,
            mode,
            grid_index: i,
        };
        match found.last_mut() {
            Some(last) if r.frequency - last.frequency < min_separation => {
                if r.depth < last.depth {
                    *last = r;
                }
            }
            _ => found.push(r),
        }
    }
    Ok(found)
}

/// Loaded Q of a notch: `f0 / (f_right − f_left)` where the edges are the
/// linearly interpolated crossings of `depth + offset` closest to the notch.
pub fn q_factor(resp: &FrequencyResponse, r: &Resonance, offset: f64) -> Result<f64, ResonanceError> {
    let f = resp.freqs();
    let d = resp.channel_db(r.mode);
    if r.grid_index >= d.len() {
        return Err(ResonanceError::BadIndex(r.grid_index));
    }
    let level = r.depth + offset;
    let no_crossing = |side| ResonanceError::NoCrossing {
        side,
        offset,
        freq_hz: r.frequency,
    };
    let interp = |i: usize, j: usize| f[i] + (level - d[i]) * (f[j] - f[i]) / (d[j] - d[i]);

    let left = (1..=r.grid_index)
        .rev()
        .find(|&i| d[i - 1] >= level && d[i] < level)
        .map(|i| interp(i - 1, i))
        .ok_or_else(|| no_crossing(Side::Left))?;
    let right = (r.grid_index..d.len() - 1)
        .find(|&i| d[i] < level && d[i + 1] >= level)
        .map(|i| interp(i, i + 1))
        .ok_or_else(|| no_crossing(Side::Right))?;
    Ok(r.frequency / (right - left))
}

/// [`find_notches`] followed by [`q_factor`] on every notch; notches whose
/// Q cannot be measured keep `q = None`.
pub fn find_notches_with_q(
    resp: &FrequencyResponse,
    mode: Mode,
    threshold: f64,
    min_separation: f64,
    q_offset: f64,
) -> Result<Vec<Resonance>, ResonanceError> {
    let mut notches = find_notches(resp, mode, threshold, min_separation)?;
    for r in &mut notches {
        r.q = q_factor(resp, r, q_offset).ok();
    }
    Ok(notches)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::response::SParams;
    use num_complex::Complex64;

    fn trace_from_db(freqs: Vec<f64>, db: &[f64]) -> FrequencyResponse {
        let s = db
            .iter()
            .map(|&x| {
                let m = Complex64::new(10f64.powf(x / 20.0), 0.0);
                SParams::new(m, m, m, m)
            })
            .collect();
        FrequencyResponse::new(freqs, s, 50.0).unwrap()
    }

    #[test]
    fn symmetric_samples_keep_center() {
        let (f, d) = refine_parabolic(1.0, 2.0, 3.0, -5.0, -9.0, -5.0).unwrap();
        assert_eq!(f, 2.0);
        assert_eq!(d, -9.0);
    }

    #[test]
    fn exact_quadratic_vertex() {
        let (fv, dv) = (4.123_456_789e9, -23.5);
        let q = |f: f64| dv + 3e-17 * (f - fv) * (f - fv);
        let (f0, f1, f2) = (4.10e9, 4.12e9, 4.15e9);
        let (f, d) = refine_parabolic(f0, f1, f2, q(f0), q(f1), q(f2)).unwrap();
        assert!(((f - fv) / fv).abs() < 1e-9, "{f}");
        assert!(((d - dv) / dv).abs() < 1e-9, "{d}");
    }

    #[test]
    fn collinear_points_unchanged() {
        assert_eq!(
            refine_parabolic(1.0, 2.0, 3.0, -4.0, -4.0, -4.0).unwrap(),
            (2.0, -4.0)
        );
    }

    #[test]
    fn precondition_violations() {
        assert_eq!(
            refine_parabolic(1.0, 2.0, 3.0, -9.0, -5.0, -6.0),
            Err(ResonanceError::NotAMinimum)
        );
        assert_eq!(
            refine_parabolic(2.0, 1.0, 3.0, -5.0, -9.0, -6.0),
            Err(ResonanceError::NotAMinimum)
        );
    }

    #[test]
    fn flat_trace_has_no_notches() {
        let r = trace_from_db(vec![1.0, 2.0, 3.0, 4.0], &[0.0; 4]);
        assert!(find_notches(&r, Mode::Transmission, -10.0, 0.0)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn input_checks() {
        let r = trace_from_db(vec![1.0, 2.0], &[0.0, -20.0]);
        assert_eq!(
            find_notches(&r, Mode::Transmission, -10.0, 0.0),
            Err(ResonanceError::TooFewPoints(2))
        );
        let r = trace_from_db(vec![1.0, 2.0, 3.0], &[0.0, -20.0, 0.0]);
        assert!(find_notches(&r, Mode::Transmission, 0.0, 0.0).is_err());
    }

    #[test]
    fn close_minima_merge_to_deeper() {
        let f: Vec<f64> = (0..9).map(|i| 1e9 + i as f64 * 1e7).collect();
        let d = [0.0, -15.0, -20.0, -12.0, -25.0, -11.0, 0.0, -30.0, 0.0];
        let r = trace_from_db(f, &d);
        let all = find_notches(&r, Mode::Transmission, -10.0, 1.0).unwrap();
        assert_eq!(all.len(), 3);
        let merged = find_notches(&r, Mode::Transmission, -10.0, 25e6).unwrap();
        assert_eq!(merged.len(), 2);
        assert_eq!(merged[0].grid_index, 4);
        assert_eq!(merged[1].grid_index, 7);
        assert!(merged.windows(2).all(|w| w[0].frequency < w[1].frequency));
    }

    #[test]
    fn q_of_symmetric_triangle() {
        // linear-in-dB notch: −20 at f0 rising 1 dB per 1 MHz, so the
        // −17 dB level is crossed exactly at f0 ± 3 MHz
        let f0 = 2e9;
        let f: Vec<f64> = (-10..=10).map(|k| f0 + k as f64 * 1e6).collect();
        let d: Vec<f64> = (-10..=10).map(|k: i32| -20.0 + k.abs() as f64).collect();
        let r = trace_from_db(f, &d);
        let notch = find_notches(&r, Mode::Transmission, -10.0, 0.0).unwrap()[0];
        assert_eq!(notch.frequency, f0);
        let q = q_factor(&r, &notch, 3.0).unwrap();
        assert!((q - f0 / 6e6).abs() < 1e-6 * q, "{q}");
    }

    #[test]
    fn q_without_crossing_names_side() {
        let f: Vec<f64> = (0..5).map(|i| 1e9 + i as f64 * 1e6).collect();
        let d = [-21.0, -20.5, -22.0, -10.0, 0.0];
        let r = trace_from_db(f, &d);
        let notch = find_notches(&r, Mode::Transmission, -10.0, 0.0).unwrap()[0];
        assert!(matches!(
            q_factor(&r, &notch, 3.0),
            Err(ResonanceError::NoCrossing { side: Side::Left, .. })
        ));
    }
}
