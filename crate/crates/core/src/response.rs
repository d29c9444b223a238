use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Lowest dB value ever produced by numeric pipelines. Exact zeros map to
/// negative infinity in [`magnitude_db`] and to this sentinel when written
/// to text or fed to interpolation.
pub const DB_FLOOR: f64 = -400.0;

/// `20·log10(|s|)`. Returns `f64::NEG_INFINITY` for `|s| = 0`.
pub fn magnitude_db(s: Complex64) -> f64 {
    let mag = s.norm();
    if mag == 0.0 {
        f64::NEG_INFINITY
    } else {
        20.0 * mag.log10()
    }
}

/// [`magnitude_db`] clamped to [`DB_FLOOR`].
pub fn magnitude_db_floored(s: Complex64) -> f64 {
    magnitude_db(s).max(DB_FLOOR)
}

/// Scattering matrix of a two-port at one frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SParams {
    pub s11: Complex64,
    pub s12: Complex64,
    pub s21: Complex64,
    pub s22: Complex64,
}

impl SParams {
    pub fn new(s11: Complex64, s12: Complex64, s21: Complex64, s22: Complex64) -> Self {
        Self { s11, s12, s21, s22 }
    }

    /// Matched through line.
    pub fn thru() -> Self {
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        Self::new(zero, one, one, zero)
    }

    pub fn channel(&self, mode: Mode) -> Complex64 {
        match mode {
            Mode::Reflection => self.s11,
            Mode::Transmission => self.s21,
        }
    }
}

/// Which trace a resonance or calibration sample refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// S11
    Reflection,
    /// S21
    Transmission,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Reflection => "reflection",
            Mode::Transmission => "transmission",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "reflection" | "s11" => Ok(Mode::Reflection),
            "transmission" | "s21" => Ok(Mode::Transmission),
            other => Err(format!(
                "unknown mode `{other}` (expected reflection/s11 or transmission/s21)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ResponseError {
    #[error("frequency and S-parameter lists differ in length ({freqs} vs {s})")]
    LengthMismatch { freqs: usize, s: usize },
    #[error("frequency at index {index} ({value} Hz) is not positive and finite")]
    NonPositiveFrequency { index: usize, value: f64 },
    #[error("frequency at index {index} ({value} Hz) does not exceed its predecessor")]
    NotIncreasing { index: usize, value: f64 },
    #[error("reference impedance must be positive, got {0} ohm")]
    InvalidZ0(f64),
}

/// Frequency grid in Hz with one 2×2 S-matrix per point.
///
/// Construction enforces strictly increasing positive frequencies, matching
/// lengths and a positive reference impedance.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyResponse {
    freqs: Vec<f64>,
    s: Vec<SParams>,
    z0: f64,
}

impl FrequencyResponse {
    pub fn new(freqs: Vec<f64>, s: Vec<SParams>, z0: f64) -> Result<Self, ResponseError> {
        if freqs.len() != s.len() {
            return Err(ResponseError::LengthMismatch {
                freqs: freqs.len(),
                s: s.len(),
            });
        }
        if !(z0 > 0.0 && z0.is_finite()) {
            return Err(ResponseError::InvalidZ0(z0));
        }
        check_grid(&freqs)?;
        Ok(Self { freqs, s, z0 })
    }

    pub fn empty(z0: f64) -> Result<Self, ResponseError> {
        Self::new(Vec::new(), Vec::new(), z0)
    }

    pub fn freqs(&self) -> &[f64] {
        &self.freqs
    }

    pub fn s(&self) -> &[SParams] {
        &self.s
    }

    pub fn z0(&self) -> f64 {
        self.z0
    }

    pub fn len(&self) -> usize {
        self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }

    /// Complex trace of one channel.
    pub fn channel(&self, mode: Mode) -> impl Iterator<Item = Complex64> + '_ {
        self.s.iter().map(move |s| s.channel(mode))
    }

    /// dB trace of one channel, floored at [`DB_FLOOR`].
    pub fn channel_db(&self, mode: Mode) -> Vec<f64> {
        self.channel(mode).map(magnitude_db_floored).collect()
    }
}

/// Validates a frequency grid: positive, finite, strictly increasing.
pub fn check_grid(freqs: &[f64]) -> Result<(), ResponseError> {
    for (index, &value) in freqs.iter().enumerate() {
        if !(value > 0.0 && value.is_finite()) {
            return Err(ResponseError::NonPositiveFrequency { index, value });
        }
        if index > 0 && value <= freqs[index - 1] {
            return Err(ResponseError::NotIncreasing { index, value });
        }
    }
    Ok(())
}

/// `points` evenly spaced frequencies from `fmin` to `fmax` inclusive.
pub fn linear_sweep(fmin: f64, fmax: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![fmin],
        n => {
            let step = (fmax - fmin) / (n - 1) as f64;
            (0..n)
                .map(|i| if i == n - 1 { fmax } else { fmin + step * i as f64 })
                .collect()
        }
    }
}
