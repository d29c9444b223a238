//! Constrained parabolic calibration between relative permittivity and
//! notch frequency.
//!
//! The model is
//!
//! ```text
//! f(ε) = x1 − x2·(ε − 1) + x3·(ε − 1)²        [GHz]
//! ```
//!
//! so that `x1` is the unloaded (air, ε = 1) resonance. The quadratic term
//! is in `(ε − 1)`; writing it as `(ε² − 1)²` does not reproduce the
//! tabulated calculated peaks (3.908 GHz instead of 3.6017 GHz at ε = 2.2
//! for the reference constants).
//!
//! Inversion uses the root on the decreasing branch, which is unique as
//! long as `eps_max` stays below the parabola vertex `1 + x2/(2·x3)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::response::Mode;

/// Permittivity tolerance used to identify the air sample.
const AIR_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CalibrationError {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("permittivity {eps} outside the model range [{min}, {max}]")]
    PermittivityOutOfRange { eps: f64, min: f64, max: f64 },
    #[error("frequency {f_ghz} GHz outside the invertible range [{low}, {high}] GHz")]
    FrequencyOutOfRange { f_ghz: f64, low: f64, high: f64 },
    #[error("negative discriminant while inverting {0} GHz")]
    NegativeDiscriminant(f64),
    #[error("need at least 3 samples, got {0}")]
    TooFewSamples(usize),
    #[error("anchored fit needs exactly one air sample (permittivity 1), found {0}")]
    AirAnchor(usize),
    #[error("design matrix is rank deficient; permittivities are not distinct enough")]
    RankDeficient,
    #[error("invalid sample `{name}`: {reason}")]
    InvalidSample { name: String, reason: String },
    #[error("measured value must be non-zero")]
    ZeroMeasured,
    #[error("model file: {0}")]
    Format(String),
}

/// One calibration point: a reference material and its notch frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialSample {
    pub name: String,
    pub permittivity: f64,
    /// GHz
    #[serde(rename = "resonance_ghz")]
    pub resonance: f64,
    pub mode: Mode,
}

impl MaterialSample {
    pub fn new(name: impl Into<String>, permittivity: f64, resonance: f64, mode: Mode) -> Self {
        Self {
            name: name.into(),
            permittivity,
            resonance,
            mode,
        }
    }

    fn validate(&self) -> Result<(), CalibrationError> {
        let bad = |reason: &str| {
            Err(CalibrationError::InvalidSample {
                name: self.name.clone(),
                reason: reason.to_string(),
            })
        };
        if !(self.permittivity >= 1.0 && self.permittivity.is_finite()) {
            return bad("permittivity must be >= 1");
        }
        if !(self.resonance > 0.0 && self.resonance.is_finite()) {
            return bad("resonance must be positive");
        }
        Ok(())
    }
}

/// Fitted constants, frequencies in GHz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationModel {
    pub x1: f64,
    pub x2: f64,
    pub x3: f64,
    pub eps_min: f64,
    pub eps_max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl CalibrationModel {
    pub fn new(x1: f64, x2: f64, x3: f64, eps_min: f64, eps_max: f64) -> Result<Self, CalibrationError> {
        let m = Self {
            x1,
            x2,
            x3,
            eps_min,
            eps_max,
            note: None,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    /// Transmission-mode preset `3.99 − 0.3512(ε − 1) + 0.0230(ε − 1)²`,
    /// valid over the reference materials (air to FR-4, ε ∈ [1, 4.3]).
    pub fn reference_s21() -> Self {
        Self::new(3.99, 0.3512, 0.0230, 1.0, 4.3)
            .expect("preset is valid")
            .with_note("reference S21 preset: air, RT5880, RO4350B, FR-4")
    }

    /// Permittivity at the parabola vertex, infinite for a linear model.
    pub fn eps_vertex(&self) -> f64 {
        if self.x3 > 0.0 {
            1.0 + self.x2 / (2.0 * self.x3)
        } else {
            f64::INFINITY
        }
    }

    pub fn validate(&self) -> Result<(), CalibrationError> {
        let bad = |msg: String| Err(CalibrationError::InvalidModel(msg));
        let all_finite = [self.x1, self.x2, self.x3, self.eps_min, self.eps_max]
            .iter()
            .all(|v| v.is_finite());
        if !all_finite {
            return bad("non-finite constant".into());
        }
        if self.x1 <= 0.0 {
            return bad(format!("x1 must be positive, got {}", self.x1));
        }
        if self.x3 < 0.0 {
            return bad(format!("x3 must be non-negative, got {}", self.x3));
        }
        if self.x2 <= 0.0 {
            return bad(format!(
                "x2 must be positive for a decreasing model, got {}",
                self.x2
            ));
        }
        if !(1.0 <= self.eps_min && self.eps_min < self.eps_max) {
            return bad(format!(
                "validity range [{}, {}] must satisfy 1 <= eps_min < eps_max",
                self.eps_min, self.eps_max
            ));
        }
        if self.eps_max >= self.eps_vertex() {
            return bad(format!(
                "eps_max {} reaches the vertex {} of the parabola",
                self.eps_max,
                self.eps_vertex()
            ));
        }
        Ok(())
    }

    fn raw(&self, eps: f64) -> f64 {
        let u = eps - 1.0;
        self.x1 - self.x2 * u + self.x3 * u * u
    }

    /// Notch frequency in GHz for relative permittivity `eps`.
    pub fn evaluate(&self, eps: f64) -> Result<f64, CalibrationError> {
        if !(self.eps_min..=self.eps_max).contains(&eps) {
            return Err(CalibrationError::PermittivityOutOfRange {
                eps,
                min: self.eps_min,
                max: self.eps_max,
            });
        }
        Ok(self.raw(eps))
    }

    /// Frequency range `[f(eps_max), f(eps_min)]` accepted by [`invert`].
    ///
    /// [`invert`]: CalibrationModel::invert
    pub fn frequency_range(&self) -> (f64, f64) {
        (self.raw(self.eps_max), self.x1.min(self.raw(self.eps_min)))
    }

    /// Relative permittivity for a notch at `f_ghz`.
    pub fn invert(&self, f_ghz: f64) -> Result<f64, CalibrationError> {
        let low = self.raw(self.eps_max);
        let high = self.x1;
        if !(low..=high).contains(&f_ghz) {
            return Err(CalibrationError::FrequencyOutOfRange { f_ghz, low, high });
        }
        let shift = self.x1 - f_ghz;
        let disc = self.x2 * self.x2 - 4.0 * self.x3 * shift;
        if disc < 0.0 {
            return Err(CalibrationError::NegativeDiscriminant(f_ghz));
        }
        // (x2 − √disc)/(2·x3) rewritten without cancellation; also covers x3 = 0
        let u = 2.0 * shift / (self.x2 + disc.sqrt());
        let eps = 1.0 + u;
        if eps < self.eps_min {
            return Err(CalibrationError::FrequencyOutOfRange {
                f_ghz,
                low,
                high: self.raw(self.eps_min),
            });
        }
        Ok(eps)
    }

    pub fn to_toml(&self) -> String {
        let mut out = String::new();
        if let Some(note) = &self.note {
            out.push_str(&format!("note = {}\n", toml_string(note)));
        }
        out.push_str(&format!(
            "x1 = {:?}\nx2 = {:?}\nx3 = {:?}\neps_min = {:?}\neps_max = {:?}\n",
            self.x1, self.x2, self.x3, self.eps_min, self.eps_max
        ));
        out
    }

    pub fn from_toml(text: &str) -> Result<Self, CalibrationError> {
        let m: Self = toml::from_str(text).map_err(|e| CalibrationError::Format(e.message().to_string()))?;
        m.validate()?;
        Ok(m)
    }
}

fn toml_string(s: &str) -> String {
    let escaped: String = s
        .chars()
        .flat_map(|c| match c {
            '"' => vec!['\\', '"'],
            '\\' => vec!['\\', '\\'],
            '\n' => vec!['\\', 'n'],
            c => vec![c],
        })
        .collect();
    format!("\"{escaped}\"")
}

/// Least-squares solution of `a·x ≈ b` by Householder QR. `a` is row-major
/// with `n` columns. Returns `None` when a diagonal entry of R is negligible
/// relative to the largest one.
#[allow(clippy::needless_range_loop)]
fn least_squares(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let m = a.len();
    let n = a.first().map_or(0, Vec::len);
    if m < n || n == 0 {
        return None;
    }
    let mut r: Vec<Vec<f64>> = a.to_vec();
    let mut y = b.to_vec();
    for k in 0..n {
        let norm = (k..m).map(|i| r[i][k] * r[i][k]).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if r[k][k] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (k..m).map(|i| r[i][k]).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        for j in k..n {
            let dot: f64 = (k..m).map(|i| v[i - k] * r[i][j]).sum();
            let scale = 2.0 * dot / vnorm2;
            for i in k..m {
                r[i][j] -= scale * v[i - k];
            }
        }
        let dot: f64 = (k..m).map(|i| v[i - k] * y[i]).sum();
        let scale = 2.0 * dot / vnorm2;
        for i in k..m {
            y[i] -= scale * v[i - k];
        }
    }
    let rmax = (0..n).map(|k| r[k][k].abs()).fold(0.0, f64::max);
    if rmax == 0.0 || (0..n).any(|k| r[k][k].abs() <= 1e-10 * rmax) {
        return None;
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let tail: f64 = (k + 1..n).map(|j| r[k][j] * x[j]).sum();
        x[k] = (y[k] - tail) / r[k][k];
    }
    Some(x)
}

/// Fits the calibration model to reference samples.
///
/// With `anchor_air`, `x1` is the air sample's resonance and `(x2, x3)` solve
/// the least-squares problem over the basis `[−(ε−1), (ε−1)²]` on the
/// residuals `f − x1`. Otherwise all three constants are fitted. The
/// returned validity range spans the sample permittivities.
pub fn fit(samples: &[MaterialSample], anchor_air: bool) -> Result<CalibrationModel, CalibrationError> {
    if samples.len() < 3 {
        return Err(CalibrationError::TooFewSamples(samples.len()));
    }
    samples.iter().try_for_each(MaterialSample::validate)?;

    let (x1, x2, x3) = if anchor_air {
        let air: Vec<&MaterialSample> = samples
            .iter()
            .filter(|s| (s.permittivity - 1.0).abs() <= AIR_TOL)
            .collect();
        if air.len() != 1 {
            return Err(CalibrationError::AirAnchor(air.len()));
        }
        let x1 = air[0].resonance;
        let rows: Vec<Vec<f64>> = samples
            .iter()
            .map(|s| {
                let u = s.permittivity - 1.0;
                vec![-u, u * u]
            })
            .collect();
        let rhs: Vec<f64> = samples.iter().map(|s| s.resonance - x1).collect();
        let x = least_squares(&rows, &rhs).ok_or(CalibrationError::RankDeficient)?;
        (x1, x[0], x[1])
    } else {
        let rows: Vec<Vec<f64>> = samples
            .iter()
            .map(|s| {
                let u = s.permittivity - 1.0;
                vec![1.0, -u, u * u]
            })
            .collect();
        let rhs: Vec<f64> = samples.iter().map(|s| s.resonance).collect();
        let x = least_squares(&rows, &rhs).ok_or(CalibrationError::RankDeficient)?;
        (x[0], x[1], x[2])
    };

    let eps_min = samples
        .iter()
        .map(|s| s.permittivity)
        .fold(f64::INFINITY, f64::min);
    let eps_max = samples
        .iter()
        .map(|s| s.permittivity)
        .fold(f64::NEG_INFINITY, f64::max);
    CalibrationModel::new(x1, x2, x3, eps_min, eps_max)
}

/// Parses a sample file with header `name,permittivity,resonance_ghz,mode`.
pub fn parse_samples_csv(text: &str) -> Result<Vec<MaterialSample>, CalibrationError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| CalibrationError::Format(e.to_string()))?;
    if headers
        .iter()
        .ne(["name", "permittivity", "resonance_ghz", "mode"])
    {
        return Err(CalibrationError::Format(
            "sample file header must be `name,permittivity,resonance_ghz,mode`".into(),
        ));
    }
    let mut samples = Vec::new();
    for row in reader.deserialize::<MaterialSample>() {
        let s = row.map_err(|e| CalibrationError::Format(e.to_string()))?;
        s.validate()?;
        samples.push(s);
    }
    Ok(samples)
}

/// Sum of squared residuals of `model` over `samples`, ignoring the range.
pub fn sum_squared_residuals(model: &CalibrationModel, samples: &[MaterialSample]) -> f64 {
    samples
        .iter()
        .map(|s| {
            let r = model.raw(s.permittivity) - s.resonance;
            r * r
        })
        .sum()
}

/// `(simulated − calculated) / measured × 100`, in percent.
pub fn relative_error(simulated: f64, calculated: f64, measured: f64) -> Result<f64, CalibrationError> {
    if measured == 0.0 {
        return Err(CalibrationError::ZeroMeasured);
    }
    Ok((simulated - calculated) / measured * 100.0)
}

/// Magnitude of [`relative_error`]. Without a physical measurement the
/// simulated value serves as `measured`.
pub fn abs_relative_error(simulated: f64, calculated: f64, measured: f64) -> Result<f64, CalibrationError> {
    relative_error(simulated, calculated, measured).map(f64::abs)
}

/// Fixed-point decimal formatting that never prints `-0.00`.
pub fn format_fixed(value: f64, decimals: usize) -> String {
    let s = format!("{value:.decimals$}");
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        s[1..].to_string()
    } else {
        s
    }
}
