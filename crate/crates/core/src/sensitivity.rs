//! Sensitivity figures of merit over permittivity and thickness sweeps.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Slack added to the saturation tolerance so that decimal table values such
/// as `3.61 − 3.59` compare equal to `0.02`.
const SATURATION_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SensitivityError {
    #[error("eps_high ({high}) must exceed eps_low ({low}), and eps_low must be >= 1")]
    BadPermittivityOrder { low: f64, high: f64 },
    #[error("resonance frequencies must be positive")]
    NonPositiveFrequency,
    #[error("need at least {needed} sweep points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("duplicate control value {0}")]
    Duplicate(f64),
    #[error("control values must be ascending ({prev} then {next})")]
    NotAscending { prev: f64, next: f64 },
    #[error("expected {expected} sweep points, found {found}")]
    WrongControl {
        expected: &'static str,
        found: &'static str,
    },
    #[error("tolerance must be positive, got {0}")]
    BadTolerance(f64),
}

/// What a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "control_kind", content = "control_value", rename_all = "snake_case")]
pub enum Control {
    Permittivity(f64),
    ThicknessMm(f64),
}

impl Control {
    pub fn value(self) -> f64 {
        match self {
            Control::Permittivity(v) | Control::ThicknessMm(v) => v,
        }
    }

    pub fn kind(self) -> &'static str {
        match self {
            Control::Permittivity(_) => "permittivity",
            Control::ThicknessMm(_) => "thickness_mm",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub control: Control,
    /// GHz
    pub resonance: f64,
    pub depth_db: Option<f64>,
}

impl SweepPoint {
    pub fn permittivity(eps: f64, resonance: f64) -> Self {
        Self {
            control: Control::Permittivity(eps),
            resonance,
            depth_db: None,
        }
    }

    pub fn thickness(mm: f64, resonance: f64, depth_db: Option<f64>) -> Self {
        Self {
            control: Control::ThicknessMm(mm),
            resonance,
            depth_db,
        }
    }
}

/// Normalised average sensitivity in percent:
/// `|f_low_eps − f_high_eps| / (f_low_eps·(eps_high − eps_low)) × 100`,
/// where `f_low_eps` is the resonance at the lower permittivity.
pub fn normalized_average_sensitivity(
    f_low_eps: f64,
    f_high_eps: f64,
    eps_low: f64,
    eps_high: f64,
) -> Result<f64, SensitivityError> {
    if !(eps_low >= 1.0 && eps_high > eps_low) {
        return Err(SensitivityError::BadPermittivityOrder {
            low: eps_low,
            high: eps_high,
        });
    }
    if !(f_low_eps > 0.0 && f_high_eps > 0.0) {
        return Err(SensitivityError::NonPositiveFrequency);
    }
    Ok((f_low_eps - f_high_eps).abs() / (f_low_eps * (eps_high - eps_low)) * 100.0)
}

/// Same formula as [`normalized_average_sensitivity`]; the averaged and
/// normalised forms are written identically.
pub fn average_sensitivity(
    f_low_eps: f64,
    f_high_eps: f64,
    eps_low: f64,
    eps_high: f64,
) -> Result<f64, SensitivityError> {
    normalized_average_sensitivity(f_low_eps, f_high_eps, eps_low, eps_high)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairSensitivity {
    pub eps_low: f64,
    pub eps_high: f64,
    pub f_low_ghz: f64,
    pub f_high_ghz: f64,
    pub s_av_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityReport {
    /// One entry per adjacent pair, ascending.
    pub pairs: Vec<PairSensitivity>,
    /// First to last point.
    pub endpoint: PairSensitivity,
}

fn pair(lo: &SweepPoint, hi: &SweepPoint) -> Result<PairSensitivity, SensitivityError> {
    let (eps_low, eps_high) = (lo.control.value(), hi.control.value());
    Ok(PairSensitivity {
        eps_low,
        eps_high,
        f_low_ghz: lo.resonance,
        f_high_ghz: hi.resonance,
        s_av_pct: normalized_average_sensitivity(lo.resonance, hi.resonance, eps_low, eps_high)?,
    })
}

fn check_ascending(points: &[SweepPoint]) -> Result<(), SensitivityError> {
    for w in points.windows(2) {
        let (prev, next) = (w[0].control.value(), w[1].control.value());
        if prev == next {
            return Err(SensitivityError::Duplicate(prev));
        }
        if next < prev {
            return Err(SensitivityError::NotAscending { prev, next });
        }
    }
    Ok(())
}

/// Sensitivity of every adjacent pair and of the full span of a
/// permittivity sweep.
pub fn sensitivity_report(points: &[SweepPoint]) -> Result<SensitivityReport, SensitivityError> {
    if points.len() < 2 {
        return Err(SensitivityError::TooFewPoints {
            needed: 2,
            got: points.len(),
        });
    }
    if let Some(p) = points
        .iter()
        .find(|p| !matches!(p.control, Control::Permittivity(_)))
    {
        return Err(SensitivityError::WrongControl {
            expected: "permittivity",
            found: p.control.kind(),
        });
    }
    check_ascending(points)?;
    let pairs = points
        .windows(2)
        .map(|w| pair(&w[0], &w[1]))
        .collect::<Result<Vec<_>, _>>()?;
    let endpoint = pair(&points[0], &points[points.len() - 1])?;
    Ok(SensitivityReport { pairs, endpoint })
}

/// Smallest thickness from which every resonance stays within `±tol` GHz of
/// the resonance at the largest thickness.
pub fn thickness_saturation(points: &[SweepPoint], tol: f64) -> Result<f64, SensitivityError> {
    let last = points
        .last()
        .ok_or(SensitivityError::TooFewPoints { needed: 1, got: 0 })?;
    if tol.is_nan() || tol <= 0.0 {
        return Err(SensitivityError::BadTolerance(tol));
    }
    if let Some(p) = points
        .iter()
        .find(|p| !matches!(p.control, Control::ThicknessMm(_)))
    {
        return Err(SensitivityError::WrongControl {
            expected: "thickness_mm",
            found: p.control.kind(),
        });
    }
    check_ascending(points)?;
    let reference = last.resonance;
    let saturated = points
        .iter()
        .rev()
        .take_while(|p| (p.resonance - reference).abs() <= tol + SATURATION_SLACK)
        .last()
        .unwrap_or(last);
    Ok(saturated.control.value())
}

#[derive(Debug, Deserialize)]
struct SweepRow {
    control_kind: String,
    control_value: f64,
    resonance_ghz: f64,
    depth_db: Option<f64>,
}

/// Parses a sweep file with header
/// `control_kind,control_value,resonance_ghz,depth_db`; `control_kind` is
/// `permittivity` or `thickness_mm` and `depth_db` may be empty.
pub fn parse_sweep_csv(text: &str) -> Result<Vec<SweepPoint>, String> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| e.to_string())?;
    if headers
        .iter()
        .ne(["control_kind", "control_value", "resonance_ghz", "depth_db"])
    {
        return Err("sweep header must be `control_kind,control_value,resonance_ghz,depth_db`".into());
    }
    let mut points = Vec::new();
    for row in reader.deserialize::<SweepRow>() {
        let row = row.map_err(|e| e.to_string())?;
        let control = match row.control_kind.as_str() {
            "permittivity" => Control::Permittivity(row.control_value),
            "thickness_mm" => Control::ThicknessMm(row.control_value),
            other => return Err(format!("unknown control_kind `{other}`")),
        };
        if !(row.resonance_ghz > 0.0 && row.resonance_ghz.is_finite()) {
            return Err(format!("resonance must be positive, got {}", row.resonance_ghz));
        }
        points.push(SweepPoint {
            control,
            resonance: row.resonance_ghz,
            depth_db: row.depth_db,
        });
    }
    Ok(points)
}
