//! Cavity-perturbation frequency shift as a Riemann sum over voxels.
//!
//! ```text
//! Δf/f = −Σ (Δε·Re(E1·E0*) + Δμ·Re(H1·H0*))·Δv  /  Σ (ε0|E0|² + μ0|H0|²)·Δv
//! ```
//!
//! The leading minus makes a positive permittivity change with aligned
//! fields lower the resonance. The electric-only form drops both magnetic
//! terms. Sums use [`pairwise_sum`], so results are bit-stable for a
//! given cell order.

use num_complex::Complex64;
use thiserror::Error;

use crate::sum::pairwise_sum;

pub const VACUUM_PERMITTIVITY: f64 = 8.854_187_812_8e-12;
pub const VACUUM_PERMEABILITY: f64 = 1.256_637_062_12e-6;

pub type FieldVector = [Complex64; 3];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PerturbationError {
    #[error("per-cell array `{name}` has {len} entries, expected {expected}")]
    LengthMismatch {
        name: &'static str,
        len: usize,
        expected: usize,
    },
    #[error("cell volume must be positive, got {0}")]
    BadCellVolume(f64),
    #[error("stored-energy denominator is zero")]
    ZeroDenominator,
    #[error("field grid file line {line}: {message}")]
    Format { line: usize, message: String },
}

/// Voxelised fields on a uniform grid. Missing magnetic arrays are treated
/// as zero.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldGrid {
    /// m³
    pub cell_volume: f64,
    pub e0: Vec<FieldVector>,
    pub e1: Vec<FieldVector>,
    pub h0: Option<Vec<FieldVector>>,
    pub h1: Option<Vec<FieldVector>>,
    /// F/m
    pub delta_eps: Vec<f64>,
    /// H/m
    pub delta_mu: Option<Vec<f64>>,
    pub eps0: f64,
    pub mu0: f64,
}

fn hermitian_re(a: &FieldVector, b: &FieldVector) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x * y.conj()).re).sum()
}

fn norm_sqr(a: &FieldVector) -> f64 {
    a.iter().map(Complex64::norm_sqr).sum()
}

impl FieldGrid {
    /// Electric-only grid with vacuum constants.
    pub fn electric(
        cell_volume: f64,
        e0: Vec<FieldVector>,
        e1: Vec<FieldVector>,
        delta_eps: Vec<f64>,
    ) -> Self {
        Self {
            cell_volume,
            e0,
            e1,
            h0: None,
            h1: None,
            delta_eps,
            delta_mu: None,
            eps0: VACUUM_PERMITTIVITY,
            mu0: VACUUM_PERMEABILITY,
        }
    }

    pub fn len(&self) -> usize {
        self.e0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.e0.is_empty()
    }

    pub fn validate(&self) -> Result<(), PerturbationError> {
        if !(self.cell_volume > 0.0 && self.cell_volume.is_finite()) {
            return Err(PerturbationError::BadCellVolume(self.cell_volume));
        }
        let expected = self.e0.len();
        let check = |name, len| {
            if len == expected {
                Ok(())
            } else {
                Err(PerturbationError::LengthMismatch { name, len, expected })
            }
        };
        check("e1", self.e1.len())?;
        check("delta_eps", self.delta_eps.len())?;
        if let Some(h) = &self.h0 {
            check("h0", h.len())?;
        }
        if let Some(h) = &self.h1 {
            check("h1", h.len())?;
        }
        if let Some(m) = &self.delta_mu {
            check("delta_mu", m.len())?;
        }
        Ok(())
    }

    /// Scales every Δε and Δμ by `alpha`.
    pub fn scaled(&self, alpha: f64) -> Self {
        let mut g = self.clone();
        g.delta_eps.iter_mut().for_each(|v| *v *= alpha);
        if let Some(m) = g.delta_mu.as_mut() {
            m.iter_mut().for_each(|v| *v *= alpha);
        }
        g
    }

    fn electric_numerator(&self) -> Vec<f64> {
        self.delta_eps
            .iter()
            .zip(self.e1.iter().zip(&self.e0))
            .map(|(de, (e1, e0))| de * hermitian_re(e1, e0))
            .collect()
    }

    fn magnetic_numerator(&self) -> Vec<f64> {
        match (&self.delta_mu, &self.h1, &self.h0) {
            (Some(dm), Some(h1), Some(h0)) => dm
                .iter()
                .zip(h1.iter().zip(h0))
                .map(|(d, (a, b))| d * hermitian_re(a, b))
                .collect(),
            _ => Vec::new(),
        }
    }

    fn electric_energy(&self) -> Vec<f64> {
        self.e0.iter().map(|e| self.eps0 * norm_sqr(e)).collect()
    }

    fn magnetic_energy(&self) -> Vec<f64> {
        self.h0
            .as_ref()
            .map(|h| h.iter().map(|v| self.mu0 * norm_sqr(v)).collect())
            .unwrap_or_default()
    }
}

fn ratio(numerator: f64, denominator: f64, dv: f64) -> Result<f64, PerturbationError> {
    let den = denominator * dv;
    if den.is_nan() || den <= 0.0 {
        return Err(PerturbationError::ZeroDenominator);
    }
    Ok(-(numerator * dv) / den)
}

/// Δf/f including the magnetic terms.
pub fn frequency_shift_full(g: &FieldGrid) -> Result<f64, PerturbationError> {
    g.validate()?;
    let num = pairwise_sum(&g.electric_numerator()) + pairwise_sum(&g.magnetic_numerator());
    let den = pairwise_sum(&g.electric_energy()) + pairwise_sum(&g.magnetic_energy());
    ratio(num, den, g.cell_volume)
}

/// Δf/f from the electric terms alone.
pub fn frequency_shift_electric(g: &FieldGrid) -> Result<f64, PerturbationError> {
    g.validate()?;
    let num = pairwise_sum(&g.electric_numerator());
    let den = pairwise_sum(&g.electric_energy());
    ratio(num, den, g.cell_volume)
}

const COMPONENTS: [&str; 3] = ["x", "y", "z"];
const FIELDS: [&str; 4] = ["e0", "e1", "h0", "h1"];

/// Column names of a field-grid file in canonical order.
pub fn field_grid_header() -> Vec<String> {
    let mut cols = Vec::with_capacity(26);
    for f in FIELDS {
        for c in COMPONENTS {
            cols.push(format!("{f}{c}_re"));
            cols.push(format!("{f}{c}_im"));
        }
    }
    cols.push("delta_eps".into());
    cols.push("delta_mu".into());
    cols
}

/// Parses a field-grid CSV.
///
/// The first line is metadata, `# cell_volume=<m³>[,eps0=<F/m>][,mu0=<H/m>]`;
/// the second is a header naming columns as in [`field_grid_header`]. The
/// `e0*`, `e1*` and `delta_eps` columns are required; magnetic columns and
/// `delta_mu` are optional and must be complete when present.
pub fn parse_field_grid(text: &str) -> Result<FieldGrid, PerturbationError> {
    let fmt_err = |line: usize, message: String| PerturbationError::Format { line, message };
    let mut lines = text.lines();
    let meta = lines.next().unwrap_or("").trim();
    let meta = meta
        .strip_prefix('#')
        .ok_or_else(|| fmt_err(1, "expected metadata line `# cell_volume=...`".into()))?;
    let mut cell_volume = None;
    let (mut eps0, mut mu0) = (VACUUM_PERMITTIVITY, VACUUM_PERMEABILITY);
    for item in meta.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| fmt_err(1, format!("expected key=value, got `{item}`")))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| fmt_err(1, format!("invalid number in `{item}`")))?;
        match k.trim() {
            "cell_volume" => cell_volume = Some(v),
            "eps0" => eps0 = v,
            "mu0" => mu0 = v,
            other => return Err(fmt_err(1, format!("unknown metadata key `{other}`"))),
        }
    }
    let cell_volume = cell_volume.ok_or_else(|| fmt_err(1, "missing cell_volume".into()))?;

    let body: String = lines.collect::<Vec<_>>().join("\n");
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(body.as_bytes());
    let headers = reader.headers().map_err(|e| fmt_err(2, e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);

    let field_cols = |f: &str| -> Result<Option<[usize; 6]>, PerturbationError> {
        let idx: Vec<Option<usize>> = COMPONENTS
            .iter()
            .flat_map(|c| [col(&format!("{f}{c}_re")), col(&format!("{f}{c}_im"))])
            .collect();
        match idx.iter().filter(|i| i.is_some()).count() {
            0 => Ok(None),
            6 => Ok(Some(std::array::from_fn(|k| idx[k].unwrap()))),
            _ => Err(fmt_err(2, format!("incomplete `{f}` columns"))),
        }
    };
    let e0c = field_cols("e0")?.ok_or_else(|| fmt_err(2, "missing e0 columns".into()))?;
    let e1c = field_cols("e1")?.ok_or_else(|| fmt_err(2, "missing e1 columns".into()))?;
    let h0c = field_cols("h0")?;
    let h1c = field_cols("h1")?;
    let dec = col("delta_eps").ok_or_else(|| fmt_err(2, "missing delta_eps column".into()))?;
    let dmc = col("delta_mu");

    let mut g = FieldGrid {
        cell_volume,
        e0: Vec::new(),
        e1: Vec::new(),
        h0: h0c.map(|_| Vec::new()),
        h1: h1c.map(|_| Vec::new()),
        delta_eps: Vec::new(),
        delta_mu: dmc.map(|_| Vec::new()),
        eps0,
        mu0,
    };
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize + 1);
            fmt_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize + 1);
        let num = |i: usize| -> Result<f64, PerturbationError> {
            let t = record.get(i).unwrap_or("");
            t.parse::<f64>()
                .map_err(|_| fmt_err(line, format!("invalid number `{t}`")))
        };
        let vec3 = |c: [usize; 6]| -> Result<FieldVector, PerturbationError> {
            Ok([
                Complex64::new(num(c[0])?, num(c[1])?),
                Complex64::new(num(c[2])?, num(c[3])?),
                Complex64::new(num(c[4])?, num(c[5])?),
            ])
        };
        g.e0.push(vec3(e0c)?);
        g.e1.push(vec3(e1c)?);
        if let (Some(c), Some(v)) = (h0c, g.h0.as_mut()) {
            v.push(vec3(c)?);
        }
        if let (Some(c), Some(v)) = (h1c, g.h1.as_mut()) {
            v.push(vec3(c)?);
        }
        g.delta_eps.push(num(dec)?);
        if let (Some(c), Some(v)) = (dmc, g.delta_mu.as_mut()) {
            v.push(num(c)?);
        }
    }
    g.validate()?;
    Ok(g)
}
