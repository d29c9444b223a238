//! Lumped two-port ladder networks.
//!
//! Each [`Element`] sits either in series with the signal path or as a
//! shunt to ground. Elements are converted to ABCD (chain) matrices,
//! multiplied in order from port 1 to port 2 and converted to S-parameters
//! against a real reference impedance.

mod netlist;

pub use netlist::{FreeParam, NetlistError, NetlistTemplate, ParamField};

use std::fmt;
use std::ops::Mul;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::response::{check_grid, FrequencyResponse, ResponseError, SParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    Series,
    Shunt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ElementKind {
    R,
    L,
    C,
    /// R, L and C in series.
    #[serde(rename = "RLC_S")]
    SeriesRlc,
    /// R, L and C in parallel.
    #[serde(rename = "RLC_P")]
    ParallelRlc,
}

impl fmt::Display for ElementKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ElementKind::R => "R",
            ElementKind::L => "L",
            ElementKind::C => "C",
            ElementKind::SeriesRlc => "RLC_S",
            ElementKind::ParallelRlc => "RLC_P",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetworkError {
    #[error("angular frequency must be positive, got {0} rad/s")]
    NonPositiveOmega(f64),
    #[error("invalid element: {0}")]
    InvalidElement(String),
    #[error("shunt element has zero impedance (infinite admittance)")]
    SingularElement,
    #[error("cannot cascade an empty list of matrices")]
    EmptyCascade,
    #[error("degenerate network: A + B/z0 + C*z0 + D = 0")]
    DegenerateNetwork,
    #[error("netlist has no elements")]
    EmptyNetlist,
    #[error("reference impedance must be positive, got {0} ohm")]
    InvalidZ0(f64),
    #[error("at {freq_hz} Hz: {source}")]
    AtFrequency {
        freq_hz: f64,
        #[source]
        source: Box<NetworkError>,
    },
    #[error(transparent)]
    Grid(#[from] ResponseError),
}

/// One lumped element.
///
/// Missing components of an RLC trio take the limit that removes them:
/// in a series trio an absent R or L is a short and an absent C is a short
/// (infinite capacitance); in a parallel trio any absent branch is open.
#[derive(Debug, Clone, PartialEq)]
pub struct Element {
    pub topology: Topology,
    pub kind: ElementKind,
    pub r: Option<f64>,
    pub l: Option<f64>,
    pub c: Option<f64>,
}

impl Element {
    fn build(
        topology: Topology,
        kind: ElementKind,
        r: Option<f64>,
        l: Option<f64>,
        c: Option<f64>,
    ) -> Result<Self, NetworkError> {
        let e = Self {
            topology,
            kind,
            r,
            l,
            c,
        };
        e.validate()?;
        Ok(e)
    }

    pub fn resistor(topology: Topology, r: f64) -> Result<Self, NetworkError> {
        Self::build(topology, ElementKind::R, Some(r), None, None)
    }

    pub fn inductor(topology: Topology, l: f64) -> Result<Self, NetworkError> {
        Self::build(topology, ElementKind::L, None, Some(l), None)
    }

    pub fn capacitor(topology: Topology, c: f64) -> Result<Self, NetworkError> {
        Self::build(topology, ElementKind::C, None, None, Some(c))
    }

    pub fn series_rlc(
        topology: Topology,
        r: Option<f64>,
        l: Option<f64>,
        c: Option<f64>,
    ) -> Result<Self, NetworkError> {
        Self::build(topology, ElementKind::SeriesRlc, r, l, c)
    }

    pub fn parallel_rlc(
        topology: Topology,
        r: Option<f64>,
        l: Option<f64>,
        c: Option<f64>,
    ) -> Result<Self, NetworkError> {
        Self::build(topology, ElementKind::ParallelRlc, r, l, c)
    }

    /// Resistance may be zero (a short); inductance and capacitance must be
    /// strictly positive. Single-component kinds need exactly their value.
    pub fn validate(&self) -> Result<(), NetworkError> {
        let bad = |msg: String| Err(NetworkError::InvalidElement(msg));
        if let Some(r) = self.r {
            if !(r >= 0.0 && r.is_finite()) {
                return bad(format!("resistance must be finite and >= 0, got {r}"));
            }
        }
        for (name, v) in [("inductance", self.l), ("capacitance", self.c)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return bad(format!("{name} must be finite and > 0, got {v}"));
                }
            }
        }
        let present = (self.r.is_some(), self.l.is_some(), self.c.is_some());
        let ok = match self.kind {
            ElementKind::R => present == (true, false, false),
            ElementKind::L => present == (false, true, false),
            ElementKind::C => present == (false, false, true),
            ElementKind::SeriesRlc | ElementKind::ParallelRlc => present.0 || present.1 || present.2,
        };
        if !ok {
            return bad(format!("{} element has the wrong set of values", self.kind));
        }
        Ok(())
    }

    /// Complex impedance in ohms at angular frequency `omega`.
    pub fn impedance(&self, omega: f64) -> Result<Complex64, NetworkError> {
        if !(omega > 0.0 && omega.is_finite()) {
            return Err(NetworkError::NonPositiveOmega(omega));
        }
        let j = Complex64::i();
        let z = match self.kind {
            ElementKind::R | ElementKind::L | ElementKind::C | ElementKind::SeriesRlc => {
                let mut z = Complex64::new(self.r.unwrap_or(0.0), 0.0);
                if let Some(l) = self.l {
                    z += j * omega * l;
                }
                if let Some(c) = self.c {
                    z += 1.0 / (j * omega * c);
                }
                z
            }
            ElementKind::ParallelRlc => {
                if self.r == Some(0.0) {
                    return Ok(Complex64::new(0.0, 0.0));
                }
                let mut y = Complex64::new(self.r.map_or(0.0, |r| 1.0 / r), 0.0);
                if let Some(l) = self.l {
                    y += 1.0 / (j * omega * l);
                }
                if let Some(c) = self.c {
                    y += j * omega * c;
                }
                1.0 / y
            }
        };
        Ok(z)
    }

    pub fn abcd(&self, omega: f64) -> Result<AbcdMatrix, NetworkError> {
        let z = self.impedance(omega)?;
        match self.topology {
            Topology::Series => Ok(AbcdMatrix::series(z)),
            Topology::Shunt => {
                if z == Complex64::new(0.0, 0.0) {
                    Err(NetworkError::SingularElement)
                } else {
                    Ok(AbcdMatrix::shunt(1.0 / z))
                }
            }
        }
    }
}

/// Chain matrix `[[a, b], [c, d]]`; `b` in ohms, `c` in siemens.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AbcdMatrix {
    pub a: Complex64,
    pub b: Complex64,
    pub c: Complex64,
    pub d: Complex64,
}

impl AbcdMatrix {
    pub fn identity() -> Self {
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        Self {
            a: one,
            b: zero,
            c: zero,
            d: one,
        }
    }

    /// Series impedance: `[[1, z], [0, 1]]`.
    pub fn series(z: Complex64) -> Self {
        Self {
            b: z,
            ..Self::identity()
        }
    }

    /// Shunt admittance: `[[1, 0], [y, 1]]`.
    pub fn shunt(y: Complex64) -> Self {
        Self {
            c: y,
            ..Self::identity()
        }
    }

    pub fn det(&self) -> Complex64 {
        self.a * self.d - self.b * self.c
    }

    /// S-parameters against real reference impedance `z0`.
    pub fn to_s(&self, z0: f64) -> Result<SParams, NetworkError> {
        self.to_s_with_det(z0, self.det())
    }

    /// As [`to_s`](AbcdMatrix::to_s) with the determinant supplied, e.g. as
    /// the product of the factors' determinants, which avoids cancellation
    /// in `ad − bc` for long cascades.
    pub fn to_s_with_det(&self, z0: f64, det: Complex64) -> Result<SParams, NetworkError> {
        if !(z0 > 0.0 && z0.is_finite()) {
            return Err(NetworkError::InvalidZ0(z0));
        }
        let bz = self.b / z0;
        let cz = self.c * z0;
        let delta = self.a + bz + cz + self.d;
        if delta == Complex64::new(0.0, 0.0) || !delta.is_finite() {
            return Err(NetworkError::DegenerateNetwork);
        }
        Ok(SParams {
            s11: (self.a + bz - cz - self.d) / delta,
            s21: 2.0 / delta,
            s12: 2.0 * det / delta,
            s22: (-self.a + bz - cz + self.d) / delta,
        })
    }
}

impl Mul for AbcdMatrix {
    type Output = AbcdMatrix;

    fn mul(self, rhs: AbcdMatrix) -> AbcdMatrix {
        AbcdMatrix {
            a: self.a * rhs.a + self.b * rhs.c,
            b: self.a * rhs.b + self.b * rhs.d,
            c: self.c * rhs.a + self.d * rhs.c,
            d: self.c * rhs.b + self.d * rhs.d,
        }
    }
}

pub fn element_impedance(e: &Element, omega: f64) -> Result<Complex64, NetworkError> {
    e.impedance(omega)
}

pub fn element_abcd(e: &Element, omega: f64) -> Result<AbcdMatrix, NetworkError> {
    e.abcd(omega)
}

/// Ordered product, first matrix nearest port 1.
pub fn cascade(ms: &[AbcdMatrix]) -> Result<AbcdMatrix, NetworkError> {
    let (first, rest) = ms.split_first().ok_or(NetworkError::EmptyCascade)?;
    Ok(rest.iter().fold(*first, |acc, m| acc * *m))
}

pub fn abcd_to_s(m: &AbcdMatrix, z0: f64) -> Result<SParams, NetworkError> {
    m.to_s(z0)
}

/// Elements in order from port 1 to port 2, with the reference impedance
/// used for S-parameter conversion.
#[derive(Debug, Clone, PartialEq)]
pub struct Netlist {
    pub elements: Vec<Element>,
    pub z0: f64,
}

impl Netlist {
    pub fn new(elements: Vec<Element>, z0: f64) -> Result<Self, NetworkError> {
        let n = Self { elements, z0 };
        n.validate()?;
        Ok(n)
    }

    pub fn validate(&self) -> Result<(), NetworkError> {
        if self.elements.is_empty() {
            return Err(NetworkError::EmptyNetlist);
        }
        if !(self.z0 > 0.0 && self.z0.is_finite()) {
            return Err(NetworkError::InvalidZ0(self.z0));
        }
        self.elements.iter().try_for_each(Element::validate)
    }

    pub fn abcd(&self, omega: f64) -> Result<AbcdMatrix, NetworkError> {
        let ms = self
            .elements
            .iter()
            .map(|e| e.abcd(omega))
            .collect::<Result<Vec<_>, _>>()?;
        cascade(&ms)
    }

    /// S-parameters at one frequency in Hz.
    pub fn s_at(&self, freq_hz: f64) -> Result<SParams, NetworkError> {
        let omega = 2.0 * std::f64::consts::PI * freq_hz;
        self.elements
            .iter()
            .map(|e| e.abcd(omega))
            .collect::<Result<Vec<_>, _>>()
            .and_then(|ms| {
                let det = ms.iter().map(AbcdMatrix::det).product();
                cascade(&ms)?.to_s_with_det(self.z0, det)
            })
            .map_err(|e| NetworkError::AtFrequency {
                freq_hz,
                source: Box::new(e),
            })
    }
}

/// Default number of sweep points.
pub const DEFAULT_SWEEP_POINTS: usize = 1001;

/// Evaluates the netlist at every frequency (Hz).
pub fn simulate(n: &Netlist, freqs: &[f64]) -> Result<FrequencyResponse, NetworkError> {
    n.validate()?;
    check_grid(freqs)?;
    let s = freqs.iter().map(|&f| n.s_at(f)).collect::<Result<Vec<_>, _>>()?;
    Ok(FrequencyResponse::new(freqs.to_vec(), s, n.z0)?)
}
