//! Analysis toolkit for resonant microwave permittivity sensors.
//!
//! The pipeline runs from measured or simulated two-port S-parameters
//! ([`touchstone`]) through lumped ladder-network simulation ([`network`]),
//! notch detection ([`resonance`]), the constrained parabolic calibration
//! model used to turn a notch frequency into a relative permittivity
//! ([`calibration`]), sensitivity figures of merit ([`sensitivity`]),
//! cavity-perturbation frequency shifts ([`perturbation`]) and
//! equivalent-circuit fitting ([`circuitfit`]).

pub mod calibration;
pub mod circuitfit;
pub mod network;
pub mod perturbation;
pub mod resonance;
pub mod response;
pub mod sensitivity;
pub mod sum;
pub mod touchstone;

pub use num_complex::Complex64;
pub use response::{magnitude_db, FrequencyResponse, Mode, ResponseError, SParams, DB_FLOOR};
