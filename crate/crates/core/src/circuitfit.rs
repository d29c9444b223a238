//! Equivalent-circuit fitting.
//!
//! Free element values of a [`NetlistTemplate`] are adjusted so that the
//! simulated |S21| (and optionally |S11|) in dB matches a target response.
//! The search is a Nelder–Mead simplex in log-parameter space; points that
//! leave the box `[ln lower, ln upper]` are folded back by reflection at the
//! boundary. Extra restarts start from log-uniform points drawn from a
//! seeded ChaCha8 stream, and the best run wins (ties go to the lowest
//! restart index).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::network::{Netlist, NetlistTemplate, NetworkError};
use crate::response::{magnitude_db, FrequencyResponse, Mode};

/// Floor applied to model and target dB values before differencing.
pub const OBJECTIVE_DB_FLOOR: f64 = -200.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("template has no free parameters")]
    NoFreeParams,
    #[error("expected {expected} parameter values, got {got}")]
    WrongParamCount { expected: usize, got: usize },
    #[error("parameter {index} = {value} outside [{lower}, {upper}]")]
    OutOfBounds {
        index: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },
    #[error("weights must be {expected} finite non-negative values")]
    BadWeights { expected: usize },
    #[error("no objective channel selected")]
    NoChannels,
    #[error("target response is empty")]
    EmptyTarget,
    #[error("invalid options: {0}")]
    InvalidOptions(String),
    #[error("objective is not finite at the initial point")]
    NonFiniteInitial,
    #[error(transparent)]
    Network(#[from] NetworkError),
}

/// Which magnitudes enter the objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Channels {
    pub s11: bool,
    pub s21: bool,
}

impl Channels {
    pub const S21: Channels = Channels {
        s11: false,
        s21: true,
    };
    pub const BOTH: Channels = Channels { s11: true, s21: true };

    fn modes(self) -> Vec<Mode> {
        let mut m = Vec::new();
        if self.s11 {
            m.push(Mode::Reflection);
        }
        if self.s21 {
            m.push(Mode::Transmission);
        }
        m
    }
}

fn floored_db(z: num_complex::Complex64) -> f64 {
    magnitude_db(z).max(OBJECTIVE_DB_FLOOR)
}

#[derive(Debug, Clone)]
pub struct FitProblem {
    pub template: NetlistTemplate,
    pub target: FrequencyResponse,
    pub weights: Vec<f64>,
    pub channels: Channels,
    /// floored target dB per selected channel
    target_db: Vec<Vec<f64>>,
}

impl FitProblem {
    /// Problem with unit weights.
    pub fn new(
        template: NetlistTemplate,
        target: FrequencyResponse,
        channels: Channels,
    ) -> Result<Self, FitError> {
        let weights = vec![1.0; target.len()];
        Self::with_weights(template, target, weights, channels)
    }

    pub fn with_weights(
        template: NetlistTemplate,
        target: FrequencyResponse,
        weights: Vec<f64>,
        channels: Channels,
    ) -> Result<Self, FitError> {
        if template.free.is_empty() {
            return Err(FitError::NoFreeParams);
        }
        if target.is_empty() {
            return Err(FitError::EmptyTarget);
        }
        if weights.len() != target.len() || weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(FitError::BadWeights {
                expected: target.len(),
            });
        }
        let modes = channels.modes();
        if modes.is_empty() {
            return Err(FitError::NoChannels);
        }
        let target_db = modes
            .iter()
            .map(|&m| target.channel(m).map(floored_db).collect())
            .collect();
        Ok(Self {
            template,
            target,
            weights,
            channels,
            target_db,
        })
    }

    pub fn dimension(&self) -> usize {
        self.template.free.len()
    }

    pub fn lower(&self) -> Vec<f64> {
        self.template.free.iter().map(|p| p.lower).collect()
    }

    pub fn upper(&self) -> Vec<f64> {
        self.template.free.iter().map(|p| p.upper).collect()
    }

    pub fn initial(&self) -> Vec<f64> {
        self.template.initial_values()
    }

    fn check_bounds(&self, params: &[f64]) -> Result<(), FitError> {
        if params.len() != self.dimension() {
            return Err(FitError::WrongParamCount {
                expected: self.dimension(),
                got: params.len(),
            });
        }
        for (index, (p, &value)) in self.template.free.iter().zip(params).enumerate() {
            if !(p.lower..=p.upper).contains(&value) {
                return Err(FitError::OutOfBounds {
                    index,
                    value,
                    lower: p.lower,
                    upper: p.upper,
                });
            }
        }
        Ok(())
    }

    /// Netlist with the free parameters set to `params`.
    pub fn netlist_at(&self, params: &[f64]) -> Result<Netlist, FitError> {
        self.check_bounds(params)?;
        Ok(self.template.instantiate(params))
    }

    /// Weighted sum of squared dB differences over the selected channels.
    pub fn objective(&self, params: &[f64]) -> Result<f64, FitError> {
        let netlist = self.netlist_at(params)?;
        let modes = self.channels.modes();
        let mut total = 0.0;
        for (k, (&f, &w)) in self.target.freqs().iter().zip(&self.weights).enumerate() {
            let s = netlist.s_at(f)?;
            for (m, target) in modes.iter().zip(&self.target_db) {
                let diff = floored_db(s.channel(*m)) - target[k];
                total += w * diff * diff;
            }
        }
        Ok(total)
    }

    /// Weighted RMS dB error corresponding to an objective value.
    pub fn rms_db(&self, objective: f64) -> f64 {
        let norm: f64 = self.weights.iter().sum::<f64>() * self.target_db.len() as f64;
        if norm > 0.0 {
            (objective / norm).sqrt()
        } else {
            0.0
        }
    }
}

/// Free function form of [`FitProblem::objective`].
pub fn objective(p: &FitProblem, params: &[f64]) -> Result<f64, FitError> {
    p.objective(params)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Iteration cap per run (each restart counts separately).
    pub max_iters: usize,
    /// Convergence threshold on the spread of objective values across the
    /// simplex.
    pub tol: f64,
    /// Random restarts in addition to the run from the template's initial
    /// values.
    pub restarts: usize,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iters: 4000,
            tol: 1e-10,
            restarts: 0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    /// Fitted values in physical units, in template order.
    pub values: Vec<f64>,
    /// Weighted RMS dB error.
    pub residual: f64,
    pub objective: f64,
    /// Iterations of the winning run.
    pub iterations: usize,
    pub converged: bool,
    /// 0 for the run from the initial values.
    pub restart: usize,
}

/// Maps `x` into `[lo, hi]` by repeated reflection at the walls.
fn fold_into(x: f64, lo: f64, hi: f64) -> f64 {
    if (lo..=hi).contains(&x) {
        return x;
    }
    if !x.is_finite() {
        return if x > hi { hi } else { lo };
    }
    let width = hi - lo;
    let period = 2.0 * width;
    let y = (x - lo).rem_euclid(period);
    let folded = if y > width { period - y } else { y };
    (lo + folded).clamp(lo, hi)
}

struct Run {
    x: Vec<f64>,
    f: f64,
    iterations: usize,
    converged: bool,
}

/// Nelder–Mead on a box in log space. Vertices are kept sorted by
/// (objective, insertion order) so ties resolve deterministically.
fn nelder_mead<F: Fn(&[f64]) -> f64>(
    f: &F,
    x0: &[f64],
    lo: &[f64],
    hi: &[f64],
    max_iters: usize,
    tol: f64,
) -> Run {
    const ALPHA: f64 = 1.0;
    const GAMMA: f64 = 2.0;
    const RHO: f64 = 0.5;
    const SIGMA: f64 = 0.5;

    let n = x0.len();
    let fold = |x: Vec<f64>| -> Vec<f64> {
        x.into_iter()
            .enumerate()
            .map(|(i, v)| fold_into(v, lo[i], hi[i]))
            .collect()
    };

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), f(x0)));
    for i in 0..n {
        let mut x = x0.to_vec();
        let step = 0.1 * (hi[i] - lo[i]);
        x[i] = if x[i] + step <= hi[i] {
            x[i] + step
        } else {
            x[i] - step
        };
        let x = fold(x);
        let fx = f(&x);
        simplex.push((x, fx));
    }

    let sort = |s: &mut Vec<(Vec<f64>, f64)>| {
        s.sort_by(|a, b| a.1.total_cmp(&b.1));
    };
    sort(&mut simplex);

    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iters {
        let spread = simplex[n].1 - simplex[0].1;
        if spread.is_finite() && spread < tol {
            converged = true;
            break;
        }
        iterations += 1;

        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|v| v.0[j]).sum::<f64>() / n as f64)
            .collect();
        let toward = |coef: f64, from: &[f64]| -> Vec<f64> {
            fold(
                centroid
                    .iter()
                    .zip(from)
                    .map(|(c, x)| c + coef * (x - c))
                    .collect(),
            )
        };

        let worst = simplex[n].0.clone();
        let xr = toward(-ALPHA, &worst);
        let fr = f(&xr);
        if fr < simplex[0].1 {
            let xe = toward(-ALPHA * GAMMA, &worst);
            let fe = f(&xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr < simplex[n].1 {
                let xc = toward(-ALPHA * RHO, &worst);
                let fc = f(&xc);
                (xc, fc)
            } else {
                let xc = toward(RHO, &worst);
                let fc = f(&xc);
                (xc, fc)
            };
            if fc < fr.min(simplex[n].1) {
                simplex[n] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for v in simplex.iter_mut().skip(1) {
                    let x = fold(best.iter().zip(&v.0).map(|(b, x)| b + SIGMA * (x - b)).collect());
                    v.1 = f(&x);
                    v.0 = x;
                }
            }
        }
        sort(&mut simplex);
    }
    let (x, fx) = simplex.swap_remove(0);
    Run {
        x,
        f: fx,
        iterations,
        converged,
    }
}

/// Runs the simplex from `start` (log space), re-seeding a fresh simplex
/// around the best point until a restart no longer improves the objective.
fn polished_run<F: Fn(&[f64]) -> f64>(
    f: &F,
    start: &[f64],
    lo: &[f64],
    hi: &[f64],
    opts: &FitOptions,
) -> Run {
    let mut run = nelder_mead(f, start, lo, hi, opts.max_iters, opts.tol);
    let mut total = run.iterations;
    while total < opts.max_iters {
        let next = nelder_mead(f, &run.x, lo, hi, opts.max_iters - total, opts.tol);
        total += next.iterations;
        let improved = next.f < run.f - opts.tol;
        if next.f < run.f {
            run = Run {
                converged: next.converged,
                ..next
            };
        }
        if !improved {
            break;
        }
    }
    run.iterations = total;
    run
}

/// Fits the free parameters of `p`.
pub fn fit_netlist(p: &FitProblem, opts: &FitOptions) -> Result<FitResult, FitError> {
    if opts.max_iters < 1 {
        return Err(FitError::InvalidOptions("max_iters must be at least 1".into()));
    }
    if opts.tol.is_nan() || opts.tol < 0.0 {
        return Err(FitError::InvalidOptions("tol must be non-negative".into()));
    }
    let initial = p.initial();
    let f_init = p.objective(&initial)?;
    if !f_init.is_finite() {
        return Err(FitError::NonFiniteInitial);
    }

    let lower = p.lower();
    let upper = p.upper();
    let lo: Vec<f64> = lower.iter().map(|v| v.ln()).collect();
    let hi: Vec<f64> = upper.iter().map(|v| v.ln()).collect();
    let to_physical = |x: &[f64]| -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(i, v)| v.exp().clamp(lower[i], upper[i]))
            .collect()
    };
    let eval = |x: &[f64]| -> f64 {
        match p.objective(&to_physical(x)) {
            Ok(v) if v.is_finite() => v,
            _ => f64::INFINITY,
        }
    };

    let mut starts: Vec<Vec<f64>> = vec![initial.iter().map(|v| v.ln()).collect()];
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for _ in 0..opts.restarts {
        starts.push((0..lo.len()).map(|i| rng.gen_range(lo[i]..=hi[i])).collect());
    }

    let mut best: Option<(usize, Run)> = None;
    for (index, start) in starts.iter().enumerate() {
        let run = polished_run(&eval, start, &lo, &hi, opts);
        if best.as_ref().is_none_or(|(_, b)| run.f < b.f) {
            best = Some((index, run));
        }
    }
    let (restart, run) = best.expect("at least one start");

    let (values, objective) = if run.f <= f_init {
        (to_physical(&run.x), run.f)
    } else {
        (initial, f_init)
    };
    Ok(FitResult {
        residual: p.rms_db(objective),
        values,
        objective,
        iterations: run.iterations,
        converged: run.converged,
        restart,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{simulate, Element, Topology};
    use crate::response::linear_sweep;

    fn template(text: &str) -> NetlistTemplate {
        NetlistTemplate::parse(text).unwrap()
    }

    fn shunt_rlc_target(freqs: &[f64]) -> FrequencyResponse {
        let n = Netlist::new(
            vec![Element::series_rlc(Topology::Shunt, Some(2.0), Some(1e-9), Some(1e-12)).unwrap()],
            50.0,
        )
        .unwrap();
        simulate(&n, freqs).unwrap()
    }

    const ONE_FREE: &str = "[[element]]\ntopology = \"shunt\"\nkind = \"RLC_S\"\n\
        r_ohm = 2.0\nl_h = 1e-9\nc_f = \"?3e-12:1e-13:1e-11\"\n";

    #[test]
    fn self_target_is_zero() {
        let freqs = linear_sweep(1e9, 10e9, 201);
        let p = FitProblem::new(template(ONE_FREE), shunt_rlc_target(&freqs), Channels::BOTH).unwrap();
        assert_eq!(p.objective(&[1e-12]).unwrap(), 0.0);
        assert!(p.objective(&[3e-12]).unwrap() > 0.0);
    }

    #[test]
    fn six_db_single_point() {
        // series R = 50 gives |S21| = 2/3; target built from |S21| one 6 dB step lower
        let t = template("[[element]]\ntopology = \"series\"\nkind = \"R\"\nr_ohm = \"?50:1:100\"\n");
        let s21 = (2.0f64 / 3.0) * 10f64.powf(-6.0 / 20.0);
        let s = crate::response::SParams::new(
            num_complex::Complex64::new(0.0, 0.0),
            num_complex::Complex64::new(s21, 0.0),
            num_complex::Complex64::new(s21, 0.0),
            num_complex::Complex64::new(0.0, 0.0),
        );
        let target = FrequencyResponse::new(vec![1e9], vec![s], 50.0).unwrap();
        let p = FitProblem::new(t, target, Channels::S21).unwrap();
        assert!((p.objective(&[50.0]).unwrap() - 36.0).abs() < 1e-9);
        assert!((p.rms_db(36.0) - 6.0).abs() < 1e-12);
    }

    #[test]
    fn out_of_bounds_rejected() {
        let freqs = linear_sweep(1e9, 10e9, 11);
        let p = FitProblem::new(template(ONE_FREE), shunt_rlc_target(&freqs), Channels::S21).unwrap();
        assert!(matches!(
            p.objective(&[1e-10]),
            Err(FitError::OutOfBounds { index: 0, .. })
        ));
        assert!(matches!(p.objective(&[]), Err(FitError::WrongParamCount { .. })));
    }

    #[test]
    fn option_and_problem_validation() {
        let freqs = linear_sweep(1e9, 10e9, 11);
        let target = shunt_rlc_target(&freqs);
        let p = FitProblem::new(template(ONE_FREE), target.clone(), Channels::S21).unwrap();
        let opts = FitOptions {
            max_iters: 0,
            ..FitOptions::default()
        };
        assert!(matches!(fit_netlist(&p, &opts), Err(FitError::InvalidOptions(_))));
        let none = Channels {
            s11: false,
            s21: false,
        };
        assert!(matches!(
            FitProblem::new(template(ONE_FREE), target.clone(), none),
            Err(FitError::NoChannels)
        ));
        let fixed = template("[[element]]\ntopology = \"series\"\nkind = \"R\"\nr_ohm = 1\n");
        assert!(matches!(
            FitProblem::new(fixed, target.clone(), Channels::S21),
            Err(FitError::NoFreeParams)
        ));
        assert!(matches!(
            FitProblem::with_weights(template(ONE_FREE), target, vec![1.0; 3], Channels::S21),
            Err(FitError::BadWeights { .. })
        ));
    }

    #[test]
    fn fold_reflects_at_walls() {
        assert_eq!(fold_into(0.5, 0.0, 1.0), 0.5);
        assert!((fold_into(1.25, 0.0, 1.0) - 0.75).abs() < 1e-15);
        assert!((fold_into(-0.25, 0.0, 1.0) - 0.25).abs() < 1e-15);
        assert!((fold_into(2.25, 0.0, 1.0) - 0.25).abs() < 1e-15);
        assert_eq!(fold_into(f64::INFINITY, 0.0, 1.0), 1.0);
    }

    #[test]
    fn nelder_mead_minimises_quadratic() {
        let f = |x: &[f64]| (x[0] - 0.3).powi(2) + 10.0 * (x[1] + 0.2).powi(2);
        let run = nelder_mead(&f, &[1.0, 1.0], &[-2.0, -2.0], &[2.0, 2.0], 2000, 1e-16);
        assert!(run.converged);
        assert!(
            (run.x[0] - 0.3).abs() < 1e-6 && (run.x[1] + 0.2).abs() < 1e-6,
            "{:?}",
            run.x
        );
    }

    #[test]
    fn one_parameter_fit_recovers_capacitance() {
        let freqs = linear_sweep(1e9, 10e9, 401);
        let p = FitProblem::new(template(ONE_FREE), shunt_rlc_target(&freqs), Channels::S21).unwrap();
        let r = fit_netlist(&p, &FitOptions::default()).unwrap();
        assert!((r.values[0] / 1e-12 - 1.0).abs() < 1e-6, "{r:?}");
        assert!(r.residual < 1e-4);
    }
}
