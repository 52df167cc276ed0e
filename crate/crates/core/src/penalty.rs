//! The penalty loop: solve a sequence of penalized subproblems with SPG and
//! Dykstra projections while the penalty parameter grows, until the
//! complementarity product `x^T y` and the base objective both settle.

use std::time::Instant;

use nalgebra::{DMatrix, DVector, DVectorView};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::portfolio::{build_feasible_sets, PairPoint, PenalizedObjective, PortfolioProblem};
use crate::sets::{ConvexSetSpec, DykstraConfig, IntersectionProjector};
use crate::spg::{spg_minimize, SpgConfig};

/// Entries with magnitude at or below this count as zero holdings.
pub const DEFAULT_NONZERO_THRESHOLD: f64 = 1e-6;

/// The smooth part of the penalized objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BaseTerm {
    /// `x^T Q x / 2`
    Risk,
    /// `-v^T x`
    NegativeReturn,
}

impl BaseTerm {
    pub fn value(&self, problem: &PortfolioProblem, x: DVectorView<'_, f64>) -> f64 {
        match self {
            BaseTerm::Risk => 0.5 * problem.variance(x),
            BaseTerm::NegativeReturn => -problem.expected_return(x),
        }
    }

    pub fn gradient(&self, problem: &PortfolioProblem, x: DVectorView<'_, f64>) -> DVector<f64> {
        match self {
            BaseTerm::Risk => problem.covariance() * x,
            BaseTerm::NegativeReturn => -problem.mean_returns(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyConfig {
    /// Projected-gradient tolerance for every subproblem.
    pub tol1: f64,
    /// Tolerance on `x^T y` and on the change of the base objective.
    pub tol2: f64,
    pub max_outer_iterations: usize,
    pub tau_initial_override: Option<f64>,
    pub nonzero_threshold: f64,
    /// `pg_tolerance` is overwritten with `tol1`.
    pub spg: SpgConfig,
    pub dykstra: DykstraConfig,
}

/// Step cap used inside the penalty loop. Trial points `z - sigma g` far
/// outside the feasible region take Dykstra thousands of cycles to pull back.
pub const PENALTY_STEP_MAX: f64 = 1e3;

/// Dykstra tolerance used inside the penalty loop. The squared increment
/// change must be small enough that the projection error sits well below
/// `tol1` and the complementarity target `tol2`.
pub const PENALTY_DYKSTRA_EPSILON: f64 = 1e-20;

/// Dykstra cycle cap used inside the penalty loop. Nearly parallel return
/// and budget constraints can need well over ten thousand cycles.
pub const PENALTY_DYKSTRA_MAX_CYCLES: usize = 200_000;

/// Consecutive outer iterations whose subproblem starts at a stationary
/// point (zero SPG steps) after which the loop gives up. Raising tau only
/// inflates the gradients from there on.
pub const STALLED_OUTER_ITERATIONS: usize = 20;

/// Largest constraint violation a settled solution may carry. Guards the
/// stopping test against a lenient projection that ran out of cycles.
pub const SETTLED_FEASIBILITY_TOLERANCE: f64 = 1e-8;

impl Default for PenaltyConfig {
    fn default() -> Self {
        Self {
            tol1: 1e-6,
            tol2: 1e-8,
            max_outer_iterations: 100,
            tau_initial_override: None,
            nonzero_threshold: DEFAULT_NONZERO_THRESHOLD,
            spg: SpgConfig {
                step_max: PENALTY_STEP_MAX,
                ..SpgConfig::default()
            },
            dykstra: DykstraConfig {
                epsilon: PENALTY_DYKSTRA_EPSILON,
                max_cycles: PENALTY_DYKSTRA_MAX_CYCLES,
            },
        }
    }
}

impl PenaltyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol1 > 0.0) || !(self.tol2 > 0.0) || self.max_outer_iterations == 0 {
            return Err(Error::InvalidProblem(format!(
                "penalty config needs tol1, tol2 > 0 and at least one outer iteration: {self:?}"
            )));
        }
        if let Some(tau) = self.tau_initial_override {
            if !(tau > 0.0) || !tau.is_finite() {
                return Err(Error::InvalidProblem(format!(
                    "initial tau must be positive, got {tau}"
                )));
            }
        }
        if !(self.nonzero_threshold >= 0.0) {
            return Err(Error::InvalidProblem("nonzero threshold must be >= 0".into()));
        }
        self.dykstra.validate()?;
        let mut spg = self.spg;
        spg.pg_tolerance = self.tol1;
        spg.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyState {
    pub tau: f64,
    pub delta: f64,
    pub outer_index: usize,
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub objective_history: Vec<f64>,
    pub hadamard_history: Vec<f64>,
    pub tau_history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub x_star: DVector<f64>,
    pub y_star: DVector<f64>,
    pub expected_return: f64,
    pub risk: f64,
    pub cardinality: usize,
    pub outer_iterations: usize,
    pub spg_iterations: usize,
    pub function_evaluations: usize,
    pub final_tau: f64,
    pub hadamard: f64,
    pub pg_norm: f64,
    pub wall_time_seconds: f64,
    pub converged: bool,
    /// `tau_k` for k = 0, 1, ... (the initial value is not included).
    pub tau_history: Vec<f64>,
    pub hadamard_history: Vec<f64>,
    /// Base objective at each outer iterate.
    pub objective_history: Vec<f64>,
}

/// Rayleigh quotient `z^T Q z / z^T z` at `z = Q e`, a cheap estimate of the
/// largest eigenvalue used as the first penalty parameter.
pub fn initial_tau(q: &DMatrix<f64>) -> Result<f64> {
    if !q.is_square() || q.nrows() == 0 {
        return Err(Error::InvalidProblem(format!(
            "expected a nonempty square matrix, got {}x{}",
            q.nrows(),
            q.ncols()
        )));
    }
    let n = q.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if (q[(i, j)] - q[(j, i)]).abs() > 1e-12 {
                return Err(Error::InvalidProblem(format!(
                    "matrix not symmetric at ({}, {})",
                    i + 1,
                    j + 1
                )));
            }
        }
    }
    let z = q * DVector::from_element(n, 1.0);
    let zz = z.norm_squared();
    if zz == 0.0 {
        return Ok(1.0);
    }
    Ok(z.dot(&(q * &z)) / zz)
}

/// Next `(tau, delta)` from the iterate held in `state`.
///
/// The increment `(n - alpha) rho / n * |v^T x| / sqrt(x^T Q x)` is clamped
/// at zero (negative targets would shrink tau) and replaced by 1 when the
/// risk vanishes.
pub fn update_tau(state: &PenaltyState, problem: &PortfolioProblem) -> (f64, f64) {
    let increment = tau_increment(problem, state.x.as_view());
    let delta = state.delta + increment;
    (delta * state.tau, delta)
}

fn tau_increment(problem: &PortfolioProblem, x: DVectorView<'_, f64>) -> f64 {
    let n = problem.n() as f64;
    let scale = (n - problem.alpha() as f64) * problem.rho() / n;
    if scale == 0.0 {
        return 0.0;
    }
    let risk = problem.risk(x);
    if !(risk > 0.0) {
        return 1.0;
    }
    let increment = scale * problem.expected_return(x).abs() / risk;
    if increment < 0.0 {
        log::info!("negative return target gives tau increment {increment:e}; clamped to 0");
        return 0.0;
    }
    increment
}

/// Number of entries with `|x_i| > threshold`.
pub fn count_nonzeros(x: &DVector<f64>, threshold: f64) -> usize {
    x.iter().filter(|v| v.abs() > threshold).count()
}

/// Runs the penalty loop on the problem's full relaxed feasible set with the
/// risk objective.
pub fn pspgd_solve(problem: &PortfolioProblem, config: &PenaltyConfig) -> Result<SolveReport> {
    solve_penalized(problem, build_feasible_sets(problem), BaseTerm::Risk, config)
}

/// The penalty loop over an arbitrary list of sets in `R^{2n}`.
///
/// Starts from `x = e/n, y = 0`, grows tau with [`update_tau`] before every
/// subproblem, warm-starts each SPG solve from the previous solution and
/// stops once `x^T y <= tol2` and the base objective moved by at most `tol2`.
pub fn solve_penalized(
    problem: &PortfolioProblem,
    sets: Vec<ConvexSetSpec>,
    base: BaseTerm,
    config: &PenaltyConfig,
) -> Result<SolveReport> {
    config.validate()?;
    let started = Instant::now();
    let n = problem.n();
    let projector = IntersectionProjector::new(sets, config.dykstra)?;
    if projector.dimension() != 2 * n {
        return Err(Error::DimensionMismatch {
            expected: 2 * n,
            found: projector.dimension(),
        });
    }
    let mut spg_config = config.spg;
    spg_config.pg_tolerance = config.tol1;

    let tau_start = match config.tau_initial_override {
        Some(tau) => tau,
        None => initial_tau(problem.covariance())?,
    };

    let x_start = DVector::from_element(n, 1.0 / n as f64);
    let mut state = PenaltyState {
        tau: tau_start,
        delta: 1.0,
        outer_index: 0,
        objective_history: Vec::new(),
        hadamard_history: Vec::new(),
        tau_history: Vec::new(),
        y: DVector::zeros(n),
        x: x_start,
    };
    let mut previous_objective = base.value(problem, state.x.as_view());
    let mut z = projector.project(PairPoint::from_parts(&state.x, &state.y)?.as_vector());

    let mut spg_iterations = 0;
    let mut fcnt = 0;
    let mut stalled = 0;

    for k in 0..config.max_outer_iterations {
        let (tau, delta) = update_tau(&state, problem);
        state.tau = tau;
        state.delta = delta;
        state.outer_index = k;

        let objective = PenalizedObjective { problem, tau, base };
        let report =
            spg_minimize(&objective, |p: &DVector<f64>| projector.project(p), &z, &spg_config).map_err(|source| {
                Error::Subproblem {
                    outer: k,
                    source: Box::new(source),
                }
            })?;
        spg_iterations += report.iterations;
        fcnt += report.function_evaluations;
        if !report.converged {
            log::warn!(
                "subproblem {k} stopped after {} SPG iterations at pg-norm {:e}",
                report.iterations,
                report.final_pg_norm
            );
        }

        let pair = PairPoint::from_vector(report.solution.clone())?;
        state.x = pair.x().into_owned();
        state.y = pair.y().into_owned();
        let hadamard = pair.hadamard();
        let current_objective = base.value(problem, pair.x());
        state.tau_history.push(tau);
        state.hadamard_history.push(hadamard);
        state.objective_history.push(current_objective);
        log::debug!(
            "outer {k}: tau {tau:.6e}, x'y {hadamard:.3e}, f {current_objective:.10e}, spg {} its, pg {:.3e}",
            report.iterations,
            report.final_pg_norm
        );

        let violation = projector
            .sets()
            .iter()
            .map(|set| set.violation(&report.solution))
            .fold(0.0, f64::max);
        if violation > SETTLED_FEASIBILITY_TOLERANCE {
            log::debug!("outer {k}: subproblem solution violates a constraint by {violation:e}");
        }
        let settled = hadamard <= config.tol2
            && (current_objective - previous_objective).abs() <= config.tol2
            && report.converged
            && violation <= SETTLED_FEASIBILITY_TOLERANCE;
        previous_objective = current_objective;
        z = report.solution;
        stalled = if report.iterations == 0 { stalled + 1 } else { 0 };
        let stuck = !settled && stalled >= STALLED_OUTER_ITERATIONS;
        if stuck {
            log::debug!("outer {k}: iterate unchanged for {stalled} subproblems; stopping");
        }

        if settled || stuck || k + 1 == config.max_outer_iterations {
            let solve = assemble_report(
                problem,
                &state,
                report.final_pg_norm,
                spg_iterations,
                fcnt,
                started.elapsed().as_secs_f64(),
                settled,
                config,
            );
            if settled {
                return Ok(solve);
            }
            return Err(Error::PenaltyNotConverged {
                report: Box::new(solve),
            });
        }
    }
    unreachable!("the loop returns on its last iteration")
}

#[allow(clippy::too_many_arguments)]
fn assemble_report(
    problem: &PortfolioProblem,
    state: &PenaltyState,
    pg_norm: f64,
    spg_iterations: usize,
    fcnt: usize,
    wall_time_seconds: f64,
    converged: bool,
    config: &PenaltyConfig,
) -> SolveReport {
    SolveReport {
        expected_return: problem.expected_return(state.x.as_view()),
        risk: problem.risk(state.x.as_view()),
        cardinality: count_nonzeros(&state.x, config.nonzero_threshold),
        outer_iterations: state.outer_index + 1,
        spg_iterations,
        function_evaluations: fcnt,
        final_tau: state.tau,
        hadamard: state.x.dot(&state.y),
        pg_norm,
        wall_time_seconds,
        converged,
        tau_history: state.tau_history.clone(),
        hadamard_history: state.hadamard_history.clone(),
        objective_history: state.objective_history.clone(),
        x_star: state.x.clone(),
        y_star: state.y.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};

    fn state_at(x: DVector<f64>, delta: f64, tau: f64) -> PenaltyState {
        let n = x.len();
        PenaltyState {
            tau,
            delta,
            outer_index: 0,
            y: DVector::zeros(n),
            x,
            objective_history: vec![],
            hadamard_history: vec![],
            tau_history: vec![],
        }
    }

    #[test]
    fn initial_tau_of_identity() {
        assert_eq!(initial_tau(&DMatrix::identity(3, 3)).unwrap(), 1.0);
    }

    #[test]
    fn initial_tau_single_direction() {
        assert_eq!(initial_tau(&dmatrix![2.0, 0.0; 0.0, 0.0]).unwrap(), 2.0);
    }

    #[test]
    fn initial_tau_zero_matrix_falls_back() {
        assert_eq!(initial_tau(&DMatrix::zeros(2, 2)).unwrap(), 1.0);
    }

    #[test]
    fn initial_tau_rejects_bad_shapes() {
        assert!(initial_tau(&DMatrix::zeros(2, 3)).is_err());
        assert!(initial_tau(&dmatrix![1.0, 0.5; 0.4, 1.0]).is_err());
    }

    #[test]
    fn count_nonzeros_threshold() {
        assert_eq!(count_nonzeros(&dvector![0.5, 0.0, 0.5], 1e-6), 2);
        assert_eq!(count_nonzeros(&dvector![1e-7, 1e-7, 1.0], 1e-6), 1);
    }

    fn two_asset(rho: f64, alpha: usize) -> PortfolioProblem {
        PortfolioProblem::new(dmatrix![0.04, 0.01; 0.01, 0.09], dvector![0.02, -0.01], rho, alpha).unwrap()
    }

    #[test]
    fn tau_fixed_without_cardinality_pressure() {
        let p = two_asset(0.01, 2);
        let (tau, delta) = update_tau(&state_at(dvector![0.5, 0.5], 1.0, 0.3), &p);
        assert_eq!((tau, delta), (0.3, 1.0));
    }

    #[test]
    fn tau_fixed_for_zero_target() {
        let p = two_asset(0.0, 1);
        let (tau, delta) = update_tau(&state_at(dvector![0.5, 0.5], 1.0, 0.3), &p);
        assert_eq!((tau, delta), (0.3, 1.0));
    }

    #[test]
    fn tau_increment_formula() {
        // n = 2, alpha = 1, rho = 0.01 at x = e_1: increment = 0.005 * 0.02 / 0.2
        let p = two_asset(0.01, 1);
        let (tau, delta) = update_tau(&state_at(dvector![1.0, 0.0], 1.0, 0.3), &p);
        assert!((delta - 1.0005).abs() < 1e-15);
        assert!((tau - 0.3 * 1.0005).abs() < 1e-15);
    }

    #[test]
    fn negative_target_does_not_shrink_tau() {
        let p = two_asset(-0.01, 1);
        let (tau, delta) = update_tau(&state_at(dvector![1.0, 0.0], 1.2, 0.3), &p);
        assert_eq!((tau, delta), (1.2 * 0.3, 1.2));
    }

    #[test]
    fn zero_risk_falls_back_to_unit_increment() {
        let p = PortfolioProblem::new(DMatrix::zeros(2, 2), dvector![0.02, 0.01], 0.01, 1).unwrap();
        let (tau, delta) = update_tau(&state_at(dvector![1.0, 0.0], 1.0, 0.5), &p);
        assert_eq!((tau, delta), (1.0, 2.0));
    }

    #[test]
    fn two_asset_cardinality_one() {
        let p = two_asset(0.0, 1);
        let report = pspgd_solve(&p, &PenaltyConfig::default()).unwrap();
        assert!(report.converged);
        assert_eq!(report.cardinality, 1);
        assert!(report.hadamard <= 1e-8);
        assert!((report.x_star.sum() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn invalid_config_is_rejected() {
        let p = two_asset(0.0, 1);
        let config = PenaltyConfig {
            tol1: 0.0,
            ..Default::default()
        };
        assert!(pspgd_solve(&p, &config).is_err());
        let config = PenaltyConfig {
            tau_initial_override: Some(-1.0),
            ..Default::default()
        };
        assert!(pspgd_solve(&p, &config).is_err());
    }
}
