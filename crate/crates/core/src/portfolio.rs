//! Mean-variance portfolio selection with a cardinality bound, relaxed to
//! the pair `(x, y)` where `y` marks the assets that must stay empty.
//!
//! The relaxed feasible set is the intersection of four easy sets in
//! `R^{2n}`: the return half-space on `x`, the budget hyperplane on `x`, the
//! product box `[0, up] x [0, 1]`, and the half-space `e^T y >= n - alpha`.
//! Complementarity `x_i y_i = 0` is enforced only through the penalty
//! `tau x^T y` in the objective.

use nalgebra::{DMatrix, DVector, DVectorView, SymmetricEigen};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::penalty::{self, BaseTerm, PenaltyConfig, SolveReport};
use crate::sets::{ConvexSetSpec, IntersectionProjector};
use crate::spg::{spg_minimize, FnObjective, Objective};

const SYMMETRY_TOLERANCE: f64 = 1e-12;
const PSD_TOLERANCE: f64 = 1e-8;

/// One instance of the relaxed cardinality-constrained Markowitz problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioProblem {
    q: DMatrix<f64>,
    v: DVector<f64>,
    up: DVector<f64>,
    rho: f64,
    alpha: usize,
}

impl PortfolioProblem {
    /// Builds a problem with upper bounds `up = e`.
    pub fn new(q: DMatrix<f64>, v: DVector<f64>, rho: f64, alpha: usize) -> Result<Self> {
        let n = v.len();
        Self::with_upper_bounds(q, v, DVector::from_element(n, 1.0), rho, alpha)
    }

    pub fn with_upper_bounds(
        q: DMatrix<f64>,
        v: DVector<f64>,
        up: DVector<f64>,
        rho: f64,
        alpha: usize,
    ) -> Result<Self> {
        let n = v.len();
        if n == 0 {
            return Err(Error::InvalidProblem("no assets".into()));
        }
        check_covariance(&q)?;
        if q.nrows() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: q.nrows(),
            });
        }
        if up.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: up.len(),
            });
        }
        if up.iter().any(|&u| !(u > 0.0) || !u.is_finite()) {
            return Err(Error::InvalidProblem("upper bounds must be positive".into()));
        }
        if v.iter().any(|x| !x.is_finite()) || !rho.is_finite() {
            return Err(Error::InvalidProblem("non-finite returns or target".into()));
        }
        if alpha == 0 || alpha > n {
            return Err(Error::InvalidProblem(format!(
                "cardinality bound {alpha} outside 1..={n}"
            )));
        }
        if up.sum() < 1.0 {
            return Err(Error::InvalidProblem(
                "upper bounds sum below one; budget cannot be met".into(),
            ));
        }
        let best = best_attainable_return(&v, &up);
        // Slack for targets read off a numerical solve at the top of the range.
        if rho > best + 1e-10 {
            return Err(Error::InvalidProblem(format!(
                "return target {rho} exceeds best attainable return {best}"
            )));
        }
        Ok(Self { q, v, up, rho, alpha })
    }

    pub fn n(&self) -> usize {
        self.v.len()
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn mean_returns(&self) -> &DVector<f64> {
        &self.v
    }

    pub fn upper_bounds(&self) -> &DVector<f64> {
        &self.up
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn alpha(&self) -> usize {
        self.alpha
    }

    /// Same market data with another return target.
    pub fn with_rho(&self, rho: f64) -> Result<Self> {
        Self::with_upper_bounds(self.q.clone(), self.v.clone(), self.up.clone(), rho, self.alpha)
    }

    /// Same market data with another cardinality bound.
    pub fn with_alpha(&self, alpha: usize) -> Result<Self> {
        if alpha == 0 || alpha > self.n() {
            return Err(Error::InvalidProblem(format!(
                "cardinality bound {alpha} outside 1..={}",
                self.n()
            )));
        }
        Ok(Self { alpha, ..self.clone() })
    }

    pub fn variance(&self, x: DVectorView<'_, f64>) -> f64 {
        x.dot(&(&self.q * x))
    }

    pub fn risk(&self, x: DVectorView<'_, f64>) -> f64 {
        self.variance(x).max(0.0).sqrt()
    }

    pub fn expected_return(&self, x: DVectorView<'_, f64>) -> f64 {
        self.v.dot(&x)
    }

    pub fn v_min(&self) -> f64 {
        self.v.min()
    }

    pub fn v_max(&self) -> f64 {
        self.v.max()
    }
}

/// Checks that `q` is square, symmetric to 1e-12 and PSD up to 1e-8.
pub fn check_covariance(q: &DMatrix<f64>) -> Result<f64> {
    if !q.is_square() || q.nrows() == 0 {
        return Err(Error::InvalidProblem(format!(
            "covariance must be a nonempty square matrix, got {}x{}",
            q.nrows(),
            q.ncols()
        )));
    }
    if q.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidProblem("covariance has non-finite entries".into()));
    }
    let n = q.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if (q[(i, j)] - q[(j, i)]).abs() > SYMMETRY_TOLERANCE {
                return Err(Error::InvalidProblem(format!(
                    "covariance not symmetric at ({}, {}): {} vs {}",
                    i + 1,
                    j + 1,
                    q[(i, j)],
                    q[(j, i)]
                )));
            }
        }
    }
    let lambda_min = min_eigenvalue(q);
    if lambda_min < -PSD_TOLERANCE {
        return Err(Error::InvalidProblem(format!(
            "covariance not positive semidefinite (smallest eigenvalue {lambda_min:e})"
        )));
    }
    Ok(lambda_min)
}

fn symmetric_part(q: &DMatrix<f64>) -> DMatrix<f64> {
    (q + q.transpose()) * 0.5
}

pub fn min_eigenvalue(q: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(symmetric_part(q)).eigenvalues.min()
}

pub fn max_eigenvalue(q: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(symmetric_part(q)).eigenvalues.max()
}

/// A point `(x, y)` of `R^{2n}` stored contiguously.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairPoint(DVector<f64>);

impl PairPoint {
    pub fn from_parts(x: &DVector<f64>, y: &DVector<f64>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                found: y.len(),
            });
        }
        let n = x.len();
        Ok(Self(DVector::from_fn(
            2 * n,
            |i, _| {
                if i < n {
                    x[i]
                } else {
                    y[i - n]
                }
            },
        )))
    }

    pub fn from_vector(z: DVector<f64>) -> Result<Self> {
        if !z.len().is_multiple_of(2) {
            return Err(Error::InvalidProblem(format!(
                "pair vector must have even length, got {}",
                z.len()
            )));
        }
        Ok(Self(z))
    }

    pub fn n(&self) -> usize {
        self.0.len() / 2
    }

    pub fn x(&self) -> DVectorView<'_, f64> {
        self.0.rows(0, self.n())
    }

    pub fn y(&self) -> DVectorView<'_, f64> {
        self.0.rows(self.n(), self.n())
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.0
    }

    /// `x^T y`
    pub fn hadamard(&self) -> f64 {
        self.x().dot(&self.y())
    }
}

/// `base(x) + tau * x^T y` on `R^{2n}`, with `base` either the risk term
/// `x^T Q x / 2` or the negated return `-v^T x`.
#[derive(Debug, Clone, Copy)]
pub struct PenalizedObjective<'a> {
    pub problem: &'a PortfolioProblem,
    pub tau: f64,
    pub base: BaseTerm,
}

impl<'a> PenalizedObjective<'a> {
    pub fn new(problem: &'a PortfolioProblem, tau: f64) -> Self {
        Self {
            problem,
            tau,
            base: BaseTerm::Risk,
        }
    }

    pub fn value_at(&self, point: &PairPoint) -> f64 {
        objective_value(self, point)
    }
}

pub fn objective_value(obj: &PenalizedObjective<'_>, point: &PairPoint) -> f64 {
    let x = point.x();
    obj.base.value(obj.problem, x) + obj.tau * x.dot(&point.y())
}

pub fn objective_gradient(obj: &PenalizedObjective<'_>, point: &PairPoint) -> DVector<f64> {
    let n = point.n();
    let x = point.x();
    let y = point.y();
    let base = obj.base.gradient(obj.problem, x);
    let mut g = DVector::zeros(2 * n);
    for i in 0..n {
        g[i] = base[i] + obj.tau * y[i];
        g[n + i] = obj.tau * x[i];
    }
    g
}

impl Objective for PenalizedObjective<'_> {
    fn value(&self, z: &DVector<f64>) -> f64 {
        let n = z.len() / 2;
        let x = z.rows(0, n);
        self.base.value(self.problem, x) + self.tau * x.dot(&z.rows(n, n))
    }

    fn gradient(&self, z: &DVector<f64>) -> DVector<f64> {
        let n = z.len() / 2;
        let x = z.rows(0, n);
        let y = z.rows(n, n);
        let base = self.base.gradient(self.problem, x);
        DVector::from_fn(2 * n, |i, _| {
            if i < n {
                base[i] + self.tau * y[i]
            } else {
                self.tau * x[i - n]
            }
        })
    }
}

/// The four sets whose intersection is the relaxed feasible region, in
/// projection order: return half-space, budget hyperplane, `y` budget
/// half-space, product box.
///
/// The box goes last so that every Dykstra output satisfies the bounds
/// exactly; in particular `y_i` lands on 0 exactly for held assets, which is
/// what lets `x^T y` reach zero rather than stall at the projection
/// tolerance.
pub fn build_feasible_sets(problem: &PortfolioProblem) -> Vec<ConvexSetSpec> {
    let mut sets = Vec::with_capacity(4);
    sets.push(return_half_space(problem));
    sets.extend(build_relaxed_sets_without_return(problem));
    sets
}

/// Budget hyperplane, `y` budget half-space and product box, without the
/// return constraint. These define the auxiliary problems behind the
/// feasible return interval.
pub fn build_relaxed_sets_without_return(problem: &PortfolioProblem) -> Vec<ConvexSetSpec> {
    let n = problem.n();
    let x_block = |value: f64| DVector::from_fn(2 * n, |i, _| if i < n { value } else { 0.0 });
    let y_block = |value: f64| DVector::from_fn(2 * n, |i, _| if i < n { 0.0 } else { value });

    let upper = DVector::from_fn(2 * n, |i, _| if i < n { problem.up[i] } else { 1.0 });
    vec![
        ConvexSetSpec::Hyperplane {
            normal: x_block(1.0),
            offset: 1.0,
        },
        ConvexSetSpec::HalfSpace {
            normal: y_block(1.0),
            offset: (n - problem.alpha) as f64,
        },
        ConvexSetSpec::Box {
            lower: DVector::zeros(2 * n),
            upper,
        },
    ]
}

fn return_half_space(problem: &PortfolioProblem) -> ConvexSetSpec {
    let n = problem.n();
    ConvexSetSpec::HalfSpace {
        normal: DVector::from_fn(2 * n, |i, _| if i < n { problem.v[i] } else { 0.0 }),
        offset: problem.rho,
    }
}

/// Largest violation of the relaxed constraints (everything but
/// complementarity) at `point`.
pub fn relaxed_violation(problem: &PortfolioProblem, point: &PairPoint) -> f64 {
    let x = point.x();
    let y = point.y();
    let n = problem.n();
    let budget = (x.sum() - 1.0).abs();
    let ret = (problem.rho - problem.v.dot(&x)).max(0.0);
    let y_budget = ((n - problem.alpha) as f64 - y.sum()).max(0.0);
    let x_box = (0..n)
        .map(|i| (-x[i]).max(x[i] - problem.up[i]).max(0.0))
        .fold(0.0, f64::max);
    let y_box = y.iter().map(|&yi| (-yi).max(yi - 1.0).max(0.0)).fold(0.0, f64::max);
    budget.max(ret).max(y_budget).max(x_box).max(y_box)
}

/// Minimum-variance portfolio over `{e^T x = 1, 0 <= x <= up}` (no return
/// target, no cardinality bound).
pub fn minimum_variance_portfolio(problem: &PortfolioProblem, config: &PenaltyConfig) -> Result<DVector<f64>> {
    let n = problem.n();
    let sets = vec![
        ConvexSetSpec::hyperplane(DVector::from_element(n, 1.0), 1.0)?,
        ConvexSetSpec::new_box(DVector::zeros(n), problem.up.clone())?,
    ];
    let projector = IntersectionProjector::new(sets, config.dykstra)?;
    let q = &problem.q;
    let obj = FnObjective {
        value: |x: &DVector<f64>| 0.5 * x.dot(&(q * x)),
        gradient: |x: &DVector<f64>| q * x,
    };
    let start = projector.project(&DVector::from_element(n, 1.0 / n as f64));
    let mut spg = config.spg;
    spg.pg_tolerance = config.tol1;
    let report = spg_minimize(&obj, |z: &DVector<f64>| projector.project(z), &start, &spg)?;
    if !report.converged {
        log::warn!("minimum-variance solve stopped at pg-norm {:e}", report.final_pg_norm);
    }
    Ok(report.solution)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhoInterval {
    pub rho_min: f64,
    pub rho_max: f64,
    pub x_min: DVector<f64>,
    pub x_max: DVector<f64>,
}

/// Solves the two auxiliary penalized problems (least risk, most return)
/// with the penalty loop and reads off the returns of their solutions. The
/// problem's own return target is ignored.
pub fn compute_rho_interval(problem: &PortfolioProblem, config: &PenaltyConfig) -> Result<RhoInterval> {
    let sets = build_relaxed_sets_without_return(problem);
    let low = penalty::solve_penalized(problem, sets.clone(), BaseTerm::Risk, config)?;
    let high = penalty::solve_penalized(problem, sets, BaseTerm::NegativeReturn, config)?;
    let rho_min = low.expected_return;
    let rho_max = high.expected_return;
    if rho_min > rho_max {
        log::warn!("feasible-return interval inverted: rho_min {rho_min} > rho_max {rho_max}");
    }
    Ok(RhoInterval {
        rho_min,
        rho_max,
        x_min: low.x_star,
        x_max: high.x_star,
    })
}

/// How the middle branch of the return-target rule reads its magnitude.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum RhoRule {
    /// Middle branch uses `|rho_min|`.
    #[default]
    MinMagnitude,
    /// Middle branch uses `|rho_min + eps (rho_max - rho_min)|`.
    CandidateMagnitude,
}

/// Picks a return target inside (or just above) the feasible interval.
pub fn select_rho(interval: &RhoInterval, v: &DVector<f64>, epsilon_tilde: f64) -> f64 {
    select_rho_with_rule(interval, v, epsilon_tilde, RhoRule::default())
}

pub fn select_rho_with_rule(interval: &RhoInterval, v: &DVector<f64>, epsilon_tilde: f64, rule: RhoRule) -> f64 {
    let v_max = v.max();
    let candidate = interval.rho_min + epsilon_tilde * (interval.rho_max - interval.rho_min);
    if candidate >= 0.0 {
        return candidate;
    }
    let magnitude = match rule {
        RhoRule::MinMagnitude => interval.rho_min.abs(),
        RhoRule::CandidateMagnitude => candidate.abs(),
    };
    if magnitude <= v_max {
        epsilon_tilde * magnitude
    } else {
        epsilon_tilde * v_max
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierSample {
    pub rho: f64,
    pub converged: bool,
    /// Missing when the solve failed outright (e.g. line-search stagnation).
    pub report: Option<SolveReport>,
}

impl FrontierSample {
    pub fn expected_return(&self) -> Option<f64> {
        self.report.as_ref().map(|r| r.expected_return)
    }

    pub fn risk(&self) -> Option<f64> {
        self.report.as_ref().map(|r| r.risk)
    }

    pub fn cardinality(&self) -> Option<usize> {
        self.report.as_ref().map(|r| r.cardinality)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierCurve {
    pub alpha: usize,
    pub interval: RhoInterval,
    /// Ordered by `rho` ascending.
    pub samples: Vec<FrontierSample>,
}

impl FrontierCurve {
    pub fn converged_fraction(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().filter(|s| s.converged).count() as f64 / self.samples.len() as f64
    }
}

/// Solves the penalty loop on a uniform grid of `grid_size` return targets
/// spanning the feasible interval. Failed points are kept and flagged.
pub fn sweep_frontier(
    problem: &PortfolioProblem,
    alpha: usize,
    grid_size: usize,
    config: &PenaltyConfig,
    parallel: bool,
) -> Result<FrontierCurve> {
    if grid_size < 2 {
        return Err(Error::InvalidProblem(format!(
            "frontier grid needs at least 2 points, got {grid_size}"
        )));
    }
    let base = problem.with_alpha(alpha)?;
    let interval = compute_rho_interval(&base, config)?;
    let (lo, hi) = (interval.rho_min, interval.rho_max);
    let step = (hi - lo) / (grid_size - 1) as f64;
    let grid: Vec<f64> = (0..grid_size)
        .map(|i| if i == grid_size - 1 { hi } else { lo + step * i as f64 })
        .collect();

    let solve_point = |&rho: &f64| -> FrontierSample {
        match base.with_rho(rho).and_then(|p| penalty::pspgd_solve(&p, config)) {
            Ok(report) => FrontierSample {
                rho,
                converged: report.converged,
                report: Some(report),
            },
            Err(Error::PenaltyNotConverged { report }) => FrontierSample {
                rho,
                converged: false,
                report: Some(*report),
            },
            Err(err) => {
                log::warn!("frontier point rho = {rho}: {err}");
                FrontierSample {
                    rho,
                    converged: false,
                    report: None,
                }
            }
        }
    };
    let samples: Vec<FrontierSample> = if parallel {
        grid.par_iter().map(solve_point).collect()
    } else {
        grid.iter().map(solve_point).collect()
    };

    Ok(FrontierCurve {
        alpha,
        interval,
        samples,
    })
}

/// One sampled portfolio in the risk-return plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CloudPoint {
    pub risk: f64,
    #[serde(rename = "return")]
    pub expected_return: f64,
}

/// Random portfolios with at most `alpha` holdings: a uniform support size,
/// a uniform support of that size, then flat-Dirichlet weights on it.
/// Draws that break an upper bound are rejected.
pub fn sample_feasible_cloud(problem: &PortfolioProblem, alpha: usize, count: usize, seed: u64) -> Vec<CloudPoint> {
    let n = problem.n();
    let max_support = alpha.clamp(1, n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(count);
    let max_attempts = count.saturating_mul(1000).max(1000);
    let mut attempts = 0;
    let mut x = DVector::zeros(n);

    while points.len() < count && attempts < max_attempts {
        attempts += 1;
        let size = rng.gen_range(1..=max_support);
        let support = index::sample(&mut rng, n, size);
        let weights: Vec<f64> = (0..size).map(|_| rng.sample::<f64, _>(Exp1)).collect();
        let total: f64 = weights.iter().sum();
        x.fill(0.0);
        for (i, w) in support.iter().zip(&weights) {
            x[i] = w / total;
        }
        if (0..n).any(|i| x[i] > problem.up[i]) {
            continue;
        }
        points.push(CloudPoint {
            risk: problem.risk(x.as_view()),
            expected_return: problem.expected_return(x.as_view()),
        });
    }
    if points.len() < count {
        log::warn!(
            "feasible cloud: only {} of {count} samples accepted under the upper bounds",
            points.len()
        );
    }
    points
}

/// Largest `v^T x` over `e^T x = 1`, `0 <= x <= up`: fill the best assets first.
fn best_attainable_return(v: &DVector<f64>, up: &DVector<f64>) -> f64 {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[b].total_cmp(&v[a]));
    let mut remaining = 1.0_f64;
    let mut total = 0.0;
    for i in order {
        if remaining <= 0.0 {
            break;
        }
        let w = up[i].min(remaining);
        total += w * v[i];
        remaining -= w;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::embedded_simple_case;
    use nalgebra::dvector;

    fn identity_problem(n: usize, alpha: usize) -> PortfolioProblem {
        PortfolioProblem::new(DMatrix::identity(n, n), DVector::zeros(n), 0.0, alpha).unwrap()
    }

    #[test]
    fn four_sets_with_cardinality_offset() {
        let p = identity_problem(2, 1);
        let sets = build_feasible_sets(&p);
        assert_eq!(sets.len(), 4);
        assert!(sets.iter().all(|s| s.dimension() == 4));
        assert!(matches!(sets[3], ConvexSetSpec::Box { .. }));
        match &sets[2] {
            ConvexSetSpec::HalfSpace { normal, offset } => {
                assert_eq!(*offset, 1.0);
                assert_eq!(normal, &dvector![0.0, 0.0, 1.0, 1.0]);
            }
            other => panic!("unexpected set {other:?}"),
        }
    }

    #[test]
    fn full_cardinality_makes_y_constraint_vacuous() {
        let p = identity_problem(3, 3);
        let sets = build_feasible_sets(&p);
        match &sets[2] {
            ConvexSetSpec::HalfSpace { offset, .. } => assert_eq!(*offset, 0.0),
            other => panic!("unexpected set {other:?}"),
        }
        assert_eq!(sets[2].violation(&DVector::zeros(6)), 0.0);
    }

    #[test]
    fn objective_values() {
        let p = identity_problem(2, 1);
        let obj = PenalizedObjective::new(&p, 5.0);
        let e1 = dvector![1.0, 0.0];
        let a = PairPoint::from_parts(&e1, &DVector::zeros(2)).unwrap();
        assert_eq!(objective_value(&obj, &a), 0.5);
        let b = PairPoint::from_parts(&e1, &e1).unwrap();
        assert_eq!(objective_value(&obj, &b), 5.5);
    }

    #[test]
    fn gradient_values() {
        let p = identity_problem(3, 1);
        let obj = PenalizedObjective::new(&p, 1.0);
        let zero = PairPoint::from_parts(&DVector::zeros(3), &DVector::zeros(3)).unwrap();
        assert_eq!(objective_gradient(&obj, &zero), DVector::zeros(6));
        let e = DVector::from_element(3, 1.0);
        let ones = PairPoint::from_parts(&e, &e).unwrap();
        assert_eq!(objective_gradient(&obj, &ones), dvector![2.0, 2.0, 2.0, 1.0, 1.0, 1.0]);
        // Trait path agrees with the free functions.
        assert_eq!(obj.gradient(ones.as_vector()), objective_gradient(&obj, &ones));
        assert_eq!(obj.value(ones.as_vector()), objective_value(&obj, &ones));
    }

    #[test]
    fn select_rho_branches() {
        let v = dvector![0.021, 0.04, -0.034];
        let interval = |lo: f64, hi: f64| RhoInterval {
            rho_min: lo,
            rho_max: hi,
            x_min: DVector::zeros(0),
            x_max: DVector::zeros(0),
        };
        assert!((select_rho(&interval(0.01, 0.03), &v, 0.5) - 0.02).abs() < 1e-15);
        assert!((select_rho(&interval(-0.0238, 0.0373), &v, 0.1) - 0.00238).abs() < 1e-15);
        assert!((select_rho(&interval(-10.0, -9.0), &v, 0.5) - 0.02).abs() < 1e-15);
        // The alternative reading only changes the middle branch.
        let alt = select_rho_with_rule(&interval(-0.0238, 0.0373), &v, 0.1, RhoRule::CandidateMagnitude);
        assert!((alt - 0.1 * 0.01769).abs() < 1e-12);
    }

    #[test]
    fn problem_validation() {
        let q = DMatrix::identity(2, 2);
        assert!(PortfolioProblem::new(q.clone(), dvector![0.1, 0.2], 0.0, 3).is_err());
        assert!(PortfolioProblem::new(q.clone(), dvector![0.1, 0.2], 0.0, 0).is_err());
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(PortfolioProblem::new(asym, dvector![0.1, 0.2], 0.0, 1).is_err());
        let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(PortfolioProblem::new(indefinite, dvector![0.1, 0.2], 0.0, 1).is_err());
        assert!(PortfolioProblem::with_upper_bounds(q, dvector![0.1, 0.2], dvector![1.0, 0.0], 0.0, 1).is_err());
    }

    #[test]
    fn single_asset_cloud_is_the_assets() {
        let p = embedded_simple_case().to_problem(0.0, 1).unwrap();
        let cloud = sample_feasible_cloud(&p, 1, 100, 42);
        assert_eq!(cloud.len(), 100);
        let mut distinct: Vec<(u64, u64)> = cloud
            .iter()
            .map(|c| (c.risk.to_bits(), c.expected_return.to_bits()))
            .collect();
        distinct.sort();
        distinct.dedup();
        assert_eq!(distinct.len(), 6);
        for c in &cloud {
            let i = (0..6).find(|&i| p.mean_returns()[i] == c.expected_return).unwrap();
            assert_eq!(c.risk, p.covariance()[(i, i)].sqrt());
        }
    }

    #[test]
    fn cloud_is_deterministic() {
        let p = embedded_simple_case().to_problem(0.0, 3).unwrap();
        assert_eq!(sample_feasible_cloud(&p, 3, 50, 7), sample_feasible_cloud(&p, 3, 50, 7));
        assert_ne!(sample_feasible_cloud(&p, 3, 50, 7), sample_feasible_cloud(&p, 3, 50, 8));
    }

    #[test]
    fn rejects_target_above_best_attainable_return() {
        let q = DMatrix::identity(2, 2);
        let v = DVector::from_vec(vec![-0.02, -0.01]);
        assert!(PortfolioProblem::new(q.clone(), v.clone(), -0.01, 1).is_ok());
        assert!(matches!(
            PortfolioProblem::new(q.clone(), v.clone(), -0.005, 1),
            Err(Error::InvalidProblem(_))
        ));
        let up = DVector::from_vec(vec![0.6, 0.6]);
        assert!(PortfolioProblem::with_upper_bounds(q.clone(), v.clone(), up.clone(), -0.015, 2).is_ok());
        assert!(PortfolioProblem::with_upper_bounds(q, v, up * 0.5, -0.02, 2).is_err());
    }
}
