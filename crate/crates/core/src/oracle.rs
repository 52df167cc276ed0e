//! Brute-force reference solvers for small instances. These exist to check
//! the production path and are not meant for real workloads.
//!
//! * [`qp_project_oracle`] projects onto a polyhedron by enumerating every
//!   active set (free / at lower / at upper per coordinate, active or not per
//!   half-space), solving the equality-constrained least-distance problem
//!   for each and keeping the closest feasible candidate.
//! * [`cardinality_oracle`] enumerates every support of size `alpha` and
//!   solves the convex reduced problem on each.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::portfolio::PortfolioProblem;
use crate::sets::{ConvexSetSpec, DykstraConfig, IntersectionProjector};
use crate::spg::{spg_minimize, FnObjective, SpgConfig};

pub const MAX_ORACLE_DIMENSION: usize = 12;
const MAX_ACTIVE_SETS: u64 = 20_000_000;
const FEASIBILITY_TOLERANCE: f64 = 1e-9;
const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub minimizer: DVector<f64>,
    pub objective: f64,
    /// Indices held by the minimizer (cardinality oracle only).
    pub support: Vec<usize>,
}

#[derive(Clone, Copy, PartialEq)]
enum BoundState {
    Free,
    Lower,
    Upper,
}

/// Exact projection of `point` onto the intersection of `sets` by active-set
/// enumeration. `objective` is the Euclidean distance to `point`.
pub fn qp_project_oracle(sets: &[ConvexSetSpec], point: &DVector<f64>) -> Result<OracleResult> {
    let dim = point.len();
    if dim == 0 || dim > MAX_ORACLE_DIMENSION {
        return Err(Error::OracleTooLarge(format!(
            "dimension {dim} outside 1..={MAX_ORACLE_DIMENSION}"
        )));
    }
    let mut lower = DVector::from_element(dim, f64::NEG_INFINITY);
    let mut upper = DVector::from_element(dim, f64::INFINITY);
    let mut equalities: Vec<(&DVector<f64>, f64)> = Vec::new();
    let mut inequalities: Vec<(&DVector<f64>, f64)> = Vec::new();
    for set in sets {
        set.validate()?;
        if set.dimension() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: set.dimension(),
            });
        }
        match set {
            ConvexSetSpec::Box { lower: lo, upper: hi } => {
                for i in 0..dim {
                    lower[i] = lower[i].max(lo[i]);
                    upper[i] = upper[i].min(hi[i]);
                }
            }
            ConvexSetSpec::Hyperplane { normal, offset } => equalities.push((normal, *offset)),
            ConvexSetSpec::HalfSpace { normal, offset } => inequalities.push((normal, *offset)),
        }
    }
    if (0..dim).any(|i| lower[i] > upper[i]) {
        return Err(Error::Infeasible("boxes do not intersect".into()));
    }

    let states_per_coord: Vec<Vec<BoundState>> = (0..dim)
        .map(|i| {
            let mut s = vec![BoundState::Free];
            if lower[i].is_finite() {
                s.push(BoundState::Lower);
            }
            if upper[i].is_finite() && upper[i] != lower[i] {
                s.push(BoundState::Upper);
            }
            s
        })
        .collect();
    let box_combinations: u64 = states_per_coord.iter().map(|s| s.len() as u64).product();
    let total = box_combinations.saturating_mul(1u64 << inequalities.len().min(40));
    if total > MAX_ACTIVE_SETS {
        return Err(Error::OracleTooLarge(format!("{total} active sets to enumerate")));
    }

    let feasible = |x: &DVector<f64>| {
        (0..dim).all(|i| x[i] >= lower[i] - FEASIBILITY_TOLERANCE && x[i] <= upper[i] + FEASIBILITY_TOLERANCE)
            && equalities
                .iter()
                .all(|(a, b)| (a.dot(x) - b).abs() <= FEASIBILITY_TOLERANCE)
            && inequalities.iter().all(|(a, b)| a.dot(x) >= b - FEASIBILITY_TOLERANCE)
    };

    let mut best: Option<(f64, DVector<f64>)> = None;
    let mut digits = vec![0usize; dim];
    let mut rows: Vec<(&DVector<f64>, f64)> = Vec::with_capacity(equalities.len() + inequalities.len());
    for _ in 0..box_combinations {
        let fixed: Vec<Option<f64>> = (0..dim)
            .map(|i| match states_per_coord[i][digits[i]] {
                BoundState::Free => None,
                BoundState::Lower => Some(lower[i]),
                BoundState::Upper => Some(upper[i]),
            })
            .collect();
        for mask in 0u64..(1u64 << inequalities.len()) {
            rows.clear();
            rows.extend(equalities.iter().copied());
            rows.extend(
                inequalities
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| mask & (1 << k) != 0)
                    .map(|(_, r)| *r),
            );
            if let Some(candidate) = least_distance(point, &fixed, &rows) {
                if feasible(&candidate) {
                    let dist = (&candidate - point).norm();
                    if best.as_ref().is_none_or(|(d, _)| dist < *d) {
                        best = Some((dist, candidate));
                    }
                }
            }
        }
        // Next mixed-radix combination.
        for i in 0..dim {
            digits[i] += 1;
            if digits[i] < states_per_coord[i].len() {
                break;
            }
            digits[i] = 0;
        }
    }

    let (objective, minimizer) = best.ok_or_else(|| Error::Infeasible("no feasible active set found".into()))?;
    Ok(OracleResult {
        minimizer,
        objective,
        support: Vec::new(),
    })
}

/// Closest point to `point` with the given coordinates fixed and the given
/// rows active as equalities, or `None` if that system is inconsistent.
fn least_distance(point: &DVector<f64>, fixed: &[Option<f64>], rows: &[(&DVector<f64>, f64)]) -> Option<DVector<f64>> {
    let mut x = DVector::from_fn(point.len(), |i, _| fixed[i].unwrap_or(point[i]));
    if rows.is_empty() {
        return Some(x);
    }
    let free: Vec<usize> = (0..point.len()).filter(|&i| fixed[i].is_none()).collect();
    let m = rows.len();
    // Residual of each active row at x, and its restriction to free coordinates.
    let residual = DVector::from_fn(m, |r, _| rows[r].1 - rows[r].0.dot(&x));
    let a_free = DMatrix::from_fn(m, free.len(), |r, c| rows[r].0[free[c]]);
    if free.is_empty() {
        return (residual.amax() <= FEASIBILITY_TOLERANCE).then_some(x);
    }
    // x_F = p_F + A_F^T mu with A_F A_F^T mu = residual.
    let gram = &a_free * a_free.transpose();
    let mu = gram.clone().svd(true, true).solve(&residual, 1e-12).ok()?;
    let step = a_free.transpose() * mu;
    for (c, &i) in free.iter().enumerate() {
        x[i] += step[c];
    }
    let consistent = rows.iter().all(|(a, b)| (a.dot(&x) - b).abs() <= FEASIBILITY_TOLERANCE);
    consistent.then_some(x)
}

/// Best portfolio with at most `alpha` holdings, by solving the convex
/// reduced problem on every support of size `min(alpha, n)`.
///
/// Supports are scanned in lexicographic order; a later support replaces
/// the incumbent only if it is better by more than 1e-12.
pub fn cardinality_oracle(problem: &PortfolioProblem) -> Result<OracleResult> {
    let n = problem.n();
    if n > MAX_ORACLE_DIMENSION {
        return Err(Error::OracleTooLarge(format!("{n} assets")));
    }
    let size = problem.alpha().min(n);
    let supports = combinations(n, size);
    let results: Vec<Option<OracleResult>> = supports
        .par_iter()
        .map(|support| solve_on_support(problem, support))
        .collect::<Result<_>>()?;

    let mut best: Option<OracleResult> = None;
    for candidate in results.into_iter().flatten() {
        let better = best
            .as_ref()
            .is_none_or(|b| candidate.objective < b.objective - TIE_TOLERANCE);
        if better {
            best = Some(candidate);
        }
    }
    best.ok_or_else(|| Error::Infeasible(format!("no support of size {size} reaches return {}", problem.rho())))
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current: Vec<usize> = (0..k).collect();
    if k == 0 || k > n {
        return out;
    }
    loop {
        out.push(current.clone());
        let mut i = k;
        while i > 0 && current[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        current[i - 1] += 1;
        for j in i..k {
            current[j] = current[j - 1] + 1;
        }
    }
}

/// Largest return reachable on the support: fill the best assets first.
fn max_return_on_support(v: &DVector<f64>, up: &DVector<f64>, support: &[usize]) -> Option<f64> {
    let mut order = support.to_vec();
    order.sort_by(|&a, &b| v[b].total_cmp(&v[a]));
    let mut left = 1.0;
    let mut total = 0.0;
    for i in order {
        let w = up[i].min(left);
        total += w * v[i];
        left -= w;
        if left <= 0.0 {
            return Some(total);
        }
    }
    None
}

fn solve_on_support(problem: &PortfolioProblem, support: &[usize]) -> Result<Option<OracleResult>> {
    let n = problem.n();
    let k = support.len();
    let v = problem.mean_returns();
    let up = problem.upper_bounds();
    match max_return_on_support(v, up, support) {
        Some(best) if best >= problem.rho() - FEASIBILITY_TOLERANCE => {}
        _ => return Ok(None),
    }

    let q = DMatrix::from_fn(k, k, |a, b| problem.covariance()[(support[a], support[b])]);
    let v_s = DVector::from_fn(k, |a, _| v[support[a]]);
    let up_s = DVector::from_fn(k, |a, _| up[support[a]]);
    let mut sets = vec![
        ConvexSetSpec::hyperplane(DVector::from_element(k, 1.0), 1.0)?,
        ConvexSetSpec::new_box(DVector::zeros(k), up_s)?,
    ];
    if v_s.iter().any(|&x| x != 0.0) {
        sets.insert(0, ConvexSetSpec::half_space(v_s.clone(), problem.rho())?);
    }
    let projector = IntersectionProjector::new(
        sets,
        DykstraConfig {
            epsilon: 1e-24,
            max_cycles: 200_000,
        },
    )?;
    let objective = FnObjective {
        value: |x: &DVector<f64>| 0.5 * x.dot(&(&q * x)),
        gradient: |x: &DVector<f64>| &q * x,
    };
    let start = projector.project(&DVector::from_element(k, 1.0 / k as f64));
    let config = SpgConfig {
        pg_tolerance: 1e-11,
        max_iterations: 200_000,
        ..SpgConfig::default()
    };
    let report = spg_minimize(&objective, |z: &DVector<f64>| projector.project(z), &start, &config)?;
    if projector.max_violation(&report.solution) > 1e-7 {
        return Ok(None);
    }
    let mut minimizer = DVector::zeros(n);
    for (a, &i) in support.iter().enumerate() {
        minimizer[i] = report.solution[a];
    }
    Ok(Some(OracleResult {
        objective: report.value,
        minimizer,
        support: support.to_vec(),
    }))
}

/// Risk `sqrt(x^T Q x)` of an oracle minimizer.
pub fn oracle_risk(problem: &PortfolioProblem, result: &OracleResult) -> f64 {
    problem.risk(result.minimizer.as_view())
}
