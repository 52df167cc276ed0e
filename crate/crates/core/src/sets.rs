//! Easy convex sets and Dykstra's alternating projection onto their
//! intersection.
//!
//! Each [`ConvexSetSpec`] has a closed-form Euclidean projection. An
//! intersection of such sets is handled by [`dykstra_project`], which cycles
//! through the sets in the order given, subtracting each set's increment from
//! the previous cycle before projecting onto it. Unlike plain alternating
//! projections this converges to the projection onto the intersection, not
//! just to some point of it.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One convex set with an exact projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ConvexSetSpec {
    /// `{x : lower <= x <= upper}` componentwise.
    Box { lower: DVector<f64>, upper: DVector<f64> },
    /// `{x : normal^T x = offset}`.
    Hyperplane { normal: DVector<f64>, offset: f64 },
    /// `{x : normal^T x >= offset}`.
    HalfSpace { normal: DVector<f64>, offset: f64 },
}

impl ConvexSetSpec {
    pub fn new_box(lower: DVector<f64>, upper: DVector<f64>) -> Result<Self> {
        let set = ConvexSetSpec::Box { lower, upper };
        set.validate()?;
        Ok(set)
    }

    pub fn hyperplane(normal: DVector<f64>, offset: f64) -> Result<Self> {
        let set = ConvexSetSpec::Hyperplane { normal, offset };
        set.validate()?;
        Ok(set)
    }

    pub fn half_space(normal: DVector<f64>, offset: f64) -> Result<Self> {
        let set = ConvexSetSpec::HalfSpace { normal, offset };
        set.validate()?;
        Ok(set)
    }

    pub fn dimension(&self) -> usize {
        match self {
            ConvexSetSpec::Box { lower, .. } => lower.len(),
            ConvexSetSpec::Hyperplane { normal, .. } | ConvexSetSpec::HalfSpace { normal, .. } => normal.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ConvexSetSpec::Box { lower, upper } => {
                if lower.len() != upper.len() {
                    return Err(Error::DimensionMismatch {
                        expected: lower.len(),
                        found: upper.len(),
                    });
                }
                if lower.is_empty() {
                    return Err(Error::InvalidSet("box of dimension zero".into()));
                }
                if let Some(i) = (0..lower.len()).find(|&i| !(lower[i] <= upper[i])) {
                    return Err(Error::InvalidSet(format!(
                        "box bounds crossed at index {i}: {} > {}",
                        lower[i], upper[i]
                    )));
                }
            }
            ConvexSetSpec::Hyperplane { normal, offset } | ConvexSetSpec::HalfSpace { normal, offset } => {
                if normal.is_empty() {
                    return Err(Error::InvalidSet("normal of dimension zero".into()));
                }
                if !offset.is_finite() || normal.iter().any(|a| !a.is_finite()) {
                    return Err(Error::InvalidSet("non-finite normal or offset".into()));
                }
                if normal.iter().all(|&a| a == 0.0) {
                    return Err(Error::InvalidSet("zero normal vector".into()));
                }
            }
        }
        Ok(())
    }

    /// Projects `x` onto the set in place. Assumes a valid set of matching
    /// dimension.
    pub fn project_in_place(&self, x: &mut DVector<f64>) {
        match self {
            ConvexSetSpec::Box { lower, upper } => {
                for ((xi, &lo), &hi) in x.iter_mut().zip(lower.iter()).zip(upper.iter()) {
                    *xi = xi.clamp(lo, hi);
                }
            }
            ConvexSetSpec::Hyperplane { normal, offset } => {
                let gap = normal.dot(x) - offset;
                x.axpy(-gap / normal.norm_squared(), normal, 1.0);
            }
            ConvexSetSpec::HalfSpace { normal, offset } => {
                let gap = normal.dot(x) - offset;
                if gap < 0.0 {
                    x.axpy(-gap / normal.norm_squared(), normal, 1.0);
                }
            }
        }
    }

    /// Largest amount by which `x` violates the set's defining constraints,
    /// measured in the constraint's own units (zero when `x` is inside).
    pub fn violation(&self, x: &DVector<f64>) -> f64 {
        match self {
            ConvexSetSpec::Box { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper.iter()))
                .map(|(&xi, (&lo, &hi))| (lo - xi).max(xi - hi).max(0.0))
                .fold(0.0, f64::max),
            ConvexSetSpec::Hyperplane { normal, offset } => (normal.dot(x) - offset).abs(),
            ConvexSetSpec::HalfSpace { normal, offset } => (offset - normal.dot(x)).max(0.0),
        }
    }
}

/// Euclidean projection of `point` onto a single set.
pub fn project_set(set: &ConvexSetSpec, point: &DVector<f64>) -> Result<DVector<f64>> {
    set.validate()?;
    check_dimension(set.dimension(), point.len())?;
    let mut x = point.clone();
    set.project_in_place(&mut x);
    Ok(x)
}

fn check_dimension(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DykstraConfig {
    /// Threshold on the sum over sets of squared increment changes in one cycle.
    pub epsilon: f64,
    pub max_cycles: usize,
}

impl Default for DykstraConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-8,
            max_cycles: 10_000,
        }
    }
}

impl DykstraConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || self.max_cycles == 0 {
            return Err(Error::InvalidProblem(format!(
                "Dykstra config needs epsilon > 0 and max_cycles >= 1, got {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DykstraState {
    pub iterate: DVector<f64>,
    /// One increment per set, in set order.
    pub increments: Vec<DVector<f64>>,
    pub cycle_count: usize,
    /// Sum of squared increment changes over the last completed cycle.
    pub last_increment_delta: f64,
    pub converged: bool,
}

/// Runs Dykstra's recursion from `point` without turning non-convergence
/// into an error. Sets and point are assumed valid and dimension-consistent.
pub(crate) fn run_dykstra(sets: &[ConvexSetSpec], point: &DVector<f64>, config: &DykstraConfig) -> DykstraState {
    let dim = point.len();
    let mut x = point.clone();
    let mut increments = vec![DVector::zeros(dim); sets.len()];
    let mut shifted = DVector::zeros(dim);
    let mut delta = f64::INFINITY;
    let mut cycles = 0;

    while cycles < config.max_cycles {
        cycles += 1;
        delta = 0.0;
        for (set, increment) in sets.iter().zip(increments.iter_mut()) {
            // shifted = x^{i-1} - I^i_{prev}; x^i = P_i(shifted); I^i = x^i - shifted
            shifted.copy_from(&x);
            shifted -= &*increment;
            x.copy_from(&shifted);
            set.project_in_place(&mut x);
            for ((inc, &xi), &si) in increment.iter_mut().zip(x.iter()).zip(shifted.iter()) {
                let updated = xi - si;
                let change = updated - *inc;
                delta += change * change;
                *inc = updated;
            }
        }
        if delta <= config.epsilon {
            return DykstraState {
                iterate: x,
                increments,
                cycle_count: cycles,
                last_increment_delta: delta,
                converged: true,
            };
        }
    }

    DykstraState {
        iterate: x,
        increments,
        cycle_count: cycles,
        last_increment_delta: delta,
        converged: false,
    }
}

/// Projects `point` onto the intersection of `sets` with Dykstra's algorithm.
///
/// Returns [`Error::DykstraNotConverged`] carrying the last iterate when
/// `max_cycles` runs out; an empty intersection usually ends up there too.
pub fn dykstra_project(
    sets: &[ConvexSetSpec],
    point: &DVector<f64>,
    config: &DykstraConfig,
) -> Result<(DVector<f64>, DykstraState)> {
    config.validate()?;
    if sets.is_empty() {
        return Err(Error::InvalidSet("empty list of sets".into()));
    }
    for set in sets {
        set.validate()?;
        check_dimension(set.dimension(), point.len())?;
    }
    let state = run_dykstra(sets, point, config);
    if !state.converged {
        return Err(Error::DykstraNotConverged {
            iterate: state.iterate,
            residual: state.last_increment_delta,
            cycles: state.cycle_count,
        });
    }
    Ok((state.iterate.clone(), state))
}

/// A validated list of sets bundled with a Dykstra configuration, usable as
/// the projection callback of the SPG solver.
#[derive(Debug, Clone)]
pub struct IntersectionProjector {
    sets: Vec<ConvexSetSpec>,
    config: DykstraConfig,
}

impl IntersectionProjector {
    pub fn new(sets: Vec<ConvexSetSpec>, config: DykstraConfig) -> Result<Self> {
        config.validate()?;
        let dim = sets
            .first()
            .ok_or_else(|| Error::InvalidSet("empty list of sets".into()))?
            .dimension();
        for set in &sets {
            set.validate()?;
            check_dimension(dim, set.dimension())?;
        }
        Ok(Self { sets, config })
    }

    pub fn sets(&self) -> &[ConvexSetSpec] {
        &self.sets
    }

    pub fn dimension(&self) -> usize {
        self.sets[0].dimension()
    }

    /// Projection that accepts the last Dykstra iterate if the cycle budget
    /// runs out.
    pub fn project(&self, point: &DVector<f64>) -> DVector<f64> {
        let state = run_dykstra(&self.sets, point, &self.config);
        if !state.converged {
            log::debug!(
                "Dykstra hit {} cycles (residual {:e}, input norm {:e}); using last iterate",
                state.cycle_count,
                state.last_increment_delta,
                point.norm()
            );
        }
        state.iterate
    }

    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        self.sets.iter().map(|s| s.violation(x)).fold(0.0, f64::max)
    }
}
