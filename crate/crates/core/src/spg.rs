//! Spectral projected gradient (SPG) with a nonmonotone line search.
//!
//! Each iteration projects one trial gradient step `z - step * grad` to get a
//! feasible direction `d`, then backtracks along `d` until the objective
//! drops below the largest of the last `memory` accepted values plus the
//! usual sufficient-decrease term. The next step length is the safeguarded
//! Barzilai-Borwein quotient `<s, s> / <s, grad_diff>`.

use std::collections::VecDeque;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest backtracking factor tried before giving up.
const MIN_LAMBDA: f64 = 1e-16;

pub trait Objective {
    fn value(&self, z: &DVector<f64>) -> f64;
    fn gradient(&self, z: &DVector<f64>) -> DVector<f64>;
}

/// Objective built from a pair of closures.
pub struct FnObjective<V, G> {
    pub value: V,
    pub gradient: G,
}

impl<V, G> Objective for FnObjective<V, G>
where
    V: Fn(&DVector<f64>) -> f64,
    G: Fn(&DVector<f64>) -> DVector<f64>,
{
    fn value(&self, z: &DVector<f64>) -> f64 {
        (self.value)(z)
    }

    fn gradient(&self, z: &DVector<f64>) -> DVector<f64> {
        (self.gradient)(z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpgConfig {
    /// Sufficient-decrease constant of the line search.
    pub gamma: f64,
    /// Length of the nonmonotone window (1 gives monotone Armijo).
    pub memory: usize,
    pub max_iterations: usize,
    /// Stop once `||P(z - grad f(z)) - z||_2` is at most this.
    pub pg_tolerance: f64,
    pub step_min: f64,
    pub step_max: f64,
    /// First step length; `None` means `min(1, 1 / ||grad f(z0)||_inf)`.
    pub initial_step: Option<f64>,
}

impl Default for SpgConfig {
    fn default() -> Self {
        Self {
            gamma: 1e-4,
            memory: 10,
            max_iterations: 50_000,
            pg_tolerance: 1e-6,
            step_min: 1e-10,
            step_max: 1e10,
            initial_step: None,
        }
    }
}

impl SpgConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.gamma > 0.0
            && self.gamma < 1.0
            && self.memory >= 1
            && self.max_iterations >= 1
            && self.pg_tolerance >= 0.0
            && self.step_min > 0.0
            && self.step_min <= self.step_max
            && self.initial_step.is_none_or(|s| s > 0.0);
        if !ok {
            return Err(Error::InvalidProblem(format!("invalid SPG config {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpgReport {
    pub solution: DVector<f64>,
    pub value: f64,
    pub iterations: usize,
    pub function_evaluations: usize,
    pub projections: usize,
    pub final_pg_norm: f64,
    pub converged: bool,
}

/// What the line search accepted at one iteration; handed to observers.
#[derive(Debug, Clone, Copy)]
pub struct SpgStep<'a> {
    pub iteration: usize,
    pub previous: &'a DVector<f64>,
    pub accepted: &'a DVector<f64>,
    pub direction: &'a DVector<f64>,
    /// `<d, grad f(z)>` at the point the direction was computed.
    pub directional_derivative: f64,
    pub lambda: f64,
    pub accepted_value: f64,
    /// Max of the objective over the nonmonotone window.
    pub reference_value: f64,
    pub step_length: f64,
}

/// Safeguarded Barzilai-Borwein step `<s, s> / <s, grad_diff>`.
pub fn spectral_step(s_prev: &DVector<f64>, grad_diff: &DVector<f64>, config: &SpgConfig) -> f64 {
    let curvature = s_prev.dot(grad_diff);
    if !(curvature > 0.0) {
        return config.step_max;
    }
    (s_prev.norm_squared() / curvature).clamp(config.step_min, config.step_max)
}

pub fn spg_minimize<O, P>(objective: &O, project: P, start: &DVector<f64>, config: &SpgConfig) -> Result<SpgReport>
where
    O: Objective + ?Sized,
    P: FnMut(&DVector<f64>) -> DVector<f64>,
{
    spg_minimize_observed(objective, project, start, config, |_| {})
}

/// [`spg_minimize`] that reports every accepted step to `observer`.
///
/// `start` must already be feasible.
pub fn spg_minimize_observed<O, P, F>(
    objective: &O,
    mut project: P,
    start: &DVector<f64>,
    config: &SpgConfig,
    mut observer: F,
) -> Result<SpgReport>
where
    O: Objective + ?Sized,
    P: FnMut(&DVector<f64>) -> DVector<f64>,
    F: FnMut(&SpgStep<'_>),
{
    config.validate()?;

    let mut z = start.clone();
    let mut value = objective.value(&z);
    let mut gradient = objective.gradient(&z);
    if gradient.len() != z.len() {
        return Err(Error::DimensionMismatch {
            expected: z.len(),
            found: gradient.len(),
        });
    }
    let mut fcnt = 1;
    let mut projections = 0;

    let mut history: VecDeque<f64> = VecDeque::with_capacity(config.memory);
    history.push_back(value);

    let mut step = config.initial_step.unwrap_or_else(|| {
        let gmax = gradient.amax();
        if gmax > 0.0 {
            (1.0 / gmax).min(1.0)
        } else {
            1.0
        }
    });

    let mut iterations = 0;
    loop {
        let pg_norm = {
            let mut probe = &z - &gradient;
            probe = project(&probe);
            projections += 1;
            (probe - &z).norm()
        };
        if pg_norm <= config.pg_tolerance || iterations >= config.max_iterations {
            return Ok(SpgReport {
                solution: z,
                value,
                iterations,
                function_evaluations: fcnt,
                projections,
                final_pg_norm: pg_norm,
                converged: pg_norm <= config.pg_tolerance,
            });
        }

        let trial = project(&(&z - step * &gradient));
        projections += 1;
        let direction = trial - &z;
        let slope = direction.dot(&gradient);
        let reference = history.iter().copied().fold(f64::NEG_INFINITY, f64::max);

        let mut lambda = 1.0;
        let (next, next_value) = loop {
            let candidate = &z + lambda * &direction;
            let candidate_value = objective.value(&candidate);
            fcnt += 1;
            if candidate_value <= reference + config.gamma * lambda * slope {
                break (candidate, candidate_value);
            }
            lambda *= 0.5;
            if lambda < MIN_LAMBDA {
                return Err(Error::LineSearchStagnation {
                    best: z,
                    value,
                    iteration: iterations,
                });
            }
        };

        let next_gradient = objective.gradient(&next);
        let s = &next - &z;
        let y = &next_gradient - &gradient;
        let next_step = spectral_step(&s, &y, config);

        observer(&SpgStep {
            iteration: iterations,
            previous: &z,
            accepted: &next,
            direction: &direction,
            directional_derivative: slope,
            lambda,
            accepted_value: next_value,
            reference_value: reference,
            step_length: step,
        });

        z = next;
        value = next_value;
        gradient = next_gradient;
        step = next_step;
        if history.len() == config.memory {
            history.pop_front();
        }
        history.push_back(value);
        iterations += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector, DMatrix};

    fn clamp_unit(z: &DVector<f64>) -> DVector<f64> {
        z.map(|v| v.clamp(0.0, 1.0))
    }

    #[test]
    fn spectral_step_ratio() {
        let c = SpgConfig::default();
        assert_eq!(spectral_step(&dvector![1.0, 0.0], &dvector![2.0, 0.0], &c), 0.5);
    }

    #[test]
    fn spectral_step_negative_curvature_uses_max() {
        let c = SpgConfig::default();
        assert_eq!(
            spectral_step(&dvector![1.0, 1.0], &dvector![-1.0, -1.0], &c),
            c.step_max
        );
        assert_eq!(spectral_step(&dvector![0.0, 0.0], &dvector![0.0, 0.0], &c), c.step_max);
    }

    #[test]
    fn spectral_step_is_inverse_rayleigh_quotient() {
        let q = dmatrix![4.0, 1.0, 0.5; 1.0, 3.0, 0.2; 0.5, 0.2, 2.0];
        let s = dvector![0.3, -1.2, 0.7];
        let y = &q * &s;
        // s^T s = 2.02, s^T Q s = 4*0.09 + 3*1.44 + 2*0.49 + 2*(0.3*-1.2*1 + 0.3*0.7*0.5 + -1.2*0.7*0.2)
        let sqs = 0.36 + 4.32 + 0.98 + 2.0 * (-0.36 + 0.105 - 0.168);
        let expected = 2.02 / sqs;
        let got = spectral_step(&s, &y, &SpgConfig::default());
        assert!((got - expected).abs() < 1e-14, "{got} vs {expected}");
    }

    #[test]
    fn spectral_step_is_clamped() {
        let c = SpgConfig {
            step_min: 0.1,
            step_max: 10.0,
            ..Default::default()
        };
        assert_eq!(spectral_step(&dvector![1.0], &dvector![1000.0], &c), 0.1);
        assert_eq!(spectral_step(&dvector![1.0], &dvector![1e-6], &c), 10.0);
    }

    #[test]
    fn box_constrained_distance() {
        let c = dvector![1.7, -0.3, 0.4, 0.9];
        let target = c.clone();
        let obj = FnObjective {
            value: move |z: &DVector<f64>| 0.5 * (z - &target).norm_squared(),
            gradient: {
                let c = c.clone();
                move |z: &DVector<f64>| z - &c
            },
        };
        let report = spg_minimize(&obj, clamp_unit, &dvector![0.5, 0.5, 0.5, 0.5], &SpgConfig::default()).unwrap();
        assert!(report.converged);
        assert!((report.solution - clamp_unit(&c)).amax() < 1e-6);
    }

    #[test]
    fn norm_over_plane_is_uniform() {
        let n = 5;
        let obj = FnObjective {
            value: |z: &DVector<f64>| 0.5 * z.norm_squared(),
            gradient: |z: &DVector<f64>| z.clone(),
        };
        let project = |z: &DVector<f64>| {
            let shift = (z.sum() - 1.0) / n as f64;
            z.add_scalar(-shift)
        };
        let mut start = DVector::zeros(n);
        start[0] = 1.0;
        let report = spg_minimize(&obj, project, &start, &SpgConfig::default()).unwrap();
        assert!((report.solution - DVector::from_element(n, 0.2)).amax() < 1e-6);
    }

    #[test]
    fn monotone_window_strictly_decreases() {
        let q = DMatrix::from_row_slice(3, 3, &[3.0, 0.5, 0.0, 0.5, 2.0, 0.3, 0.0, 0.3, 1.0]);
        let b = dvector![2.0, -1.0, 0.7];
        let qv = q.clone();
        let bv = b.clone();
        let obj = FnObjective {
            value: move |z: &DVector<f64>| 0.5 * z.dot(&(&qv * z)) - bv.dot(z),
            gradient: move |z: &DVector<f64>| &q * z - &b,
        };
        let config = SpgConfig {
            memory: 1,
            pg_tolerance: 1e-7,
            ..Default::default()
        };
        let mut last = f64::INFINITY;
        let mut steps = 0;
        spg_minimize_observed(&obj, clamp_unit, &dvector![0.0, 0.0, 0.0], &config, |s| {
            assert!(
                s.accepted_value < last,
                "{} !< {last} at {}",
                s.accepted_value,
                s.iteration
            );
            assert!(s.accepted_value <= s.reference_value + config.gamma * s.lambda * s.directional_derivative);
            last = s.accepted_value;
            steps += 1;
        })
        .unwrap();
        assert!(steps > 0);
    }

    #[test]
    fn iteration_cap_reports_not_converged() {
        let obj = FnObjective {
            value: |z: &DVector<f64>| z.iter().map(|v| v.powi(4)).sum::<f64>(),
            gradient: |z: &DVector<f64>| z.map(|v| 4.0 * v.powi(3)),
        };
        let config = SpgConfig {
            max_iterations: 2,
            pg_tolerance: 0.0,
            ..Default::default()
        };
        let report = spg_minimize(&obj, |z: &DVector<f64>| z.clone(), &dvector![1.0, -2.0], &config).unwrap();
        assert!(!report.converged);
        assert_eq!(report.iterations, 2);
    }

    #[test]
    fn bad_config_is_rejected() {
        let obj = FnObjective {
            value: |z: &DVector<f64>| z.norm_squared(),
            gradient: |z: &DVector<f64>| 2.0 * z,
        };
        let config = SpgConfig {
            gamma: 1.5,
            ..Default::default()
        };
        assert!(spg_minimize(&obj, |z: &DVector<f64>| z.clone(), &dvector![1.0], &config).is_err());
    }
}
