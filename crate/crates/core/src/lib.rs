//! Cardinality-constrained mean-variance portfolio selection through a
//! continuous relaxation.
//!
//! The bound `||x||_0 <= alpha` is replaced by an auxiliary vector
//! `y in [0, 1]^n` with `e^T y >= n - alpha` and the complementarity
//! condition `x_i y_i = 0`. Complementarity is moved into the objective as a
//! penalty `tau x^T y`; each penalized subproblem is minimized by a spectral
//! projected gradient method whose projections onto the convex feasible set
//! are computed with Dykstra's alternating projections.
//!
//! Modules, bottom up:
//! * [`sets`]: easy convex sets and Dykstra's algorithm.
//! * [`spg`]: spectral projected gradient with a nonmonotone line search.
//! * [`portfolio`]: the relaxed Markowitz model, return intervals, frontiers.
//! * [`penalty`]: the outer penalty loop.
//! * [`data`]: dataset parsing and report output.
//! * [`oracle`]: brute-force reference solvers for small instances.

// `!(a < b)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod oracle;
pub mod penalty;
pub mod portfolio;
pub mod sets;
pub mod spg;

pub use error::{Error, Result};
pub use penalty::{count_nonzeros, initial_tau, pspgd_solve, update_tau, PenaltyConfig, SolveReport};
pub use portfolio::{PairPoint, PenalizedObjective, PortfolioProblem};
pub use sets::{dykstra_project, project_set, ConvexSetSpec, DykstraConfig};
pub use spg::{spg_minimize, SpgConfig, SpgReport};
