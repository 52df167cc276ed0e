#![allow(dead_code)]

use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use sparsefolio::data::{embedded_simple_case, parse_orlibrary, MarketDataset};
use sparsefolio::penalty::SolveReport;
use sparsefolio::{ConvexSetSpec, PortfolioProblem};

/// Return targets used for the six-asset runs, one per reference row.
pub const REFERENCE_TARGETS: [f64; 5] = [0.0003, 0.0012, 0.0016, 0.0017, 0.0018];

/// Reference rows for the six-asset instance: (alpha, rho, return, risk).
pub const REFERENCE_ROWS: [(usize, f64, f64, f64); 6] = [
    (1, 0.0018, 0.0400, 0.2074),
    (2, 0.0016, 0.0293, 0.1735),
    (3, 0.0017, 0.0053, 0.1523),
    (4, 0.0017, 0.0053, 0.1523),
    (5, 0.0012, 0.0053, 0.1523),
    (6, 0.0003, 0.0003, 0.1394),
];

pub fn simple() -> MarketDataset {
    embedded_simple_case()
}

/// Directory holding OR-Library files, if configured and present.
pub fn data_dir() -> Option<PathBuf> {
    let dir = std::env::var_os("SPARSEFOLIO_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data"));
    dir.is_dir().then_some(dir)
}

pub fn load_port(index: usize) -> Option<MarketDataset> {
    let path = data_dir()?.join(format!("port{index}.txt"));
    let bytes = std::fs::read(path).ok()?;
    Some(parse_orlibrary(&bytes).expect("OR-Library file should parse"))
}

/// Largest violation of budget, return, bounds and y constraints.
pub fn feasibility_gap(problem: &PortfolioProblem, report: &SolveReport) -> f64 {
    let x = &report.x_star;
    let y = &report.y_star;
    let n = problem.n();
    let budget = (x.sum() - 1.0).abs();
    let ret = (problem.rho() - problem.mean_returns().dot(x)).max(0.0);
    let up = problem.upper_bounds();
    let x_box = (0..n).map(|i| (-x[i]).max(x[i] - up[i]).max(0.0)).fold(0.0, f64::max);
    let y_budget = ((n - problem.alpha()) as f64 - y.sum()).max(0.0);
    let y_box = y.iter().map(|&v| (-v).max(v - 1.0).max(0.0)).fold(0.0, f64::max);
    budget.max(ret).max(x_box).max(y_budget).max(y_box)
}

/// Distance of every y entry from {0, 1}.
pub fn binary_gap(y: &DVector<f64>) -> f64 {
    y.iter().map(|&v| v.abs().min((1.0 - v).abs())).fold(0.0, f64::max)
}

pub fn random_spd(rng: &mut impl Rng, n: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(n, n) * 0.1
}

/// A nonempty polyhedral intersection in `R^dim` built around a known
/// interior point, plus a point to project that is usually outside it.
/// Normals are kept at least about 18 degrees apart; nearly parallel
/// hyperplanes make Dykstra converge too slowly for a cycle cap.
pub fn random_polyhedron(rng: &mut impl Rng, dim: usize, set_count: usize) -> (Vec<ConvexSetSpec>, DVector<f64>) {
    let center = DVector::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0));
    let mut sets = Vec::with_capacity(set_count);
    let box_index = rng.gen_range(0..set_count);
    let mut normals: Vec<DVector<f64>> = Vec::new();
    for k in 0..set_count {
        if k == box_index {
            let lower = DVector::from_fn(dim, |i, _| center[i] - rng.gen_range(0.1..1.5));
            let upper = DVector::from_fn(dim, |i, _| center[i] + rng.gen_range(0.1..1.5));
            sets.push(ConvexSetSpec::new_box(lower, upper).unwrap());
            continue;
        }
        let normal = loop {
            let candidate = DVector::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0));
            let norm = candidate.norm();
            if norm > 1e-3
                && normals
                    .iter()
                    .all(|m| (m.dot(&candidate) / (m.norm() * norm)).abs() <= 0.95)
            {
                break candidate;
            }
        };
        normals.push(normal.clone());
        let through = normal.dot(&center);
        if rng.gen_bool(0.3) {
            sets.push(ConvexSetSpec::hyperplane(normal, through).unwrap());
        } else {
            let slack = rng.gen_range(0.0..0.5);
            sets.push(ConvexSetSpec::half_space(normal, through - slack).unwrap());
        }
    }
    let point = DVector::from_fn(dim, |i, _| center[i] + rng.gen_range(-3.0..3.0));
    (sets, point)
}

/// Andrew's monotone chain; counter-clockwise hull without collinear points.
pub fn convex_hull(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0);
    let mut lower: Vec<(f64, f64)> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<(f64, f64)> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Largest outward distance of `p` beyond any edge of a counter-clockwise
/// hull; nonpositive means inside.
pub fn outside_distance(hull: &[(f64, f64)], p: (f64, f64)) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for i in 0..hull.len() {
        let a = hull[i];
        let b = hull[(i + 1) % hull.len()];
        let (ex, ey) = (b.0 - a.0, b.1 - a.1);
        let len = (ex * ex + ey * ey).sqrt();
        let d = -((ex * (p.1 - a.1) - ey * (p.0 - a.0)) / len);
        worst = worst.max(d);
    }
    worst
}
