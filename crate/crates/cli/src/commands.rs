use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context};
use serde::Serialize;
use sparsefolio::data::{
    embedded_simple_case, format_significant, parse_covariance_csv, parse_orlibrary, write_report, MarketDataset,
    OutputFormat, ReportRow,
};
use sparsefolio::portfolio::{
    check_covariance, compute_rho_interval, max_eigenvalue, sample_feasible_cloud, select_rho_with_rule, sweep_frontier,
};
use sparsefolio::{pspgd_solve, Error, PenaltyConfig};

use crate::args::{BoundsArgs, CloudArgs, DatasetArgs, FrontierArgs, OutputArgs, SolveArgs, SolverArgs, ValidateArgs};

/// Share of frontier points that must converge for a zero exit status.
const FRONTIER_PASS_FRACTION: f64 = 0.9;

pub enum Outcome {
    Success,
    NotConverged,
}

pub fn load_dataset(args: &DatasetArgs) -> anyhow::Result<MarketDataset> {
    if args.dataset == "simple" {
        return Ok(embedded_simple_case());
    }
    let path = Path::new(&args.dataset);
    let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let mut dataset = if is_csv {
        let Some(returns_path) = &args.returns else {
            bail!("--returns is required with a covariance CSV");
        };
        let returns = fs::read(returns_path).with_context(|| format!("cannot read {}", returns_path.display()))?;
        parse_covariance_csv(&bytes, &returns).with_context(|| format!("in {}", path.display()))?
    } else {
        parse_orlibrary(&bytes).with_context(|| format!("in {}", path.display()))?
    };
    if let Some(stem) = path.file_stem() {
        dataset.name = stem.to_string_lossy().into_owned();
    }
    Ok(dataset)
}

fn penalty_config(args: &SolverArgs) -> anyhow::Result<PenaltyConfig> {
    let mut config = PenaltyConfig::default();
    if let Some(v) = args.tol1 {
        config.tol1 = v;
    }
    if let Some(v) = args.tol2 {
        config.tol2 = v;
    }
    if let Some(v) = args.max_outer {
        config.max_outer_iterations = v;
    }
    if let Some(v) = args.dykstra_epsilon {
        config.dykstra.epsilon = v;
    }
    if let Some(v) = args.step_max {
        config.spg.step_max = v;
    }
    config.tau_initial_override = args.tau0;
    config.validate()?;
    Ok(config)
}

fn alpha_for(dataset: &MarketDataset, alpha: u64) -> anyhow::Result<usize> {
    let n = dataset.n();
    match usize::try_from(alpha) {
        Ok(a) if a <= n => Ok(a),
        _ => bail!("alpha = {alpha} exceeds the number of assets ({n})"),
    }
}

fn emit(output: &OutputArgs, data: &[u8]) -> anyhow::Result<()> {
    match &output.output {
        Some(path) => fs::write(path, data).with_context(|| format!("cannot write {}", path.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(data)?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn epsilon_tilde_checked(value: f64) -> anyhow::Result<f64> {
    if !(value > 0.0 && value < 1.0) {
        bail!("--epsilon-tilde must lie in (0, 1), got {value}");
    }
    Ok(value)
}

pub fn solve(args: &SolveArgs) -> anyhow::Result<Outcome> {
    let dataset = load_dataset(&args.dataset)?;
    let alpha = alpha_for(&dataset, args.alpha)?;
    let config = penalty_config(&args.solver)?;
    let base = dataset.to_problem(0.0, alpha)?;

    let rho = match args.target.rho {
        Some(rho) => rho,
        None => {
            let eps = epsilon_tilde_checked(args.target.epsilon_tilde)?;
            let interval = compute_rho_interval(&base, &config).context("computing the return interval")?;
            let rho = select_rho_with_rule(&interval, base.mean_returns(), eps, args.target.rho_rule.into());
            log::info!(
                "return interval [{:e}, {:e}], selected rho {rho:e}",
                interval.rho_min,
                interval.rho_max
            );
            rho
        }
    };

    let problem = base.with_rho(rho).context("invalid return target")?;
    let (row, outcome) = match pspgd_solve(&problem, &config) {
        Ok(report) => (ReportRow::from_report(alpha, rho, &report), Outcome::Success),
        Err(Error::PenaltyNotConverged { report }) => {
            log::warn!(
                "penalty loop did not converge within {} outer iterations",
                report.outer_iterations
            );
            (ReportRow::from_report(alpha, rho, &report), Outcome::NotConverged)
        }
        Err(err @ Error::Subproblem { .. }) => {
            log::warn!("{err}");
            (ReportRow::failed(alpha, rho), Outcome::NotConverged)
        }
        Err(err) => return Err(err.into()),
    };
    let row = if args.no_timing { row.without_timing() } else { row };

    let mut buf = Vec::new();
    write_report(&[row], args.output.format.into(), &mut buf)?;
    emit(&args.output, &buf)?;
    Ok(outcome)
}

#[derive(Serialize)]
struct BoundsRecord {
    alpha: usize,
    rho_min: f64,
    rho_max: f64,
    epsilon_tilde: f64,
    rho: f64,
}

pub fn bounds(args: &BoundsArgs) -> anyhow::Result<Outcome> {
    let dataset = load_dataset(&args.dataset)?;
    let alpha = alpha_for(&dataset, args.alpha)?;
    let config = penalty_config(&args.solver)?;
    let eps = epsilon_tilde_checked(args.epsilon_tilde)?;
    let base = dataset.to_problem(0.0, alpha)?;

    let interval = match compute_rho_interval(&base, &config) {
        Ok(interval) => interval,
        Err(err @ (Error::PenaltyNotConverged { .. } | Error::Subproblem { .. })) => {
            log::error!("return interval: {err}");
            return Ok(Outcome::NotConverged);
        }
        Err(err) => return Err(err.into()),
    };
    let rho = select_rho_with_rule(&interval, base.mean_returns(), eps, args.rho_rule.into());
    let record = BoundsRecord {
        alpha,
        rho_min: interval.rho_min,
        rho_max: interval.rho_max,
        epsilon_tilde: eps,
        rho,
    };

    let mut buf = Vec::new();
    match OutputFormat::from(args.output.format) {
        OutputFormat::Csv => {
            writeln!(buf, "alpha,rho_min,rho_max,epsilon_tilde,rho")?;
            writeln!(
                buf,
                "{},{},{},{},{}",
                record.alpha,
                format_significant(record.rho_min, 6),
                format_significant(record.rho_max, 6),
                format_significant(record.epsilon_tilde, 6),
                format_significant(record.rho, 6)
            )?;
        }
        OutputFormat::Json => {
            serde_json::to_writer_pretty(&mut buf, &record)?;
            writeln!(buf)?;
        }
    }
    emit(&args.output, &buf)?;
    Ok(Outcome::Success)
}

pub fn frontier(args: &FrontierArgs) -> anyhow::Result<Outcome> {
    let dataset = load_dataset(&args.dataset)?;
    let alpha = alpha_for(&dataset, args.alpha)?;
    let config = penalty_config(&args.solver)?;
    if args.grid < 2 {
        bail!("--grid must be at least 2");
    }
    let parallel = args.jobs != Some(1);
    if let Some(jobs) = args.jobs.filter(|&j| j > 1) {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .context("configuring worker threads")?;
    }
    let base = dataset.to_problem(0.0, alpha)?;
    let curve = match sweep_frontier(&base, alpha, args.grid, &config, parallel) {
        Ok(curve) => curve,
        Err(err @ (Error::PenaltyNotConverged { .. } | Error::Subproblem { .. })) => {
            log::error!("return interval: {err}");
            return Ok(Outcome::NotConverged);
        }
        Err(err) => return Err(err.into()),
    };

    let rows: Vec<ReportRow> = curve
        .samples
        .iter()
        .map(|s| {
            let row = match &s.report {
                Some(report) => ReportRow::from_report(alpha, s.rho, report),
                None => ReportRow::failed(alpha, s.rho),
            };
            if args.no_timing {
                row.without_timing()
            } else {
                row
            }
        })
        .collect();
    let mut buf = Vec::new();
    write_report(&rows, args.output.format.into(), &mut buf)?;
    emit(&args.output, &buf)?;

    let fraction = curve.converged_fraction();
    if fraction >= FRONTIER_PASS_FRACTION {
        Ok(Outcome::Success)
    } else {
        log::warn!("only {:.0}% of grid points converged", 100.0 * fraction);
        Ok(Outcome::NotConverged)
    }
}

pub fn cloud(args: &CloudArgs) -> anyhow::Result<Outcome> {
    let dataset = load_dataset(&args.dataset)?;
    let alpha = alpha_for(&dataset, args.alpha)?;
    let problem = dataset.to_problem(0.0, alpha)?;
    let points = sample_feasible_cloud(&problem, alpha, args.count, args.seed);
    if points.len() < args.count {
        log::warn!(
            "only {} of {} samples respected the upper bounds",
            points.len(),
            args.count
        );
    }

    let mut buf = Vec::new();
    match OutputFormat::from(args.output.format) {
        OutputFormat::Csv => {
            writeln!(buf, "risk,return")?;
            for p in &points {
                writeln!(
                    buf,
                    "{},{}",
                    format_significant(p.risk, 6),
                    format_significant(p.expected_return, 6)
                )?;
            }
        }
        OutputFormat::Json => {
            serde_json::to_writer_pretty(&mut buf, &points)?;
            writeln!(buf)?;
        }
    }
    emit(&args.output, &buf)?;
    Ok(Outcome::Success)
}

#[derive(Serialize)]
struct ValidationRecord {
    name: String,
    n: usize,
    lambda_min: f64,
    lambda_max: f64,
    v_min: f64,
    v_max: f64,
}

pub fn validate(args: &ValidateArgs) -> anyhow::Result<Outcome> {
    let dataset = load_dataset(&args.dataset)?;
    let lambda_min = check_covariance(&dataset.covariance).context("covariance check")?;
    let v = &dataset.mean_returns;
    let record = ValidationRecord {
        name: dataset.name.clone(),
        n: dataset.n(),
        lambda_min,
        lambda_max: max_eigenvalue(&dataset.covariance),
        v_min: v.min(),
        v_max: v.max(),
    };

    let mut buf = Vec::new();
    match OutputFormat::from(args.output.format) {
        OutputFormat::Csv => {
            writeln!(buf, "name,n,lambda_min,lambda_max,v_min,v_max")?;
            writeln!(
                buf,
                "{},{},{},{},{},{}",
                record.name,
                record.n,
                format_significant(record.lambda_min, 6),
                format_significant(record.lambda_max, 6),
                format_significant(record.v_min, 6),
                format_significant(record.v_max, 6)
            )?;
        }
        OutputFormat::Json => {
            serde_json::to_writer_pretty(&mut buf, &record)?;
            writeln!(buf)?;
        }
    }
    emit(&args.output, &buf)?;
    Ok(Outcome::Success)
}
