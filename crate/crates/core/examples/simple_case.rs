//! Runs the six-asset example: minimum-variance portfolio, the return
//! interval for every cardinality bound, and one solve per bound.

use sparsefolio::data::embedded_simple_case;
use sparsefolio::portfolio::{compute_rho_interval, minimum_variance_portfolio};
use sparsefolio::{pspgd_solve, PenaltyConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let market = embedded_simple_case();
    let config = PenaltyConfig::default();

    let mvp_problem = market.to_problem(0.0, 6)?;
    let mvp = minimum_variance_portfolio(&mvp_problem, &config)?;
    println!(
        "MVP x = {:.4?} risk {:.4} return {:.4}",
        mvp.as_slice(),
        mvp_problem.risk(mvp.as_view()),
        mvp_problem.expected_return(mvp.as_view())
    );

    for alpha in 1..=6 {
        let interval = compute_rho_interval(&market.to_problem(0.0, alpha)?, &config)?;
        println!(
            "alpha {alpha}: rho_min {:.4} rho_max {:.4}",
            interval.rho_min, interval.rho_max
        );
    }

    println!("alpha  return   risk    card iter spg  tau       fcnt rho");
    for (alpha, rho) in [
        (1, 0.0018),
        (2, 0.0016),
        (3, 0.0017),
        (4, 0.0017),
        (5, 0.0012),
        (6, 0.0003),
    ] {
        let problem = market.to_problem(rho, alpha)?;
        match pspgd_solve(&problem, &config) {
            Ok(r) => println!(
                "{alpha:5}  {:.4}  {:.4}  {:4} {:4} {:3}  {:.6}  {:4} {rho}   x'y {:.1e} pg {:.1e}",
                r.expected_return,
                r.risk,
                r.cardinality,
                r.outer_iterations,
                r.spg_iterations,
                r.final_tau,
                r.function_evaluations,
                r.hadamard,
                r.pg_norm
            ),
            Err(e) => println!("{alpha:5}  failed: {e}"),
        }
    }
    Ok(())
}
