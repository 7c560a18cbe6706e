//! Simulates the compounded log-optimal wealth in one-stock lognormal
//! sequences and prints the quantile fan of ln V_n, next to the per-period
//! optimal fractions that generate it.
//!
//! Run with `cargo run --example growth_paths`.

use numeraire::lognormal::{
    expected_log_growth, monte_carlo_growth, optimal_fraction, optimal_fractions,
    LognormalParams,
};
use numeraire::quadrature::QuadratureConfig;

fn main() -> numeraire::error::Result<()> {
    let quad = QuadratureConfig::default();

    // single period: closed boundaries and an interior optimum
    let (mu, sigma) = (0.05, 0.3);
    let delta = optimal_fraction(mu, sigma, 1e-10)?;
    println!("mu = {mu}, sigma = {sigma}: optimal fraction {delta:.6}");
    for d in [0.0, 0.25, 0.5, delta, 1.0] {
        println!("  g({d:.4}) = {:.6}", expected_log_growth(d, mu, sigma, &quad)?);
    }

    // decaying drift: growth flattens out
    let plateau = LognormalParams::Power { a: 0.1, p: 1.0, b: 0.25, q: 0.0 };
    // persistent drift: growth compounds linearly
    let compounding = LognormalParams::Power { a: 0.06, p: 0.0, b: 0.25, q: 0.0 };

    for (label, params) in [("drift ~ 1/k", &plateau), ("constant drift", &compounding)] {
        let fractions = optimal_fractions(params, 6, 1e-9)?;
        println!("\n{label}: first fractions {fractions:.4?}");
        let report = monte_carlo_growth(params, 256, 4000, 17)?;
        println!("  quantiles of ln V_n over {} paths:", report.paths);
        for cp in &report.checkpoints {
            println!(
                "  n = {:3}: q25 {:8.4}  median {:8.4}  q75 {:8.4}",
                cp.n, cp.lower_quartile, cp.median, cp.upper_quartile
            );
        }
        for check in &report.sq_return_checks {
            println!(
                "  E R^2 at period {}: {:.5} (exact {:.5})",
                check.period, check.estimate.value, check.exact
            );
        }
    }
    Ok(())
}
