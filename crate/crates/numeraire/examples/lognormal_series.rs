//! Classifies one-stock lognormal market sequences by their drift/volatility
//! series: symbolic power families get a closed-form verdict, numeric inputs
//! get a partial-sum trend.
//!
//! Run with `cargo run --example lognormal_series`.

use numeraire::lognormal::{sigma_series, theorem9_verdict, LognormalParams};

fn main() -> numeraire::error::Result<()> {
    let families = [
        ("mu = 1/k, sigma = 1", LognormalParams::Power { a: 1.0, p: 1.0, b: 1.0, q: 0.0 }),
        ("mu = 0.5/k, sigma = 1/sqrt(k)", LognormalParams::Power { a: 0.5, p: 1.0, b: 1.0, q: 0.5 }),
        ("mu = 1/k^2, sigma = 1/k", LognormalParams::Power { a: 1.0, p: 2.0, b: 1.0, q: 1.0 }),
        ("mu = 2/k, sigma = 1/k", LognormalParams::Power { a: 2.0, p: 1.0, b: 1.0, q: 1.0 }),
    ];
    for (label, params) in families {
        let report = theorem9_verdict(&params, 500)?;
        let sums = (
            report.series.small_drift_sums.last().unwrap(),
            report.series.large_drift_sums.last().unwrap(),
        );
        print!("{label}: {} via {}", report.verdict, report.basis);
        if let Some(eps) = report.witness_epsilon {
            print!(" (epsilon = {eps})");
        }
        println!("; partial sums after 500 terms: small {:.4}, large {:.4}", sums.0, sums.1);
    }

    // numeric mode has no limit statement, only the observable trend
    let mu: Vec<f64> = (1..=40).map(|k| 0.8 / k as f64).collect();
    let sigma = vec![0.3; 40];
    let numeric = LognormalParams::Numeric { mu, sigma };
    let series = sigma_series(&numeric, 0.5, 40)?;
    println!("\nnumeric family, epsilon = 0.5:");
    println!("  condition (vanishing volatility side): {:?}", series.vanishing_volatility);
    for n in [10, 20, 40] {
        println!("  total partial sum at n = {n}: {:.4}", series.total_sums[n - 1]);
    }
    Ok(())
}
