//! Diagnoses a growing sequence of binomial markets: terminal-value tails,
//! negative moments, test power against Qhat, and the transfer inequalities
//! tying them together.
//!
//! Run with `cargo run --example tree_sequence`.

use numeraire::diagnostics::{
    corollary_checks, hellinger_curve, np_profile, tail_curve, verdict, TerminalLaw,
    VerdictPolicy,
};
use numeraire::log_optimal::solve_log_optimal;
use numeraire::market::FiniteMarket;

fn main() -> numeraire::error::Result<()> {
    let policy = VerdictPolicy::default();
    let n_list: Vec<usize> = (1..=12).collect();
    let m_grid = [1.0, 2.0, 4.0, 8.0];
    let alpha_grid = [0.25, 0.5, 0.75];

    let mut laws = Vec::new();
    for &n in &n_list {
        let market = FiniteMarket::binomial(1.0, 1.2, 0.9, 0.6, n)?;
        let sol = solve_log_optimal(&market, 1e-10)?;
        let values = sol.value.terminal(&market);
        let atoms = values
            .iter()
            .zip(market.tree().leaf_probs())
            .map(|(&v, &p)| (v, p))
            .collect();
        laws.push(TerminalLaw::from_atoms(n, atoms)?);

        if n == 4 {
            let power = np_profile(&market.measure(), &sol.qhat, &[0.01, 0.05, 0.1, 0.25])?;
            println!("test power of P against Qhat at n = 4: {power:.4?}");
        }
    }

    let tail = tail_curve(&laws, &m_grid)?;
    let hell = hellinger_curve(&laws, &alpha_grid)?;
    println!("\nP(V_T >= M) by n:");
    for (i, &n) in tail.n_list.iter().enumerate() {
        println!("  n = {n:2}: {:.4?}", tail.values[i]);
    }
    println!("E V_T^(-alpha) by n:");
    for (i, &n) in hell.n_list.iter().enumerate() {
        println!("  n = {n:2}: {:.4?}", hell.values[i]);
    }

    println!("\nsequence verdict: {}", verdict(&tail, Some(&hell), &policy)?);

    let report = corollary_checks(&laws, &alpha_grid, &m_grid, &policy, None, None)?;
    println!(
        "windowed moment side {:.4} vs tail side {:.4} (within policy: {})",
        report.moment_side, report.tail_side, report.within_policy
    );
    Ok(())
}
