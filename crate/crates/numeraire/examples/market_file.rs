//! Builds a two-period, two-asset event-tree market, writes it to the JSON
//! market format, reloads it, and solves it. Every node gets three branches
//! whose return vectors straddle zero, so the market is arbitrage-free.
//!
//! Run with `cargo run --example market_file`.

use numeraire::log_optimal::solve_log_optimal;
use numeraire::market::{FiniteMarket, MarketBuilder};

const FACTORS: [[f64; 2]; 3] = [[1.12, 1.25], [0.90, 0.85], [1.00, 0.95]];

fn add_children(b: &mut MarketBuilder, node: usize, s: &[f64], probs: [f64; 3]) -> Vec<usize> {
    FACTORS
        .iter()
        .zip(probs)
        .map(|(f, p)| b.add_child(node, p, vec![s[0] * f[0], s[1] * f[1]]))
        .collect()
}

fn main() -> numeraire::error::Result<()> {
    let mut b = MarketBuilder::new(vec![10.0, 5.0]);
    let level1 = add_children(&mut b, 0, &[10.0, 5.0], [0.5, 0.3, 0.2]);
    for (i, &node) in level1.iter().enumerate() {
        let s = [10.0 * FACTORS[i][0], 5.0 * FACTORS[i][1]];
        add_children(&mut b, node, &s, [0.4, 0.35, 0.25]);
    }
    let market = b.build()?;

    let dir = std::env::temp_dir().join("numeraire_market_example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("market.json");
    market.save(&path)?;
    println!("wrote {}", path.display());
    println!("--- file head ---");
    let text = std::fs::read_to_string(&path)?;
    for line in text.lines().take(14) {
        println!("{line}");
    }
    println!("...");

    let reloaded = FiniteMarket::load(&path)?;
    let sol = solve_log_optimal(&reloaded, 1e-10)?;
    println!("assets: {}, horizon: {}", reloaded.dim(), reloaded.horizon());
    println!("E ln V_T = {:.9}", sol.log_value);
    for (node, fractions) in reloaded.tree().internal_nodes().zip(&sol.fractions) {
        println!("node {node}: fractions {fractions:.6?}");
    }
    Ok(())
}
