//! Drives the scenario runner end to end from a config written on the fly:
//! the same machinery behind `numeraire run --config <file>`.
//!
//! Run with `cargo run --example scenario_run`.

use numeraire::scenario::run_scenario;

fn main() -> numeraire::error::Result<()> {
    let dir = std::env::temp_dir().join("numeraire_scenario_example");
    std::fs::create_dir_all(&dir)?;
    let config = serde_json::json!({
        "kind": "tree-sequence",
        "binomial_family": {"u": 1.2, "d": 0.9, "p": 0.6},
        "n_list": [1, 2, 3, 4, 5, 6, 7, 8],
        "grids": {
            "m_grid": [1.0, 2.0, 4.0],
            "alpha_grid": [0.25, 0.5, 0.75],
            "delta_grid": [0.0, 0.05, 0.1, 0.25]
        },
        "out_dir": "out"
    });
    let config_path = dir.join("config.json");
    std::fs::write(&config_path, serde_json::to_vec_pretty(&config)?)?;
    println!("config: {}", config_path.display());

    let outcome = run_scenario(&config_path, None)?;
    println!("verdict: {:?}", outcome.report.verdict);
    println!("scalars:");
    for (key, value) in &outcome.report.scalars {
        println!("  {key} = {value:.6}");
    }
    for note in &outcome.report.notes {
        println!("note: {note}");
    }
    for file in &outcome.files {
        println!("wrote {}", file.display());
    }
    Ok(())
}
