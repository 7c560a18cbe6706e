use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use numeraire::error::{Error, Result};
use numeraire::scenario::{run_scenario, validate_config_file};

/// Prints a line, ignoring a closed pipe on the other end.
macro_rules! say {
    ($($arg:tt)*) => {{
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

#[derive(Parser)]
#[command(name = "numeraire", version, about = "Numeraire portfolio and asymptotic arbitrage scenario runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario config and write report.json plus plot CSVs
    Run {
        /// Scenario config file (JSON)
        #[arg(long)]
        config: PathBuf,
        /// Worker threads (default: all cores)
        #[arg(long)]
        threads: Option<usize>,
        /// Output directory, overriding the config's out_dir
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse and validate a config, including referenced input files
    Validate {
        /// Scenario config file (JSON)
        #[arg(long)]
        config: PathBuf,
    },
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config,
            threads,
            out,
        } => {
            if let Some(k) = threads {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(k)
                    .build_global()
                    .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
            }
            let outcome = run_scenario(&config, out.as_deref())?;
            if let Some(verdict) = &outcome.report.verdict {
                match &outcome.report.basis {
                    Some(basis) => say!("verdict: {verdict} ({basis})"),
                    None => say!("verdict: {verdict}"),
                }
            }
            for note in &outcome.report.notes {
                say!("note: {note}");
            }
            for file in &outcome.files {
                say!("wrote {}", file.display());
            }
            Ok(())
        }
        Command::Validate { config } => {
            let summary = validate_config_file(&config)?;
            say!("ok: {summary}");
            Ok(())
        }
    }
}
