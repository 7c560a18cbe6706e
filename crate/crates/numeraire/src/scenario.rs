//! Batch runner: one JSON config describes one analysis scenario, and one
//! run writes one output directory with `report.json`, `curves.csv`, and
//! per-curve plot files.
//!
//! Four scenario kinds are supported: a single event tree, a sequence of
//! trees, a diffusion family indexed by `n`, and a lognormal one-stock
//! family. Every random number flows from the config seed through named
//! streams, so any rerun reproduces the report byte for byte except the
//! timestamp.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diagnostics::{
    corollary_checks, default_alpha_grid, default_delta_grid, default_m_grid, hellinger_curve,
    np_profile, tail_curve, verdict, CurveMatrix, SequenceDiagnostics, TerminalLaw, VerdictPolicy,
};
use crate::diffusion::{
    simulate, theorem8_diagnostic, verify_lemma3_inequalities, DiffusionFamily, McConfig,
    MomentsSummary,
};
use crate::error::{Error, Result};
use crate::lognormal::{
    monte_carlo_growth, sigma_series, theorem9_verdict, zeta_density_check, GrowthReport,
    LognormalParams, SigmaSeries,
};
use crate::log_optimal::{find_martingale_measure, solve_log_optimal, verify_duality};
use crate::market::FiniteMarket;
use crate::quadrature::QuadratureConfig;
use crate::rng;

pub const DEFAULT_SOLVER_TOL: f64 = 1e-9;
pub const DEFAULT_SERIES_TERMS: usize = 1000;

/// Evaluation grids shared by the scenario kinds. Absent fields fall back to
/// the library defaults.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Grids {
    pub m_grid: Vec<f64>,
    pub alpha_grid: Vec<f64>,
    pub delta_grid: Vec<f64>,
}

impl Default for Grids {
    fn default() -> Self {
        Grids {
            m_grid: default_m_grid(),
            alpha_grid: default_alpha_grid(),
            delta_grid: default_delta_grid(),
        }
    }
}

fn check_grid(name: &str, grid: &[f64], lo: f64, hi: f64, open: bool) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidInput(format!("{name} must not be empty")));
    }
    for w in grid.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::InvalidInput(format!(
                "{name} must be strictly increasing"
            )));
        }
    }
    let (first, last) = (grid[0], *grid.last().unwrap());
    let inside = if open {
        first > lo && last < hi
    } else {
        first >= lo && last <= hi
    };
    if !inside || !first.is_finite() || !last.is_finite() {
        return Err(Error::InvalidInput(format!(
            "{name} entries must lie in the {}{lo}, {hi}{} range",
            if open { "open (" } else { "[" },
            if open { ")" } else { "]" },
        )));
    }
    Ok(())
}

impl Grids {
    pub fn validate(&self) -> Result<()> {
        check_grid("m_grid", &self.m_grid, 0.0, f64::INFINITY, true)?;
        check_grid("alpha_grid", &self.alpha_grid, 0.0, 1.0, true)?;
        check_grid("delta_grid", &self.delta_grid, 0.0, 1.0, false)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    Tree,
    TreeSequence,
    Diffusion,
    Lognormal,
}

impl ScenarioKind {
    fn name(&self) -> &'static str {
        match self {
            ScenarioKind::Tree => "tree",
            ScenarioKind::TreeSequence => "tree-sequence",
            ScenarioKind::Diffusion => "diffusion",
            ScenarioKind::Lognormal => "lognormal",
        }
    }
}

/// Inline binomial family for tree sequences: per index `n` the market is an
/// `n`-period binomial tree with the given factors.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinomialFamily {
    #[serde(default = "default_s0")]
    pub s0: f64,
    pub u: f64,
    pub d: f64,
    pub p: f64,
}

fn default_s0() -> f64 {
    1.0
}

fn default_solver_tol() -> f64 {
    DEFAULT_SOLVER_TOL
}

/// One scenario: a kind plus the sections that kind consumes. Sections that
/// do not belong to the kind must be absent.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub market_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub market_files: Option<Vec<PathBuf>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub binomial_family: Option<BinomialFamily>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diffusion: Option<DiffusionFamily>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lognormal: Option<LognormalParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_list: Option<Vec<usize>>,
    #[serde(default)]
    pub grids: Grids,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc: Option<McConfig>,
    #[serde(default)]
    pub policy: VerdictPolicy,
    #[serde(default = "default_solver_tol")]
    pub solver_tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub series_epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub series_terms: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        self.grids.validate()?;
        self.policy.validate()?;
        if !(self.solver_tol > 0.0) {
            return Err(Error::InvalidInput(format!(
                "solver_tol must be positive, got {}",
                self.solver_tol
            )));
        }
        if let Some(mc) = &self.mc {
            mc.validate()?;
        }
        if let Some(n_list) = &self.n_list {
            if n_list.is_empty() || n_list[0] == 0 {
                return Err(Error::InvalidInput(
                    "n_list must be non-empty with positive indices".to_string(),
                ));
            }
            if n_list.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::InvalidInput(
                    "n_list must be strictly increasing".to_string(),
                ));
            }
        }
        if let Some(eps) = self.series_epsilon {
            if !(eps > 0.0 && eps.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "series_epsilon must be positive, got {eps}"
                )));
            }
        }
        if self.series_terms == Some(0) {
            return Err(Error::InvalidInput("series_terms must be positive".to_string()));
        }

        let kind = self.kind.name();
        let required = |ok: bool, field: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::InvalidInput(format!("{kind} scenario requires {field}")))
            }
        };
        match self.kind {
            ScenarioKind::Tree => required(self.market_file.is_some(), "market_file")?,
            ScenarioKind::TreeSequence => {
                let files = self.market_files.as_ref().map_or(false, |f| !f.is_empty());
                let family = self.binomial_family.is_some() && self.n_list.is_some();
                required(files || family, "market_files or binomial_family with n_list")?;
                if files && self.binomial_family.is_some() {
                    return Err(Error::InvalidInput(
                        "tree-sequence scenario takes market_files or binomial_family, not both"
                            .to_string(),
                    ));
                }
            }
            ScenarioKind::Diffusion => {
                required(self.diffusion.is_some(), "diffusion")?;
                required(self.n_list.is_some(), "n_list")?;
                required(self.mc.is_some(), "mc")?;
            }
            ScenarioKind::Lognormal => required(self.lognormal.is_some(), "lognormal")?,
        }
        let forbid = |absent: bool, field: &str| {
            if absent {
                Ok(())
            } else {
                Err(Error::InvalidInput(format!(
                    "field {field} does not apply to {kind} scenarios"
                )))
            }
        };
        if self.kind != ScenarioKind::Tree {
            forbid(self.market_file.is_none(), "market_file")?;
        }
        if self.kind != ScenarioKind::TreeSequence {
            forbid(self.market_files.is_none(), "market_files")?;
            forbid(self.binomial_family.is_none(), "binomial_family")?;
        }
        if self.kind != ScenarioKind::Diffusion {
            forbid(self.diffusion.is_none(), "diffusion")?;
        }
        if self.kind != ScenarioKind::Lognormal {
            forbid(self.lognormal.is_none(), "lognormal")?;
            forbid(self.series_epsilon.is_none(), "series_epsilon")?;
            forbid(self.series_terms.is_none(), "series_terms")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    /// SHA-256 of the config file bytes.
    pub config_hash: String,
    pub seed: Option<u64>,
    pub version: String,
    /// Unix seconds; the only field that differs between identical reruns.
    pub timestamp: u64,
}

/// Everything `report.json` holds.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub kind: String,
    pub verdict: Option<String>,
    pub secondary_verdict: Option<String>,
    pub basis: Option<String>,
    pub scalars: BTreeMap<String, f64>,
    pub policy: VerdictPolicy,
    pub grids: Grids,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub moments: Option<MomentsSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub growth: Option<GrowthReport>,
    pub notes: Vec<String>,
    pub provenance: Provenance,
}

/// A finished run: the report plus every file written.
#[derive(Debug)]
pub struct RunOutcome {
    pub report: Report,
    pub out_dir: PathBuf,
    pub files: Vec<PathBuf>,
}

/// Reads and parses a config file; returns the config and the hash of the
/// raw bytes.
pub fn load_config(path: &Path) -> Result<(ScenarioConfig, String)> {
    let bytes = fs::read(path)
        .map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", path.display())))?;
    let config: ScenarioConfig = serde_json::from_slice(&bytes)
        .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
    let hash = format!("{:x}", Sha256::digest(&bytes));
    Ok((config, hash))
}

/// Parses and validates a config, including any referenced input files, and
/// returns a one-line summary.
pub fn validate_config_file(path: &Path) -> Result<String> {
    let (config, _) = load_config(path)?;
    config.validate()?;
    let base = path.parent().unwrap_or(Path::new("."));
    match config.kind {
        ScenarioKind::Tree => {
            let market = FiniteMarket::load(resolve(base, config.market_file.as_ref().unwrap()))?;
            Ok(format!(
                "tree scenario: {} assets, horizon {}, {} nodes",
                market.dim(),
                market.horizon(),
                market.tree().len()
            ))
        }
        ScenarioKind::TreeSequence => {
            let markets = sequence_markets(&config, base)?;
            Ok(format!("tree-sequence scenario: {} markets", markets.len()))
        }
        ScenarioKind::Diffusion => {
            let family = config.diffusion.as_ref().unwrap();
            for &n in config.n_list.as_ref().unwrap() {
                family.instantiate(n)?;
            }
            Ok(format!(
                "diffusion scenario: {} models, {} paths each",
                config.n_list.as_ref().unwrap().len(),
                config.mc.as_ref().unwrap().paths
            ))
        }
        ScenarioKind::Lognormal => {
            let params = config.lognormal.as_ref().unwrap();
            params.validate()?;
            let terms = series_terms(&config, params)?;
            Ok(format!(
                "lognormal scenario: {} mode, {terms} series terms",
                if params.is_symbolic() { "power" } else { "numeric" }
            ))
        }
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn series_terms(config: &ScenarioConfig, params: &LognormalParams) -> Result<usize> {
    let requested = config.series_terms.unwrap_or(DEFAULT_SERIES_TERMS);
    match params.len() {
        Some(len) if requested > len => {
            if config.series_terms.is_some() {
                Err(Error::InvalidInput(format!(
                    "series_terms = {requested} but the numeric family defines only {len} periods"
                )))
            } else {
                Ok(len)
            }
        }
        _ => Ok(requested),
    }
}

/// Runs the scenario described by `config_path`, writing artifacts into the
/// output directory (`--out` override, else the config's `out_dir`, else the
/// current directory).
pub fn run_scenario(config_path: &Path, out_override: Option<&Path>) -> Result<RunOutcome> {
    let (config, config_hash) = load_config(config_path)?;
    config.validate()?;
    let base = config_path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let out_dir = out_override
        .map(Path::to_path_buf)
        .or_else(|| config.out_dir.as_ref().map(|d| resolve(&base, d)))
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&out_dir)?;

    let mut files = Vec::new();
    let (mut report, diag) = match config.kind {
        ScenarioKind::Tree => run_tree(&config, &base)?,
        ScenarioKind::TreeSequence => run_tree_sequence(&config, &base)?,
        ScenarioKind::Diffusion => run_diffusion(&config, &out_dir, &mut files)?,
        ScenarioKind::Lognormal => run_lognormal(&config, &out_dir, &mut files)?,
    };

    if let Some(diag) = &diag {
        let (plot_files, warnings) = emit_plotdata(diag, &out_dir)?;
        files.extend(plot_files);
        report.notes.extend(warnings);
        let mut curve_list: Vec<(&str, &CurveMatrix)> = vec![("tail", &diag.tail)];
        if let Some(c) = &diag.secondary_tail {
            curve_list.push(("secondary_tail", c));
        }
        if let Some(c) = &diag.hellinger {
            curve_list.push(("hellinger", c));
        }
        if let Some(c) = &diag.np {
            curve_list.push(("np", c));
        }
        files.push(write_curves_csv(&out_dir, &curve_list)?);
    }

    report.provenance = Provenance {
        config_hash,
        seed: config.mc.as_ref().map(|m| m.seed),
        version: env!("CARGO_PKG_VERSION").to_string(),
        timestamp: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    };

    let report_path = out_dir.join("report.json");
    let mut bytes = serde_json::to_vec_pretty(&report)?;
    bytes.push(b'\n');
    fs::write(&report_path, bytes)?;
    files.insert(0, report_path);

    Ok(RunOutcome {
        report,
        out_dir,
        files,
    })
}

fn empty_report(kind: ScenarioKind, config: &ScenarioConfig) -> Report {
    Report {
        kind: kind.name().to_string(),
        verdict: None,
        secondary_verdict: None,
        basis: None,
        scalars: BTreeMap::new(),
        policy: config.policy,
        grids: config.grids.clone(),
        moments: None,
        growth: None,
        notes: Vec::new(),
        provenance: Provenance {
            config_hash: String::new(),
            seed: None,
            version: String::new(),
            timestamp: 0,
        },
    }
}

fn market_curves(
    solved: &[(usize, FiniteMarket, crate::log_optimal::NumeraireSolution)],
    grids: &Grids,
) -> Result<(Vec<TerminalLaw>, CurveMatrix, CurveMatrix, CurveMatrix)> {
    let mut laws = Vec::with_capacity(solved.len());
    let mut np_rows = Vec::with_capacity(solved.len());
    for (n, market, sol) in solved {
        let values = sol.value.terminal(market);
        let atoms: Vec<(f64, f64)> = values
            .iter()
            .zip(market.tree().leaf_probs())
            .map(|(&v, &p)| (v, p))
            .collect();
        laws.push(TerminalLaw::from_atoms(*n, atoms)?);
        np_rows.push(np_profile(&market.measure(), &sol.qhat, &grids.delta_grid)?);
    }
    let tail = tail_curve(&laws, &grids.m_grid)?;
    let hell = hellinger_curve(&laws, &grids.alpha_grid)?;
    let np = CurveMatrix {
        n_list: solved.iter().map(|(n, _, _)| *n).collect(),
        grid: grids.delta_grid.clone(),
        values: np_rows,
        std_errors: None,
    };
    Ok((laws, tail, hell, np))
}

fn run_tree(
    config: &ScenarioConfig,
    base: &Path,
) -> Result<(Report, Option<SequenceDiagnostics>)> {
    let market = FiniteMarket::load(resolve(base, config.market_file.as_ref().unwrap()))?;
    let sol = solve_log_optimal(&market, config.solver_tol)?;
    let (samples, seed) = config
        .mc
        .as_ref()
        .map(|m| (m.paths, m.seed))
        .unwrap_or((200, 0));
    let duality = verify_duality(&market, &sol, samples, seed)?;

    let solved = vec![(market.horizon().max(1), market, sol)];
    let (_, tail, hell, np) = market_curves(&solved, &config.grids)?;
    let (_, _, sol) = &solved[0];

    let mut report = empty_report(ScenarioKind::Tree, config);
    report.scalars.insert("log_value".to_string(), sol.log_value);
    report.scalars.insert("dual_value".to_string(), sol.dual_value);
    report.scalars.insert("duality_gap".to_string(), sol.gap);
    report.scalars.insert("grad_norm".to_string(), sol.grad_norm);
    report
        .scalars
        .insert("qhat_mass_error".to_string(), (sol.qhat.mass() - 1.0).abs());
    report
        .scalars
        .insert("martingale_slack".to_string(), duality.martingale_slack);
    report
        .scalars
        .insert("entropy_margin".to_string(), duality.entropy_margin);
    report.scalars.insert("ratio_slack".to_string(), duality.ratio_slack);
    report
        .scalars
        .insert("duality_samples".to_string(), duality.samples as f64);
    report.notes.push(format!(
        "duality check over {} sampled measures and strategies: {}",
        duality.samples,
        if duality.passes(1e-9) { "passed at 1e-9" } else { "FAILED at 1e-9" }
    ));

    let v = verdict(&tail, Some(&hell), &config.policy)?;
    let diag = SequenceDiagnostics {
        n_list: vec![solved[0].0],
        tail,
        tail_label: "terminal wealth",
        secondary_tail: None,
        secondary_tail_label: None,
        hellinger: Some(hell),
        np: Some(np),
        verdict: v,
        secondary_verdict: None,
        policy: config.policy,
        notes: Vec::new(),
    };
    Ok((report, Some(diag)))
}

fn sequence_markets(config: &ScenarioConfig, base: &Path) -> Result<Vec<(usize, FiniteMarket)>> {
    if let Some(files) = &config.market_files {
        files
            .iter()
            .enumerate()
            .map(|(i, f)| Ok((i + 1, FiniteMarket::load(resolve(base, f))?)))
            .collect()
    } else {
        let fam = config.binomial_family.as_ref().unwrap();
        config
            .n_list
            .as_ref()
            .unwrap()
            .iter()
            .map(|&n| Ok((n, FiniteMarket::binomial(fam.s0, fam.u, fam.d, fam.p, n)?)))
            .collect()
    }
}

fn run_tree_sequence(
    config: &ScenarioConfig,
    base: &Path,
) -> Result<(Report, Option<SequenceDiagnostics>)> {
    let markets = sequence_markets(config, base)?;
    let mut solved = Vec::with_capacity(markets.len());
    for (n, market) in markets {
        let sol = solve_log_optimal(&market, config.solver_tol)?;
        solved.push((n, market, sol));
    }
    let (v_laws, tail, hell, np) = market_curves(&solved, &config.grids)?;

    // companion laws for the transfer bounds: buy-and-hold wealth in the
    // first asset, and the inverse density of the averaged vertex measure.
    // Their ratio expectations equal one in theory; solver error can push
    // the numerical value a hair above, so renormalize when it does.
    let mut x_laws = Vec::with_capacity(solved.len());
    let mut inv_z_laws = Vec::with_capacity(solved.len());
    for (n, market, sol) in &solved {
        let probs = market.tree().leaf_probs();
        let v = sol.value.terminal(market);
        let s0 = market.price(market.tree().root())[0];
        let mut hold: Vec<(f64, f64)> = market
            .tree()
            .leaves()
            .iter()
            .zip(probs)
            .map(|(&leaf, &p)| (market.price(leaf)[0] / s0, p))
            .collect();
        let ratio: f64 = hold.iter().zip(&v).map(|(&(x, p), &vi)| p * x / vi).sum();
        if ratio > 1.0 {
            for atom in &mut hold {
                atom.0 /= ratio;
            }
        }
        x_laws.push(TerminalLaw::from_atoms(*n, hold)?);
        let q = find_martingale_measure(market).ok_or_else(|| {
            Error::Arbitrage("sequence market lost its martingale measure".to_string())
        })?;
        let mut inv: Vec<(f64, f64)> = probs
            .iter()
            .enumerate()
            .map(|(i, &p)| (p / q.weight(i), p))
            .collect();
        let vz: f64 = v.iter().enumerate().map(|(i, &vi)| vi * q.weight(i)).sum();
        if vz > 1.0 {
            for atom in &mut inv {
                atom.0 *= vz;
            }
        }
        inv_z_laws.push(TerminalLaw::from_atoms(*n, inv)?);
    }
    let corollary = corollary_checks(
        &v_laws,
        &config.grids.alpha_grid,
        &config.grids.m_grid,
        &config.policy,
        Some(&x_laws),
        Some(&inv_z_laws),
    )?;

    let mut report = empty_report(ScenarioKind::TreeSequence, config);
    let max_gap = solved.iter().map(|(_, _, s)| s.gap).fold(0.0, f64::max);
    let worst_grad = solved.iter().map(|(_, _, s)| s.grad_norm).fold(0.0, f64::max);
    report.scalars.insert("max_duality_gap".to_string(), max_gap);
    report.scalars.insert("worst_grad_norm".to_string(), worst_grad);
    report
        .scalars
        .insert("corollary_moment_side".to_string(), corollary.moment_side);
    report
        .scalars
        .insert("corollary_tail_side".to_string(), corollary.tail_side);
    report
        .scalars
        .insert("corollary_agreement".to_string(), corollary.agreement);
    if let Some(worst) = corollary
        .wealth_tail_slacks
        .iter()
        .map(|&(_, _, s)| s)
        .min_by(f64::total_cmp)
    {
        report
            .scalars
            .insert("worst_wealth_transfer_slack".to_string(), worst);
    }
    if let Some(worst) = corollary
        .density_tail_slacks
        .iter()
        .map(|&(_, _, s)| s)
        .min_by(f64::total_cmp)
    {
        report
            .scalars
            .insert("worst_density_transfer_slack".to_string(), worst);
    }
    for (n, _, sol) in &solved {
        report.notes.push(format!(
            "n = {n}: E ln V_T = {:.9}, duality gap {:.3e}",
            sol.log_value, sol.gap
        ));
    }
    report.notes.push(format!(
        "moment/tail windows {} at eps1 = {}",
        if corollary.within_policy { "agree" } else { "disagree" },
        config.policy.eps1
    ));
    report.notes.extend(corollary.notes);

    let v = verdict(&tail, Some(&hell), &config.policy)?;
    report.verdict = Some(v.to_string());
    let diag = SequenceDiagnostics {
        n_list: solved.iter().map(|(n, _, _)| *n).collect(),
        tail,
        tail_label: "terminal wealth",
        secondary_tail: None,
        secondary_tail_label: None,
        hellinger: Some(hell),
        np: Some(np),
        verdict: v,
        secondary_verdict: None,
        policy: config.policy,
        notes: Vec::new(),
    };
    Ok((report, Some(diag)))
}

fn run_diffusion(
    config: &ScenarioConfig,
    out_dir: &Path,
    files: &mut Vec<PathBuf>,
) -> Result<(Report, Option<SequenceDiagnostics>)> {
    let family = config.diffusion.as_ref().unwrap();
    let n_list = config.n_list.as_ref().unwrap();
    let mc = config.mc.as_ref().unwrap();
    let diag = theorem8_diagnostic(family, n_list, &config.grids.m_grid, mc, &config.policy)?;

    // terminal bundle of the last model: moments block, terminals file, and
    // the wealth/integral tail coupling at mid/top thresholds
    let n_max = *n_list.last().unwrap();
    let spec = family.instantiate(n_max)?;
    let bundle = simulate(&spec, mc.steps, mc.paths, rng::derive(mc.seed, n_max as u64))?;
    let m_grid = &config.grids.m_grid;
    let (m_mid, m_hi) = (m_grid[m_grid.len() / 2], *m_grid.last().unwrap());
    let coupling = verify_lemma3_inequalities(&bundle, 0.5, m_hi, m_mid)?;

    let mut report = empty_report(ScenarioKind::Diffusion, config);
    report.verdict = Some(diag.verdict.to_string());
    report.secondary_verdict = diag.secondary_verdict.map(|v| v.to_string());
    report.scalars.insert("excluded_paths".to_string(), bundle.excluded as f64);
    report
        .scalars
        .insert("wealth_tail_slack".to_string(), coupling.wealth_tail.slack);
    report
        .scalars
        .insert("wealth_tail_se".to_string(), coupling.wealth_tail.se);
    report
        .scalars
        .insert("integral_tail_slack".to_string(), coupling.integral_tail.slack);
    report
        .scalars
        .insert("integral_tail_se".to_string(), coupling.integral_tail.se);
    report.notes.extend(diag.notes.iter().cloned());
    report.notes.push(format!(
        "tail coupling at alpha = 0.5, M = {m_hi}, N = {m_mid}: wealth slack {:.3e}, \
         integral slack {:.3e}",
        coupling.wealth_tail.slack, coupling.integral_tail.slack
    ));
    report.moments = Some(bundle.moments());

    let terminals_path = out_dir.join("terminals.csv");
    let mut buf = Vec::new();
    bundle.write_terminals_csv(&mut buf)?;
    fs::write(&terminals_path, buf)?;
    files.push(terminals_path);

    Ok((report, Some(diag)))
}

fn run_lognormal(
    config: &ScenarioConfig,
    out_dir: &Path,
    files: &mut Vec<PathBuf>,
) -> Result<(Report, Option<SequenceDiagnostics>)> {
    let params = config.lognormal.as_ref().unwrap();
    params.validate()?;
    let terms = series_terms(config, params)?;
    let mut report = empty_report(ScenarioKind::Lognormal, config);

    let series = if params.is_symbolic() {
        let t9 = theorem9_verdict(params, terms)?;
        report.verdict = Some(t9.verdict.to_string());
        report.basis = Some(t9.basis);
        if let Some(eps) = t9.witness_epsilon {
            report.scalars.insert("witness_epsilon".to_string(), eps);
        }
        t9.series
    } else {
        let eps = config.series_epsilon.unwrap_or(0.5);
        report.notes.push(
            "verdict requires symbolic family; partial-sum trend reported instead".to_string(),
        );
        sigma_series(params, eps, terms)?
    };
    report
        .scalars
        .insert("small_drift_sum".to_string(), *series.small_drift_sums.last().unwrap());
    report
        .scalars
        .insert("large_drift_sum".to_string(), *series.large_drift_sums.last().unwrap());
    report
        .scalars
        .insert("total_sum".to_string(), *series.total_sums.last().unwrap());
    report.scalars.insert("series_epsilon".to_string(), series.epsilon);

    // density pricing check over the first periods and the fraction grid
    let quad = QuadratureConfig::default();
    let mut worst = f64::INFINITY;
    for k in 1..=terms.min(20) {
        for &delta in &config.grids.delta_grid {
            let slack = zeta_density_check(params.mu(k), params.sigma(k), delta, &quad)?;
            worst = worst.min(slack);
        }
    }
    report.scalars.insert("zeta_density_worst_slack".to_string(), worst);
    if worst < -1e-8 {
        report
            .notes
            .push(format!("density pricing check failed: worst slack {worst:.3e}"));
    }

    files.push(write_series_csv(out_dir, &series)?);

    if let Some(mc) = &config.mc {
        let growth = monte_carlo_growth(params, terms, mc.paths, mc.seed)?;
        files.push(write_growth_csv(out_dir, &growth)?);
        report.growth = Some(growth);
    }

    Ok((report, None))
}

fn fmt_se(se: Option<f64>) -> String {
    se.map(|s| s.to_string()).unwrap_or_default()
}

/// Writes one CSV per curve family. Headers are always present; an empty
/// curve gives a header-only file. Negative-moment rows are checked for
/// monotone decay in alpha and any violation comes back as a warning.
pub fn emit_plotdata(
    diag: &SequenceDiagnostics,
    dir: &Path,
) -> Result<(Vec<PathBuf>, Vec<String>)> {
    let mut files = Vec::new();
    let mut warnings = Vec::new();

    let tail_csv = |curve: &CurveMatrix| {
        let mut out = String::from("n,m,probability,se\n");
        for (i, &n) in curve.n_list.iter().enumerate() {
            for (j, &m) in curve.grid.iter().enumerate() {
                let se = fmt_se(curve.std_errors.as_ref().map(|s| s[i][j]));
                let _ = writeln!(out, "{n},{m},{},{se}", curve.values[i][j]);
            }
        }
        out
    };
    let path = dir.join("tail.csv");
    fs::write(&path, tail_csv(&diag.tail))?;
    files.push(path);
    if let Some(curve) = &diag.secondary_tail {
        let path = dir.join("secondary_tail.csv");
        fs::write(&path, tail_csv(curve))?;
        files.push(path);
    }

    if let Some(curve) = &diag.hellinger {
        let mut out = String::from("n,alpha,moment,se\n");
        let mut skewed = Vec::new();
        for (i, &n) in curve.n_list.iter().enumerate() {
            for (j, &alpha) in curve.grid.iter().enumerate() {
                let se = fmt_se(curve.std_errors.as_ref().map(|s| s[i][j]));
                let _ = writeln!(out, "{n},{alpha},{},{se}", curve.values[i][j]);
            }
            if curve.values[i].windows(2).any(|w| w[1] > w[0] + 1e-12) {
                skewed.push(n);
            }
        }
        if !skewed.is_empty() {
            warnings.push(format!(
                "negative-moment curves at n = {skewed:?} are not monotone in alpha \
                 (those laws put mass below one)"
            ));
        }
        let path = dir.join("hellinger.csv");
        fs::write(&path, out)?;
        files.push(path);
    }

    if let Some(curve) = &diag.np {
        let mut out = String::from("n,delta,power\n");
        for (i, &n) in curve.n_list.iter().enumerate() {
            for (j, &delta) in curve.grid.iter().enumerate() {
                let _ = writeln!(out, "{n},{delta},{}", curve.values[i][j]);
            }
        }
        let path = dir.join("np.csv");
        fs::write(&path, out)?;
        files.push(path);
    }

    Ok((files, warnings))
}

fn write_curves_csv(dir: &Path, curves: &[(&str, &CurveMatrix)]) -> Result<PathBuf> {
    let mut out = String::from("curve,n,x,value,se\n");
    for (label, curve) in curves {
        for (i, &n) in curve.n_list.iter().enumerate() {
            for (j, &x) in curve.grid.iter().enumerate() {
                let se = fmt_se(curve.std_errors.as_ref().map(|s| s[i][j]));
                let _ = writeln!(out, "{label},{n},{x},{},{se}", curve.values[i][j]);
            }
        }
    }
    let path = dir.join("curves.csv");
    fs::write(&path, out)?;
    Ok(path)
}

fn write_series_csv(dir: &Path, series: &SigmaSeries) -> Result<PathBuf> {
    let mut out = String::from("n,small_drift_sum,large_drift_sum,total_sum\n");
    for i in 0..series.total_sums.len() {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            i + 1,
            series.small_drift_sums[i],
            series.large_drift_sums[i],
            series.total_sums[i]
        );
    }
    let path = dir.join("series.csv");
    fs::write(&path, out)?;
    Ok(path)
}

fn write_growth_csv(dir: &Path, growth: &GrowthReport) -> Result<PathBuf> {
    let mut out = String::from("n,lower_quartile,median,upper_quartile\n");
    for cp in &growth.checkpoints {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            cp.n, cp.lower_quartile, cp.median, cp.upper_quartile
        );
    }
    let path = dir.join("growth.csv");
    fs::write(&path, out)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::Verdict;
    use tempfile::tempdir;

    fn write_config(dir: &Path, name: &str, json: &serde_json::Value) -> PathBuf {
        let path = dir.join(name);
        fs::write(&path, serde_json::to_vec_pretty(json).unwrap()).unwrap();
        path
    }

    #[test]
    fn tree_scenario_end_to_end() {
        let dir = tempdir().unwrap();
        let market = FiniteMarket::binomial(1.0, 1.2, 0.9, 0.6, 1).unwrap();
        market.save(dir.path().join("market.json")).unwrap();
        let cfg = write_config(
            dir.path(),
            "cfg.json",
            &serde_json::json!({
                "kind": "tree",
                "market_file": "market.json",
                "out_dir": "out"
            }),
        );
        let outcome = run_scenario(&cfg, None).unwrap();
        let log_value = outcome.report.scalars["log_value"];
        assert!((log_value - 0.14834174943487517).abs() < 1e-9);
        assert!(outcome.report.scalars["duality_gap"] <= 1e-9);
        assert!(outcome.out_dir.join("report.json").is_file());
        assert!(outcome.out_dir.join("curves.csv").is_file());
        assert!(outcome.out_dir.join("np.csv").is_file());
    }

    #[test]
    fn tree_sequence_scenario_runs_binomial_family() {
        let dir = tempdir().unwrap();
        let cfg = write_config(
            dir.path(),
            "cfg.json",
            &serde_json::json!({
                "kind": "tree-sequence",
                "binomial_family": {"u": 1.2, "d": 0.9, "p": 0.6},
                "n_list": [1, 2, 3],
                "grids": {"m_grid": [1.0, 2.0, 5.0]},
                "out_dir": "out"
            }),
        );
        let outcome = run_scenario(&cfg, None).unwrap();
        assert!(outcome.report.verdict.is_some());
        assert!(outcome.report.scalars["max_duality_gap"] <= 1e-9);
        assert!(outcome.report.scalars["worst_wealth_transfer_slack"] >= -1e-9);
        assert!(outcome.report.scalars["worst_density_transfer_slack"] >= -1e-9);
        let curves = fs::read_to_string(outcome.out_dir.join("curves.csv")).unwrap();
        assert!(curves.starts_with("curve,n,x,value,se\n"));
        assert!(curves.lines().any(|l| l.starts_with("np,3,")));
    }

    #[test]
    fn diffusion_scenario_writes_terminals_and_moments() {
        let dir = tempdir().unwrap();
        let cfg = write_config(
            dir.path(),
            "cfg.json",
            &serde_json::json!({
                "kind": "diffusion",
                "diffusion": {
                    "base": {
                        "stocks": 1, "drivers": 1, "horizon": 1.0,
                        "initial_prices": [1.0],
                        "coefficients": {"type": "constant", "mu": [1.0], "beta": [[1.0]]}
                    },
                    "horizon_scale": {"coeff": 1.0, "exponent": 1.0}
                },
                "n_list": [1, 2, 3, 4, 5, 6],
                "grids": {"m_grid": [0.5, 1.0, 2.0, 4.0]},
                "mc": {"paths": 500, "steps": 4, "seed": 7},
                "out_dir": "out"
            }),
        );
        let outcome = run_scenario(&cfg, None).unwrap();
        assert_eq!(outcome.report.verdict.as_deref(), Some("SAA"));
        assert!(outcome.report.moments.is_some());
        assert!(outcome.out_dir.join("terminals.csv").is_file());
        assert!(outcome.out_dir.join("secondary_tail.csv").is_file());
    }

    #[test]
    fn lognormal_scenario_reports_basis() {
        let dir = tempdir().unwrap();
        let cfg = write_config(
            dir.path(),
            "cfg.json",
            &serde_json::json!({
                "kind": "lognormal",
                "lognormal": {"mode": "power", "a": 1.0, "p": 1.0, "b": 1.0, "q": 0.0},
                "series_terms": 200,
                "out_dir": "out"
            }),
        );
        let outcome = run_scenario(&cfg, None).unwrap();
        assert_eq!(outcome.report.verdict.as_deref(), Some("NAA"));
        assert!(outcome.report.basis.as_deref().unwrap().contains("Lemma 4(a)"));
        assert!(outcome.report.scalars["zeta_density_worst_slack"] >= -1e-8);
        assert!(outcome.out_dir.join("series.csv").is_file());
    }

    #[test]
    fn lognormal_numeric_mode_gets_trend_only() {
        let dir = tempdir().unwrap();
        let cfg = write_config(
            dir.path(),
            "cfg.json",
            &serde_json::json!({
                "kind": "lognormal",
                "lognormal": {"mode": "numeric", "mu": [0.05, 0.02], "sigma": [0.3, 0.3]},
                "mc": {"paths": 50, "steps": 1, "seed": 3},
                "out_dir": "out"
            }),
        );
        let outcome = run_scenario(&cfg, None).unwrap();
        assert!(outcome.report.verdict.is_none());
        assert!(outcome
            .report
            .notes
            .iter()
            .any(|n| n.contains("symbolic family")));
        assert!(outcome.report.growth.is_some());
        assert!(outcome.out_dir.join("growth.csv").is_file());
    }

    #[test]
    fn empty_m_grid_is_rejected_by_name() {
        let dir = tempdir().unwrap();
        let cfg = write_config(
            dir.path(),
            "cfg.json",
            &serde_json::json!({
                "kind": "lognormal",
                "lognormal": {"mode": "power", "a": 1.0, "p": 1.0, "b": 1.0, "q": 0.0},
                "grids": {"m_grid": []}
            }),
        );
        let err = run_scenario(&cfg, None).unwrap_err();
        assert!(err.to_string().contains("m_grid"), "message: {err}");
        assert!(!err.is_numerical());
    }

    #[test]
    fn misplaced_section_is_rejected() {
        let dir = tempdir().unwrap();
        let cfg = write_config(
            dir.path(),
            "cfg.json",
            &serde_json::json!({
                "kind": "tree",
                "market_file": "m.json",
                "lognormal": {"mode": "power", "a": 1.0, "p": 1.0, "b": 1.0, "q": 0.0}
            }),
        );
        let err = run_scenario(&cfg, None).unwrap_err();
        assert!(err.to_string().contains("does not apply"), "message: {err}");
    }

    #[test]
    fn reports_are_deterministic_modulo_timestamp() {
        let dir = tempdir().unwrap();
        let cfg = write_config(
            dir.path(),
            "cfg.json",
            &serde_json::json!({
                "kind": "tree-sequence",
                "binomial_family": {"u": 1.3, "d": 0.8, "p": 0.5},
                "n_list": [1, 2],
                "grids": {"m_grid": [1.0, 3.0]}
            }),
        );
        let strip = |p: &Path| {
            let text = fs::read_to_string(p.join("report.json")).unwrap();
            let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
            v["provenance"]["timestamp"] = serde_json::json!(0);
            serde_json::to_string(&v).unwrap()
        };
        run_scenario(&cfg, Some(&dir.path().join("a"))).unwrap();
        run_scenario(&cfg, Some(&dir.path().join("b"))).unwrap();
        assert_eq!(strip(&dir.path().join("a")), strip(&dir.path().join("b")));
    }

    #[test]
    fn plotdata_empty_curves_have_headers() {
        let dir = tempdir().unwrap();
        let diag = SequenceDiagnostics {
            n_list: vec![],
            tail: CurveMatrix {
                n_list: vec![],
                grid: vec![],
                values: vec![],
                std_errors: None,
            },
            tail_label: "terminal wealth",
            secondary_tail: None,
            secondary_tail_label: None,
            hellinger: None,
            np: None,
            verdict: Verdict::Inconclusive,
            secondary_verdict: None,
            policy: VerdictPolicy::default(),
            notes: vec![],
        };
        let (files, warnings) = emit_plotdata(&diag, dir.path()).unwrap();
        assert_eq!(files.len(), 1);
        assert_eq!(fs::read_to_string(&files[0]).unwrap(), "n,m,probability,se\n");
        assert!(warnings.is_empty());
    }

    #[test]
    fn validate_summarizes_each_kind() {
        let dir = tempdir().unwrap();
        let market = FiniteMarket::binomial(1.0, 1.1, 0.95, 0.5, 2).unwrap();
        market.save(dir.path().join("market.json")).unwrap();
        let cfg = write_config(
            dir.path(),
            "cfg.json",
            &serde_json::json!({"kind": "tree", "market_file": "market.json"}),
        );
        let summary = validate_config_file(&cfg).unwrap();
        assert!(summary.contains("horizon 2"));
    }
}
