//! Continuous-time markets driven by an m-dimensional Brownian motion.
//!
//! Each of the `d` stocks follows `dS^i = S^i (mu_i dt + (beta_i, dW))`. The
//! market price of risk is `lambda = sigma' (sigma sigma')^{-1} mu`, and the
//! numeraire portfolio has the closed form
//! `V_t = exp(1/2 int |lambda|^2 du + int (lambda, dW))`, which this module
//! simulates with the same increments as the price paths. Tail diagnostics of
//! `int |lambda|^2 dt` decide asymptotic arbitrage for model sequences, and
//! the wealth/integral tail inequalities tie the two laws together.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::diagnostics::{
    default_alpha_grid, hellinger_curve, tail_curve, verdict, SequenceDiagnostics, TerminalLaw,
    VerdictPolicy,
};
use crate::error::{Error, Result};
use crate::rng;

/// Smallest singular value of the volatility matrix below which the model is
/// treated as degenerate.
pub const RANK_TOL: f64 = 1e-10;

/// Coefficient functions of the price SDE. Both variants are time
/// homogeneous; the power family makes drift and volatility depend on the
/// current price level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Coefficients {
    /// `mu_i(t, S) = mu[i]`, `beta_i(t, S) = beta[i]` (row i of sigma).
    Constant { mu: Vec<f64>, beta: Vec<Vec<f64>> },
    /// `mu_i(t, S) = drift[i] * S_i^drift_power`,
    /// `beta_ij(t, S) = vol[i][j] * S_i^vol_power`.
    ScalarPowerFamily {
        drift: Vec<f64>,
        drift_power: f64,
        vol: Vec<Vec<f64>>,
        vol_power: f64,
    },
}

impl Coefficients {
    pub fn is_constant(&self) -> bool {
        matches!(self, Coefficients::Constant { .. })
    }

    fn rows(&self) -> (&[f64], &[Vec<f64>]) {
        match self {
            Coefficients::Constant { mu, beta } => (mu, beta),
            Coefficients::ScalarPowerFamily { drift, vol, .. } => (drift, vol),
        }
    }

    fn drift_into(&self, s: &[f64], out: &mut DVector<f64>) {
        match self {
            Coefficients::Constant { mu, .. } => {
                for (i, &v) in mu.iter().enumerate() {
                    out[i] = v;
                }
            }
            Coefficients::ScalarPowerFamily {
                drift, drift_power, ..
            } => {
                for (i, &v) in drift.iter().enumerate() {
                    out[i] = v * s[i].powf(*drift_power);
                }
            }
        }
    }

    fn vol_into(&self, s: &[f64], out: &mut DMatrix<f64>) {
        match self {
            Coefficients::Constant { beta, .. } => {
                for (i, row) in beta.iter().enumerate() {
                    for (j, &v) in row.iter().enumerate() {
                        out[(i, j)] = v;
                    }
                }
            }
            Coefficients::ScalarPowerFamily { vol, vol_power, .. } => {
                for (i, row) in vol.iter().enumerate() {
                    let scale = s[i].powf(*vol_power);
                    for (j, &v) in row.iter().enumerate() {
                        out[(i, j)] = v * scale;
                    }
                }
            }
        }
    }

    fn scale_drift(&mut self, factor: f64) {
        match self {
            Coefficients::Constant { mu, .. } => {
                for v in mu.iter_mut() {
                    *v *= factor;
                }
            }
            Coefficients::ScalarPowerFamily { drift, .. } => {
                for v in drift.iter_mut() {
                    *v *= factor;
                }
            }
        }
    }
}

/// A d-stock, m-driver diffusion model on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiffusionModelSpec {
    pub stocks: usize,
    pub drivers: usize,
    pub horizon: f64,
    pub initial_prices: Vec<f64>,
    pub coefficients: Coefficients,
}

impl DiffusionModelSpec {
    /// Checks dimensions, positivity of the initial prices, and that the
    /// volatility matrix has full rank `d` at the initial state.
    pub fn validate(&self) -> Result<()> {
        if self.stocks == 0 {
            return Err(Error::InvalidInput("stock count must be positive".to_string()));
        }
        if self.drivers < self.stocks {
            return Err(Error::InvalidInput(format!(
                "need at least as many drivers as stocks, got {} < {}",
                self.drivers, self.stocks
            )));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "horizon must be positive and finite, got {}",
                self.horizon
            )));
        }
        if self.initial_prices.len() != self.stocks {
            return Err(Error::DimensionMismatch(format!(
                "expected {} initial prices, got {}",
                self.stocks,
                self.initial_prices.len()
            )));
        }
        for &p in &self.initial_prices {
            if !(p > 0.0 && p.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "initial prices must be positive and finite, got {p}"
                )));
            }
        }
        let (drift, vol) = self.coefficients.rows();
        if drift.len() != self.stocks || vol.len() != self.stocks {
            return Err(Error::DimensionMismatch(format!(
                "coefficient rows must match the stock count {}",
                self.stocks
            )));
        }
        for (i, row) in vol.iter().enumerate() {
            if row.len() != self.drivers {
                return Err(Error::DimensionMismatch(format!(
                    "volatility row {i} has {} entries, expected {}",
                    row.len(),
                    self.drivers
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!("volatility row {i} is not finite")));
            }
        }
        if drift.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("drift coefficients must be finite".to_string()));
        }
        let mut sigma = DMatrix::zeros(self.stocks, self.drivers);
        self.coefficients.vol_into(&self.initial_prices, &mut sigma);
        let mut mu = DVector::zeros(self.stocks);
        self.coefficients.drift_into(&self.initial_prices, &mut mu);
        market_price_of_risk(&sigma, &mu)?;
        Ok(())
    }
}

/// Solves `lambda = sigma' (sigma sigma')^{-1} mu` through a symmetric
/// factorization of the Gram matrix; no inverse is formed. Fails when the
/// smallest singular value of `sigma` is at or below [`RANK_TOL`].
pub fn market_price_of_risk(sigma: &DMatrix<f64>, mu: &DVector<f64>) -> Result<DVector<f64>> {
    let d = sigma.nrows();
    let m = sigma.ncols();
    if mu.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "drift has {} entries but sigma has {d} rows",
            mu.len()
        )));
    }
    if m < d {
        return Err(Error::InvalidInput(format!(
            "sigma must have at least as many columns as rows, got {d}x{m}"
        )));
    }
    let gram = sigma * sigma.transpose();
    let eigen = gram.symmetric_eigen();
    let min_eig = eigen.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let smallest_singular = min_eig.max(0.0).sqrt();
    if smallest_singular <= RANK_TOL {
        return Err(Error::RankDeficient(smallest_singular));
    }
    // y = Q diag(1/eig) Q' mu, lambda = sigma' y
    let mut coeffs = eigen.eigenvectors.transpose() * mu;
    for (c, eig) in coeffs.iter_mut().zip(eigen.eigenvalues.iter()) {
        *c /= eig;
    }
    let y = &eigen.eigenvectors * coeffs;
    let lambda = sigma.transpose() * &y;
    let residual = (sigma * &lambda - mu).norm();
    if residual > 1e-10 * mu.norm().max(1e-300) {
        return Err(Error::NonConvergence(format!(
            "market price of risk residual {residual:.3e} exceeds tolerance"
        )));
    }
    Ok(lambda)
}

/// Full record of a single simulated path. Vectors are flat and row-major:
/// `increments` and `risk_price` hold `steps x drivers` entries, `prices`
/// holds `(steps + 1) x stocks`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    pub stream: u64,
    pub stocks: usize,
    pub drivers: usize,
    pub increments: Vec<f64>,
    pub prices: Vec<f64>,
    pub risk_price: Vec<f64>,
    pub running_integral: Vec<f64>,
    pub value: Vec<f64>,
}

impl PathRecord {
    pub fn steps(&self) -> usize {
        self.running_integral.len() - 1
    }

    pub fn prices_at(&self, k: usize) -> &[f64] {
        &self.prices[k * self.stocks..(k + 1) * self.stocks]
    }

    pub fn increments_at(&self, k: usize) -> &[f64] {
        &self.increments[k * self.drivers..(k + 1) * self.drivers]
    }

    /// Market price of risk evaluated at the state used for step `k`.
    pub fn risk_price_at(&self, k: usize) -> &[f64] {
        &self.risk_price[k * self.drivers..(k + 1) * self.drivers]
    }
}

/// Simulation output: terminal quantities for every surviving path plus full
/// records for a prefix of the paths. Terminal prices are row-major
/// `paths x stocks`.
#[derive(Debug, Clone)]
pub struct PathBundle {
    pub stocks: usize,
    pub drivers: usize,
    pub horizon: f64,
    pub dt: f64,
    pub steps: usize,
    pub seed: u64,
    pub excluded: usize,
    pub terminal_value: Vec<f64>,
    pub terminal_log_value: Vec<f64>,
    pub terminal_integral: Vec<f64>,
    pub terminal_prices: Vec<f64>,
    pub recorded: Vec<PathRecord>,
}

impl PathBundle {
    pub fn paths(&self) -> usize {
        self.terminal_value.len()
    }

    pub fn value_law(&self, index: usize) -> Result<TerminalLaw> {
        TerminalLaw::from_sample(index, self.terminal_value.clone())
    }

    pub fn integral_law(&self, index: usize) -> Result<TerminalLaw> {
        TerminalLaw::from_sample(index, self.terminal_integral.clone())
    }

    pub fn moments(&self) -> MomentsSummary {
        let k = self.paths();
        let kf = k as f64;
        let mean = |xs: &[f64]| xs.iter().sum::<f64>() / kf;
        let mean_log = mean(&self.terminal_log_value);
        let var_log = if k > 1 {
            self.terminal_log_value
                .iter()
                .map(|&x| (x - mean_log).powi(2))
                .sum::<f64>()
                / (kf - 1.0)
        } else {
            0.0
        };
        let inv: Vec<f64> = self.terminal_value.iter().map(|&v| 1.0 / v).collect();
        let mean_inv = mean(&inv);
        let se_inv = if k > 1 {
            (inv.iter().map(|&x| (x - mean_inv).powi(2)).sum::<f64>() / (kf - 1.0) / kf).sqrt()
        } else {
            0.0
        };
        let mut mean_price = vec![0.0; self.stocks];
        for row in self.terminal_prices.chunks(self.stocks) {
            for (acc, &p) in mean_price.iter_mut().zip(row) {
                *acc += p;
            }
        }
        for p in mean_price.iter_mut() {
            *p /= kf;
        }
        MomentsSummary {
            paths: k,
            excluded: self.excluded,
            mean_value: mean(&self.terminal_value),
            mean_log_value: mean_log,
            var_log_value: var_log,
            mean_inverse_value: mean_inv,
            se_inverse_value: se_inv,
            mean_integral: mean(&self.terminal_integral),
            mean_terminal_price: mean_price,
        }
    }

    /// Per-path terminal quantities in CSV form:
    /// `path,value,log_value,integral,price_1,...`.
    pub fn write_terminals_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "path,value,log_value,integral")?;
        for i in 0..self.stocks {
            write!(w, ",price_{}", i + 1)?;
        }
        writeln!(w)?;
        for p in 0..self.paths() {
            write!(
                w,
                "{p},{},{},{}",
                self.terminal_value[p], self.terminal_log_value[p], self.terminal_integral[p]
            )?;
            for &s in &self.terminal_prices[p * self.stocks..(p + 1) * self.stocks] {
                write!(w, ",{s}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Sample moments of the terminal quantities, serialized alongside the
/// terminals CSV.
#[derive(Debug, Clone, Serialize)]
pub struct MomentsSummary {
    pub paths: usize,
    pub excluded: usize,
    pub mean_value: f64,
    pub mean_log_value: f64,
    pub var_log_value: f64,
    pub mean_inverse_value: f64,
    pub se_inverse_value: f64,
    pub mean_integral: f64,
    pub mean_terminal_price: Vec<f64>,
}

/// Monte Carlo budget shared by the diffusion and lognormal runners.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    pub paths: usize,
    pub steps: usize,
    pub seed: u64,
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        if self.paths == 0 || self.steps == 0 {
            return Err(Error::InvalidInput(
                "mc paths and steps must be positive".to_string(),
            ));
        }
        Ok(())
    }
}

struct PathTerminals {
    value: f64,
    log_value: f64,
    integral: f64,
    prices: Vec<f64>,
}

/// Advances one path from the given flat `steps x drivers` increment matrix.
/// The log-Euler step on `ln S` is exact for constant coefficients, and `V`
/// uses the closed-form exponential with the same increments.
fn run_path_impl(
    spec: &DiffusionModelSpec,
    dt: f64,
    increments: &[f64],
    record: bool,
) -> Result<(PathTerminals, Option<PathRecord>)> {
    let d = spec.stocks;
    let m = spec.drivers;
    if increments.len() % m != 0 {
        return Err(Error::DimensionMismatch(format!(
            "increment length {} is not a multiple of the driver count {m}",
            increments.len()
        )));
    }
    let steps = increments.len() / m;
    let mut log_s: Vec<f64> = spec.initial_prices.iter().map(|p| p.ln()).collect();
    let mut s = spec.initial_prices.clone();
    let mut log_v = 0.0_f64;
    let mut integral = 0.0_f64;

    let mut sigma = DMatrix::zeros(d, m);
    let mut mu = DVector::zeros(d);
    let constant = spec.coefficients.is_constant();
    let mut lambda = if constant {
        spec.coefficients.vol_into(&s, &mut sigma);
        spec.coefficients.drift_into(&s, &mut mu);
        market_price_of_risk(&sigma, &mu)?
    } else {
        DVector::zeros(m)
    };

    let mut rec = record.then(|| PathRecord {
        stream: 0,
        stocks: d,
        drivers: m,
        increments: increments.to_vec(),
        prices: Vec::with_capacity((steps + 1) * d),
        risk_price: Vec::with_capacity(steps * m),
        running_integral: Vec::with_capacity(steps + 1),
        value: Vec::with_capacity(steps + 1),
    });
    if let Some(r) = rec.as_mut() {
        r.prices.extend_from_slice(&s);
        r.running_integral.push(0.0);
        r.value.push(1.0);
    }

    for k in 0..steps {
        if !constant {
            spec.coefficients.vol_into(&s, &mut sigma);
            spec.coefficients.drift_into(&s, &mut mu);
            lambda = market_price_of_risk(&sigma, &mu)?;
        }
        let dw = &increments[k * m..(k + 1) * m];
        let lambda_sq = lambda.iter().map(|x| x * x).sum::<f64>();
        let lambda_dw = lambda.iter().zip(dw).map(|(l, w)| l * w).sum::<f64>();

        for i in 0..d {
            let beta_sq = (0..m).map(|j| sigma[(i, j)] * sigma[(i, j)]).sum::<f64>();
            let beta_dw = (0..m).map(|j| sigma[(i, j)] * dw[j]).sum::<f64>();
            log_s[i] += (mu[i] - 0.5 * beta_sq) * dt + beta_dw;
            s[i] = log_s[i].exp();
        }
        integral += lambda_sq * dt;
        log_v += 0.5 * lambda_sq * dt + lambda_dw;

        if let Some(r) = rec.as_mut() {
            r.risk_price.extend(lambda.iter().cloned());
            r.prices.extend_from_slice(&s);
            r.running_integral.push(integral);
            r.value.push(log_v.exp());
        }
    }

    Ok((
        PathTerminals {
            value: log_v.exp(),
            log_value: log_v,
            integral,
            prices: s,
        },
        rec,
    ))
}

/// Runs one path with full recording; increments are flat `steps x drivers`.
pub fn run_path(spec: &DiffusionModelSpec, dt: f64, increments: &[f64]) -> Result<PathRecord> {
    let (_, rec) = run_path_impl(spec, dt, increments, true)?;
    Ok(rec.expect("recording was requested"))
}

fn draw_increments(spec: &DiffusionModelSpec, steps: usize, seed: u64, path: u64) -> Vec<f64> {
    let mut r = rng::stream(seed, path);
    let sqrt_dt = (spec.horizon / steps as f64).sqrt();
    (0..steps * spec.drivers)
        .map(|_| {
            let z: f64 = r.sample(StandardNormal);
            z * sqrt_dt
        })
        .collect()
}

/// Simulates `n_paths` independent paths, recording the first few in full.
/// Deterministic for a given seed regardless of thread count: every path has
/// its own counter-derived stream and results merge in path order. Paths
/// whose volatility matrix loses rank mid-path are excluded and counted.
pub fn simulate(
    spec: &DiffusionModelSpec,
    steps: usize,
    n_paths: usize,
    seed: u64,
) -> Result<PathBundle> {
    simulate_recorded(spec, steps, n_paths, seed, n_paths.min(4))
}

/// Same as [`simulate`] with an explicit number of fully recorded paths.
pub fn simulate_recorded(
    spec: &DiffusionModelSpec,
    steps: usize,
    n_paths: usize,
    seed: u64,
    recorded: usize,
) -> Result<PathBundle> {
    spec.validate()?;
    if steps == 0 || n_paths == 0 {
        return Err(Error::InvalidInput("steps and path count must be positive".to_string()));
    }
    let dt = spec.horizon / steps as f64;

    let results: Vec<Result<Option<(PathTerminals, Option<PathRecord>)>>> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let increments = draw_increments(spec, steps, seed, p as u64);
            match run_path_impl(spec, dt, &increments, p < recorded) {
                Ok((term, rec)) => Ok(Some((
                    term,
                    rec.map(|mut r| {
                        r.stream = p as u64;
                        r
                    }),
                ))),
                Err(Error::RankDeficient(_)) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect();

    let mut bundle = PathBundle {
        stocks: spec.stocks,
        drivers: spec.drivers,
        horizon: spec.horizon,
        dt,
        steps,
        seed,
        excluded: 0,
        terminal_value: Vec::with_capacity(n_paths),
        terminal_log_value: Vec::with_capacity(n_paths),
        terminal_integral: Vec::with_capacity(n_paths),
        terminal_prices: Vec::with_capacity(n_paths * spec.stocks),
        recorded: Vec::new(),
    };
    for res in results {
        match res? {
            Some((term, rec)) => {
                bundle.terminal_value.push(term.value);
                bundle.terminal_log_value.push(term.log_value);
                bundle.terminal_integral.push(term.integral);
                bundle.terminal_prices.extend_from_slice(&term.prices);
                if let Some(r) = rec {
                    bundle.recorded.push(r);
                }
            }
            None => bundle.excluded += 1,
        }
    }
    if bundle.terminal_value.is_empty() {
        return Err(Error::NonConvergence(
            "every simulated path lost volatility rank".to_string(),
        ));
    }
    Ok(bundle)
}

/// Power scaling `coeff * n^exponent` applied to a model parameter along a
/// sequence index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingRule {
    pub coeff: f64,
    pub exponent: f64,
}

impl ScalingRule {
    pub fn identity() -> Self {
        ScalingRule { coeff: 1.0, exponent: 0.0 }
    }

    pub fn at(&self, n: usize) -> f64 {
        self.coeff * (n as f64).powf(self.exponent)
    }
}

/// A sequence of diffusion models indexed by `n`: a base model with the drift
/// and the horizon rescaled per index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiffusionFamily {
    pub base: DiffusionModelSpec,
    #[serde(default = "ScalingRule::identity")]
    pub drift_scale: ScalingRule,
    #[serde(default = "ScalingRule::identity")]
    pub horizon_scale: ScalingRule,
}

impl DiffusionFamily {
    pub fn instantiate(&self, n: usize) -> Result<DiffusionModelSpec> {
        if n == 0 {
            return Err(Error::InvalidInput("sequence index starts at 1".to_string()));
        }
        let mut spec = self.base.clone();
        spec.coefficients.scale_drift(self.drift_scale.at(n));
        spec.horizon *= self.horizon_scale.at(n);
        spec.validate()?;
        Ok(spec)
    }
}

/// Simulates the family along `n_list` and applies the tail criterion: the
/// verdict comes from the tails of `int |lambda|^2 dt` (vanishing tails mean
/// no asymptotic arbitrage, tails pinned at one mean a strong one). Tails and
/// negative moments of `V_T` are reported alongside as a cross-check, since
/// both tail families share their double limits.
pub fn theorem8_diagnostic(
    family: &DiffusionFamily,
    n_list: &[usize],
    m_grid: &[f64],
    mc: &McConfig,
    policy: &VerdictPolicy,
) -> Result<SequenceDiagnostics> {
    mc.validate()?;
    policy.validate()?;
    if n_list.is_empty() {
        return Err(Error::InvalidInput("n_list must not be empty".to_string()));
    }
    let mut notes = Vec::new();
    let mut integral_laws = Vec::with_capacity(n_list.len());
    let mut value_laws = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let spec = family.instantiate(n)?;
        let bundle = simulate(&spec, mc.steps, mc.paths, rng::derive(mc.seed, n as u64))?;
        if bundle.excluded > 0 {
            notes.push(format!(
                "index {n}: {} of {} paths excluded after volatility rank loss",
                bundle.excluded, mc.paths
            ));
        }
        integral_laws.push(bundle.integral_law(n)?);
        value_laws.push(bundle.value_law(n)?);
    }

    let integral_tail = tail_curve(&integral_laws, m_grid)?;
    let value_tail = tail_curve(&value_laws, m_grid)?;
    let value_hellinger = hellinger_curve(&value_laws, &default_alpha_grid())?;

    let primary = verdict(&integral_tail, None, policy)?;
    let secondary = verdict(&value_tail, Some(&value_hellinger), policy)?;
    if primary == secondary {
        notes.push(format!(
            "risk integral and wealth tails agree on {primary} over the sampled prefix"
        ));
    } else {
        notes.push(format!(
            "risk integral says {primary} but wealth tails say {secondary}; the two tail \
             families share limits only as n, M go to infinity, so a finite prefix can lag"
        ));
    }

    Ok(SequenceDiagnostics {
        n_list: n_list.to_vec(),
        tail: integral_tail,
        tail_label: "risk integral",
        secondary_tail: Some(value_tail),
        secondary_tail_label: Some("terminal wealth"),
        hellinger: Some(value_hellinger),
        np: None,
        verdict: primary,
        secondary_verdict: Some(secondary),
        policy: policy.clone(),
        notes,
    })
}

/// One empirical tail bound: `lhs <= bound` up to Monte Carlo error, with the
/// slack estimated as a single per-path mean so its standard error is exact.
#[derive(Debug, Clone, Serialize)]
pub struct BoundCheck {
    pub lhs: f64,
    pub bound: f64,
    pub slack: f64,
    pub se: f64,
}

impl BoundCheck {
    fn from_samples(values: impl Iterator<Item = (f64, f64, f64)>, k: usize) -> BoundCheck {
        let mut lhs_sum = 0.0;
        let mut bound_sum = 0.0;
        let mut slacks = Vec::with_capacity(k);
        for (lhs, bound, slack) in values {
            lhs_sum += lhs;
            bound_sum += bound;
            slacks.push(slack);
        }
        let kf = k as f64;
        let mean = slacks.iter().sum::<f64>() / kf;
        let se = if k > 1 {
            (slacks.iter().map(|&x| (x - mean).powi(2)).sum::<f64>() / (kf - 1.0) / kf).sqrt()
        } else {
            0.0
        };
        BoundCheck {
            lhs: lhs_sum / kf,
            bound: bound_sum / kf,
            slack: mean,
            se,
        }
    }

    pub fn passes(&self) -> bool {
        self.slack >= -3.0 * self.se
    }
}

/// Both tail inequalities linking the laws of `V_T` and `int |lambda|^2 dt`
/// on a simulated bundle.
#[derive(Debug, Clone, Serialize)]
pub struct TailCouplingReport {
    pub alpha: f64,
    pub m: f64,
    pub n: f64,
    /// `P(V_T >= M) <= e^N / M + P(int >= N)`.
    pub wealth_tail: BoundCheck,
    /// `P(int >= M) <= N^alpha e^{-alpha(1-alpha)M/2} + P(V_T >= N)`.
    pub integral_tail: BoundCheck,
}

impl TailCouplingReport {
    pub fn passes(&self) -> bool {
        self.wealth_tail.passes() && self.integral_tail.passes()
    }
}

/// Evaluates both sides of the two tail inequalities on the bundle's paths.
pub fn verify_lemma3_inequalities(
    bundle: &PathBundle,
    alpha: f64,
    m: f64,
    n: f64,
) -> Result<TailCouplingReport> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput(format!(
            "alpha must lie strictly between 0 and 1, got {alpha}"
        )));
    }
    if !(m > 0.0 && n > 0.0) {
        return Err(Error::InvalidInput(format!(
            "thresholds must be positive, got M = {m}, N = {n}"
        )));
    }
    let k = bundle.paths();
    let wealth_const = n.exp() / m;
    let wealth = BoundCheck::from_samples(
        bundle
            .terminal_value
            .iter()
            .zip(&bundle.terminal_integral)
            .map(|(&v, &i)| {
                let lhs = f64::from(v >= m);
                let bound = wealth_const + f64::from(i >= n);
                (lhs, bound, bound - lhs)
            }),
        k,
    );
    let integral_const = n.powf(alpha) * (-0.5 * alpha * (1.0 - alpha) * m).exp();
    let integral = BoundCheck::from_samples(
        bundle
            .terminal_value
            .iter()
            .zip(&bundle.terminal_integral)
            .map(|(&v, &i)| {
                let lhs = f64::from(i >= m);
                let bound = integral_const + f64::from(v >= n);
                (lhs, bound, bound - lhs)
            }),
        k,
    );
    Ok(TailCouplingReport {
        alpha,
        m,
        n,
        wealth_tail: wealth,
        integral_tail: integral,
    })
}
