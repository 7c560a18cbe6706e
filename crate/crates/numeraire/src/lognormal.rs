//! One stock with independent log-normal period returns
//! `R_k = exp(mu_k - sigma_k^2/2 + sigma_k xi_k) - 1`, the investable
//! fraction constrained to `[0, 1]`.
//!
//! Per period the log-optimal fraction maximizes `E ln(1 + delta R_k)`; the
//! numeraire is the running product `V_n = prod (1 + delta_k^* R_k)`. For
//! power-law parameter families `mu_k = a k^{-p}`, `sigma_k = b k^{-q}` the
//! split series over the small-drift and large-drift index sets decide
//! between no asymptotic arbitrage and a strong one, and the three-branch
//! supermartingale density `zeta` certifies the no-arbitrage side.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::Estimate;
use crate::error::{Error, Result};
use crate::quadrature::{adaptive_expectation, QuadratureConfig};
use crate::rng;

/// Drift/volatility sequences, either closed-form power laws (verdicts
/// decidable) or explicit finite arrays (trend reports only).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase", deny_unknown_fields)]
pub enum LognormalParams {
    /// `mu_k = a k^{-p}`, `sigma_k = b k^{-q}`.
    Power { a: f64, p: f64, b: f64, q: f64 },
    Numeric { mu: Vec<f64>, sigma: Vec<f64> },
}

impl LognormalParams {
    pub fn validate(&self) -> Result<()> {
        match self {
            LognormalParams::Power { a, p, b, q } => {
                if !(a.is_finite() && p.is_finite() && b.is_finite() && q.is_finite()) {
                    return Err(Error::InvalidInput("power-law parameters must be finite".to_string()));
                }
                if *b <= 0.0 {
                    return Err(Error::InvalidInput(format!(
                        "volatility scale b must be positive, got {b}"
                    )));
                }
                if *p < 0.0 || *q < 0.0 {
                    return Err(Error::InvalidInput(format!(
                        "power-law exponents must be non-negative, got p = {p}, q = {q}"
                    )));
                }
                Ok(())
            }
            LognormalParams::Numeric { mu, sigma } => {
                if mu.is_empty() || mu.len() != sigma.len() {
                    return Err(Error::DimensionMismatch(format!(
                        "mu and sigma must be non-empty and equally long, got {} and {}",
                        mu.len(),
                        sigma.len()
                    )));
                }
                if mu.iter().any(|m| !m.is_finite()) {
                    return Err(Error::InvalidInput("drifts must be finite".to_string()));
                }
                for &s in sigma {
                    if !(s > 0.0 && s.is_finite()) {
                        return Err(Error::InvalidInput(format!(
                            "volatilities must be positive and finite, got {s}"
                        )));
                    }
                }
                Ok(())
            }
        }
    }

    pub fn is_symbolic(&self) -> bool {
        matches!(self, LognormalParams::Power { .. })
    }

    /// Number of defined periods; `None` for an unbounded symbolic family.
    pub fn len(&self) -> Option<usize> {
        match self {
            LognormalParams::Power { .. } => None,
            LognormalParams::Numeric { mu, .. } => Some(mu.len()),
        }
    }

    /// Drift of period `k` (1-based).
    pub fn mu(&self, k: usize) -> f64 {
        match self {
            LognormalParams::Power { a, p, .. } => a * (k as f64).powf(-p),
            LognormalParams::Numeric { mu, .. } => mu[k - 1],
        }
    }

    /// Volatility of period `k` (1-based).
    pub fn sigma(&self, k: usize) -> f64 {
        match self {
            LognormalParams::Power { b, q, .. } => b * (k as f64).powf(-q),
            LognormalParams::Numeric { sigma, .. } => sigma[k - 1],
        }
    }

    fn check_periods(&self, n: usize) -> Result<()> {
        if n == 0 {
            return Err(Error::InvalidInput("need at least one period".to_string()));
        }
        if let Some(len) = self.len() {
            if n > len {
                return Err(Error::InvalidInput(format!(
                    "family defines only {len} periods, {n} requested"
                )));
            }
        }
        Ok(())
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "volatility must be positive and finite, got {sigma}"
        )));
    }
    Ok(())
}

/// `E ln(1 + delta R)` for one period, by Gauss-Hermite quadrature over the
/// standard normal shock.
pub fn expected_log_growth(
    delta: f64,
    mu: f64,
    sigma: f64,
    quad: &QuadratureConfig,
) -> Result<f64> {
    check_sigma(sigma)?;
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::InvalidInput(format!(
            "fraction must lie in [0, 1], got {delta}"
        )));
    }
    let drift = mu - 0.5 * sigma * sigma;
    adaptive_expectation(quad, |x| {
        let gross = (drift + sigma * x).exp();
        ((1.0 - delta) + delta * gross).ln()
    })
}

/// Derivative of the growth objective, `E[R / (1 + delta R)]`.
fn growth_derivative(delta: f64, mu: f64, sigma: f64, quad: &QuadratureConfig) -> Result<f64> {
    let drift = mu - 0.5 * sigma * sigma;
    adaptive_expectation(quad, |x| {
        let r = (drift + sigma * x).exp() - 1.0;
        r / (1.0 + delta * r)
    })
}

/// Maximizer of `E ln(1 + delta R)` over `delta in [0, 1]`.
///
/// The derivative at the endpoints is closed-form: `e^mu - 1` at zero and
/// `1 - e^{sigma^2 - mu}` at one, so the boundary cases `mu <= 0` and
/// `mu >= sigma^2` return immediately. Interior solutions come from a
/// bracketed Newton iteration on the quadrature derivative and satisfy
/// `|E[R / (1 + delta R)]| <= tol`.
pub fn optimal_fraction(mu: f64, sigma: f64, tol: f64) -> Result<f64> {
    check_sigma(sigma)?;
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("tolerance must be positive, got {tol}")));
    }
    if mu <= 0.0 {
        return Ok(0.0);
    }
    if mu >= sigma * sigma {
        return Ok(1.0);
    }
    let quad = QuadratureConfig::default();
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let mut delta = (mu / (sigma * sigma)).clamp(1e-3, 1.0 - 1e-3);
    for _ in 0..100 {
        let h = growth_derivative(delta, mu, sigma, &quad)?;
        if h.abs() <= tol {
            return Ok(delta);
        }
        if h > 0.0 {
            lo = delta;
        } else {
            hi = delta;
        }
        let drift = mu - 0.5 * sigma * sigma;
        let curvature = adaptive_expectation(&quad, |x| {
            let r = (drift + sigma * x).exp() - 1.0;
            let w = r / (1.0 + delta * r);
            -w * w
        })?;
        let step = delta - h / curvature;
        delta = if step.is_finite() && step > lo && step < hi {
            step
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo < 1e-15 {
            return Ok(delta);
        }
    }
    Err(Error::NonConvergence(format!(
        "fraction search stalled for mu = {mu}, sigma = {sigma}"
    )))
}

/// Log-optimal fractions for periods `1..=n`, solved independently.
pub fn optimal_fractions(params: &LognormalParams, n: usize, tol: f64) -> Result<Vec<f64>> {
    params.validate()?;
    params.check_periods(n)?;
    (1..=n)
        .into_par_iter()
        .map(|k| optimal_fraction(params.mu(k), params.sigma(k), tol))
        .collect()
}

struct KahanSum {
    sum: f64,
    carry: f64,
}

impl KahanSum {
    fn new() -> Self {
        KahanSum { sum: 0.0, carry: 0.0 }
    }

    fn add(&mut self, x: f64) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }
}

/// Wealth path of a fraction process: `log_values[n] = ln V_n`, compensated
/// summation over the period log returns.
#[derive(Debug, Clone)]
pub struct NumerairePath {
    pub fractions: Vec<f64>,
    pub log_values: Vec<f64>,
}

impl NumerairePath {
    pub fn terminal(&self) -> f64 {
        self.log_values.last().copied().unwrap_or(0.0).exp()
    }

    pub fn terminal_log(&self) -> f64 {
        self.log_values.last().copied().unwrap_or(0.0)
    }
}

/// Runs the fraction process against one realization of the shocks. Fractions
/// in `[0, 1]` keep `1 + delta R > 0`, so every factor is valid.
pub fn numeraire_path(
    params: &LognormalParams,
    fractions: &[f64],
    shocks: &[f64],
) -> Result<NumerairePath> {
    params.validate()?;
    params.check_periods(fractions.len().max(1))?;
    if fractions.len() != shocks.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} fractions against {} shocks",
            fractions.len(),
            shocks.len()
        )));
    }
    for &d in fractions {
        if !(0.0..=1.0).contains(&d) {
            return Err(Error::InvalidInput(format!("fraction {d} outside [0, 1]")));
        }
    }
    let mut log_values = Vec::with_capacity(shocks.len() + 1);
    log_values.push(0.0);
    let mut acc = KahanSum::new();
    for (k, (&delta, &xi)) in fractions.iter().zip(shocks).enumerate() {
        let mu = params.mu(k + 1);
        let sigma = params.sigma(k + 1);
        let gross = (mu - 0.5 * sigma * sigma + sigma * xi).exp();
        acc.add(((1.0 - delta) + delta * gross).ln());
        log_values.push(acc.sum);
    }
    Ok(NumerairePath {
        fractions: fractions.to_vec(),
        log_values,
    })
}

/// Which of the three drift regimes a period falls into relative to the
/// threshold `(1 + epsilon) sigma_k^2 / 2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TermRegime {
    NonPositiveDrift,
    SmallDrift,
    LargeDrift,
}

/// Whether `sigma_k -> 0` along the small-drift index set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Condition51 {
    Holds,
    Fails,
    Undetermined,
}

/// Convergence of a series tail, decidable only for power-law families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeriesClass {
    Converges,
    Diverges,
}

/// Partial sums of the two drift series at a fixed `epsilon`:
/// `(mu_k / sigma_k)^2` over small-drift periods and `mu_k` over large-drift
/// periods, plus their sum and the per-period regime masks.
#[derive(Debug, Clone, Serialize)]
pub struct SigmaSeries {
    pub epsilon: f64,
    pub regimes: Vec<TermRegime>,
    pub small_drift_sums: Vec<f64>,
    pub large_drift_sums: Vec<f64>,
    pub total_sums: Vec<f64>,
    pub vanishing_volatility: Condition51,
    /// Tail classification in symbolic mode, `None` for numeric arrays.
    pub small_drift_class: Option<SeriesClass>,
    pub large_drift_class: Option<SeriesClass>,
}

fn classify_term(mu: f64, sigma: f64, epsilon: f64) -> TermRegime {
    if mu <= 0.0 {
        TermRegime::NonPositiveDrift
    } else if mu <= 0.5 * (1.0 + epsilon) * sigma * sigma {
        TermRegime::SmallDrift
    } else {
        TermRegime::LargeDrift
    }
}

/// Symbolic tail analysis of the power family at a fixed `epsilon`.
struct PowerSplit {
    small_class: SeriesClass,
    large_class: SeriesClass,
    condition: Condition51,
}

fn split_power_family(a: f64, p: f64, b: f64, q: f64, epsilon: f64) -> PowerSplit {
    use SeriesClass::*;
    if a <= 0.0 {
        // every drift is non-positive: both series are finite sums of nothing
        return PowerSplit {
            small_class: Converges,
            large_class: Converges,
            condition: Condition51::Holds,
        };
    }
    // mu_k > threshold_k  <=>  a k^{2q - p} > (1 + epsilon) b^2 / 2
    let threshold = 0.5 * (1.0 + epsilon) * b * b;
    let (large_infinite, small_infinite) = if p < 2.0 * q {
        (true, false)
    } else if p > 2.0 * q {
        (false, true)
    } else if a > threshold {
        (true, false)
    } else {
        (false, true)
    };
    // Sigma^2 terms are a k^{-p}; Sigma^1 terms are (a/b)^2 k^{-2(p - q)}
    let large_class = if large_infinite && p <= 1.0 { Diverges } else { Converges };
    let small_class = if small_infinite && 2.0 * (p - q) <= 1.0 {
        Diverges
    } else {
        Converges
    };
    let condition = if !small_infinite || q > 0.0 {
        Condition51::Holds
    } else {
        Condition51::Fails
    };
    PowerSplit {
        small_class,
        large_class,
        condition,
    }
}

/// Evaluates the split drift series over periods `1..=n_terms`. Partial sums
/// are plain running sums of non-negative terms, so they are non-decreasing,
/// and the total is the sum of the two parts by construction.
pub fn sigma_series(params: &LognormalParams, epsilon: f64, n_terms: usize) -> Result<SigmaSeries> {
    params.validate()?;
    params.check_periods(n_terms)?;
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let mut regimes = Vec::with_capacity(n_terms);
    let mut small = Vec::with_capacity(n_terms);
    let mut large = Vec::with_capacity(n_terms);
    let mut total = Vec::with_capacity(n_terms);
    let (mut s1, mut s2) = (0.0_f64, 0.0_f64);
    for k in 1..=n_terms {
        let mu = params.mu(k);
        let sigma = params.sigma(k);
        let regime = classify_term(mu, sigma, epsilon);
        match regime {
            TermRegime::NonPositiveDrift => {}
            TermRegime::SmallDrift => {
                let ratio = mu / sigma;
                s1 += ratio * ratio;
            }
            TermRegime::LargeDrift => s2 += mu,
        }
        regimes.push(regime);
        small.push(s1);
        large.push(s2);
        total.push(s1 + s2);
    }
    let (condition, small_class, large_class) = match params {
        LognormalParams::Power { a, p, b, q } => {
            let split = split_power_family(*a, *p, *b, *q, epsilon);
            (split.condition, Some(split.small_class), Some(split.large_class))
        }
        LognormalParams::Numeric { .. } => (Condition51::Undetermined, None, None),
    };
    Ok(SigmaSeries {
        epsilon,
        regimes,
        small_drift_sums: small,
        large_drift_sums: large,
        total_sums: total,
        vanishing_volatility: condition,
        small_drift_class: small_class,
        large_drift_class: large_class,
    })
}

/// Outcome of the series criterion for a parameter family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SeriesVerdict {
    Naa,
    Saa,
    NotApplicable,
}

impl std::fmt::Display for SeriesVerdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SeriesVerdict::Naa => "NAA",
            SeriesVerdict::Saa => "SAA",
            SeriesVerdict::NotApplicable => "NOT_APPLICABLE",
        };
        f.write_str(s)
    }
}

/// Series-criterion verdict with the rule that produced it and partial sums
/// at the witnessing `epsilon`.
#[derive(Debug, Clone, Serialize)]
pub struct Theorem9Report {
    pub verdict: SeriesVerdict,
    pub basis: String,
    pub witness_epsilon: Option<f64>,
    pub series: SigmaSeries,
}

fn epsilon_candidates(a: f64, p: f64, b: f64, q: f64) -> Vec<f64> {
    let mut eps: Vec<f64> = (1..=9).map(|i| i as f64 / 10.0).collect();
    // the regime split flips only at p = 2q, where a = (1 + eps) b^2 / 2
    if a > 0.0 && p == 2.0 * q {
        let boundary = 2.0 * a / (b * b) - 1.0;
        if boundary > 0.0 && boundary < 1.0 {
            eps.push(0.5 * boundary);
            eps.push(boundary);
            eps.push(0.5 * (boundary + 1.0));
        }
    }
    eps.sort_by(f64::total_cmp);
    eps.dedup();
    eps
}

/// Decides between no asymptotic arbitrage and a strong one for a power-law
/// family. Decision rules, in the order tried:
///
/// 1. the large-drift series diverges at some epsilon (SAA);
/// 2. volatilities vanish on an infinite small-drift set whose series
///    diverges at some epsilon in (0, 1) (SAA);
/// 3. volatilities vanish on the small-drift set at some epsilon in (0, 1):
///    the full series decides (converges: NAA, diverges: SAA);
/// 4. the full series at epsilon = 1 converges (NAA).
///
/// If no rule applies the verdict is NOT_APPLICABLE and the partial sums are
/// still reported.
pub fn theorem9_verdict(params: &LognormalParams, n_report: usize) -> Result<Theorem9Report> {
    params.validate()?;
    let (a, p, b, q) = match params {
        LognormalParams::Power { a, p, b, q } => (*a, *p, *b, *q),
        LognormalParams::Numeric { .. } => {
            return Err(Error::InvalidInput(
                "verdict requires symbolic family; use sigma_series trend report".to_string(),
            ));
        }
    };
    params.check_periods(n_report)?;
    let candidates = epsilon_candidates(a, p, b, q);

    for &eps in &candidates {
        let split = split_power_family(a, p, b, q, eps);
        if split.large_class == SeriesClass::Diverges {
            return Ok(Theorem9Report {
                verdict: SeriesVerdict::Saa,
                basis: format!(
                    "Lemma 4(b): the large-drift series diverges at epsilon = {eps}"
                ),
                witness_epsilon: Some(eps),
                series: sigma_series(params, eps, n_report)?,
            });
        }
    }
    for &eps in &candidates {
        let split = split_power_family(a, p, b, q, eps);
        if split.condition == Condition51::Holds && split.small_class == SeriesClass::Diverges {
            return Ok(Theorem9Report {
                verdict: SeriesVerdict::Saa,
                basis: format!(
                    "Lemma 4(c): volatilities vanish on the small-drift set and its \
                     series diverges at epsilon = {eps}"
                ),
                witness_epsilon: Some(eps),
                series: sigma_series(params, eps, n_report)?,
            });
        }
    }
    for &eps in &candidates {
        let split = split_power_family(a, p, b, q, eps);
        if split.condition == Condition51::Holds {
            let verdict = if split.small_class == SeriesClass::Converges
                && split.large_class == SeriesClass::Converges
            {
                SeriesVerdict::Naa
            } else {
                SeriesVerdict::Saa
            };
            return Ok(Theorem9Report {
                verdict,
                basis: format!(
                    "Theorem 9(b): volatilities vanish on the small-drift set at \
                     epsilon = {eps} and the full series {}",
                    if verdict == SeriesVerdict::Naa { "converges" } else { "diverges" }
                ),
                witness_epsilon: Some(eps),
                series: sigma_series(params, eps, n_report)?,
            });
        }
    }
    let split_at_one = split_power_family(a, p, b, q, 1.0);
    if split_at_one.small_class == SeriesClass::Converges
        && split_at_one.large_class == SeriesClass::Converges
    {
        return Ok(Theorem9Report {
            verdict: SeriesVerdict::Naa,
            basis: "Lemma 4(a): the full series at epsilon = 1 converges".to_string(),
            witness_epsilon: Some(1.0),
            series: sigma_series(params, 1.0, n_report)?,
        });
    }
    Ok(Theorem9Report {
        verdict: SeriesVerdict::NotApplicable,
        basis: "no decision rule applies; partial sums reported at epsilon = 0.5".to_string(),
        witness_epsilon: None,
        series: sigma_series(params, 0.5, n_report)?,
    })
}

/// `E zeta^alpha` for the period density, closed form with the branch picked
/// by the drift regime at epsilon = 1:
/// `1` when `mu <= 0`, `exp(-alpha(1-alpha)(mu/sigma)^2 / 2)` when
/// `0 < mu <= sigma^2`, `exp(-alpha mu + alpha(1+alpha) sigma^2 / 2)` when
/// `mu > sigma^2`.
pub fn zeta_moment(alpha: f64, mu: f64, sigma: f64) -> Result<f64> {
    check_sigma(sigma)?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput(format!(
            "alpha must lie strictly between 0 and 1, got {alpha}"
        )));
    }
    let value = if mu <= 0.0 {
        1.0
    } else if mu <= sigma * sigma {
        let ratio = mu / sigma;
        (-0.5 * alpha * (1.0 - alpha) * ratio * ratio).exp()
    } else {
        (-alpha * mu + 0.5 * alpha * (1.0 + alpha) * sigma * sigma).exp()
    };
    Ok(value)
}

/// The period density itself, used by the quadrature check below and by the
/// Monte Carlo cross-checks in tests.
pub fn zeta_density(mu: f64, sigma: f64, xi: f64) -> f64 {
    if mu <= 0.0 {
        1.0
    } else if mu <= sigma * sigma {
        let ratio = mu / sigma;
        (-ratio * xi - 0.5 * ratio * ratio).exp()
    } else {
        (-mu + 0.5 * sigma * sigma - sigma * xi).exp()
    }
}

/// Quadrature check that `zeta` prices every admissible period portfolio at
/// or below one: returns `1 - E[(1 + delta R) zeta]`, which must be
/// non-negative up to quadrature error.
pub fn zeta_density_check(
    mu: f64,
    sigma: f64,
    delta: f64,
    quad: &QuadratureConfig,
) -> Result<f64> {
    check_sigma(sigma)?;
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::InvalidInput(format!(
            "fraction must lie in [0, 1], got {delta}"
        )));
    }
    let drift = mu - 0.5 * sigma * sigma;
    let value = adaptive_expectation(quad, |x| {
        let gross = (drift + sigma * x).exp();
        ((1.0 - delta) + delta * gross) * zeta_density(mu, sigma, x)
    })?;
    Ok(1.0 - value)
}

/// Quantiles of `ln V_n` at one checkpoint.
#[derive(Debug, Clone, Serialize)]
pub struct GrowthCheckpoint {
    pub n: usize,
    pub lower_quartile: f64,
    pub median: f64,
    pub upper_quartile: f64,
}

/// Sample second moment of one period return against its closed form
/// `e^{2 mu + sigma^2} - 2 e^mu + 1`.
#[derive(Debug, Clone, Serialize)]
pub struct SquaredReturnCheck {
    pub period: usize,
    pub estimate: Estimate,
    pub exact: f64,
}

/// Monte Carlo trend of the log-optimal wealth.
#[derive(Debug, Clone, Serialize)]
pub struct GrowthReport {
    pub paths: usize,
    pub seed: u64,
    pub checkpoints: Vec<GrowthCheckpoint>,
    pub sq_return_checks: Vec<SquaredReturnCheck>,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// Simulates `n_paths` wealth paths under the per-period optimal fractions
/// and reports quartiles of `ln V_n` at power-of-two checkpoints. One path
/// per stream, merged in path order, so the report is deterministic.
pub fn monte_carlo_growth(
    params: &LognormalParams,
    n_max: usize,
    n_paths: usize,
    seed: u64,
) -> Result<GrowthReport> {
    params.validate()?;
    params.check_periods(n_max)?;
    if n_paths == 0 {
        return Err(Error::InvalidInput("need at least one path".to_string()));
    }
    let fractions = optimal_fractions(params, n_max, 1e-9)?;
    let mut checkpoints = Vec::new();
    let mut n = 1usize;
    while n < n_max {
        checkpoints.push(n);
        n *= 2;
    }
    checkpoints.push(n_max);
    let check_periods = {
        let mid = (n_max / 2).max(1);
        let mut ks = vec![1, mid, n_max];
        ks.dedup();
        ks
    };

    let per_path: Vec<(Vec<f64>, Vec<f64>)> = (0..n_paths)
        .into_par_iter()
        .map(|path| {
            let mut r = rng::stream(seed, path as u64);
            let mut acc = KahanSum::new();
            let mut at_checkpoints = Vec::with_capacity(checkpoints.len());
            let mut sq_returns = Vec::with_capacity(check_periods.len());
            let mut next_cp = 0;
            for k in 1..=n_max {
                let xi: f64 = r.sample(StandardNormal);
                let mu = params.mu(k);
                let sigma = params.sigma(k);
                let ret = (mu - 0.5 * sigma * sigma + sigma * xi).exp() - 1.0;
                if check_periods.contains(&k) {
                    sq_returns.push(ret * ret);
                }
                let delta = fractions[k - 1];
                acc.add((1.0 + delta * ret).ln());
                if next_cp < checkpoints.len() && k == checkpoints[next_cp] {
                    at_checkpoints.push(acc.sum);
                    next_cp += 1;
                }
            }
            (at_checkpoints, sq_returns)
        })
        .collect();

    let mut report_checkpoints = Vec::with_capacity(checkpoints.len());
    for (i, &n) in checkpoints.iter().enumerate() {
        let mut col: Vec<f64> = per_path.iter().map(|(cps, _)| cps[i]).collect();
        col.sort_by(f64::total_cmp);
        report_checkpoints.push(GrowthCheckpoint {
            n,
            lower_quartile: quantile(&col, 0.25),
            median: quantile(&col, 0.5),
            upper_quartile: quantile(&col, 0.75),
        });
    }
    let mut sq_checks = Vec::with_capacity(check_periods.len());
    for (i, &k) in check_periods.iter().enumerate() {
        let vals: Vec<f64> = per_path.iter().map(|(_, sq)| sq[i]).collect();
        let mean = vals.iter().sum::<f64>() / n_paths as f64;
        let se = if n_paths > 1 {
            (vals.iter().map(|&x| (x - mean).powi(2)).sum::<f64>()
                / (n_paths as f64 - 1.0)
                / n_paths as f64)
                .sqrt()
        } else {
            0.0
        };
        let mu = params.mu(k);
        let sigma = params.sigma(k);
        let exact = (2.0 * mu + sigma * sigma).exp() - 2.0 * mu.exp() + 1.0;
        sq_checks.push(SquaredReturnCheck {
            period: k,
            estimate: Estimate { value: mean, se: Some(se) },
            exact,
        });
    }
    Ok(GrowthReport {
        paths: n_paths,
        seed,
        checkpoints: report_checkpoints,
        sq_return_checks: sq_checks,
    })
}
