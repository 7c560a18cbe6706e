//! Distribution-level diagnostics for market sequences.
//!
//! Everything here works on terminal laws only: the law of the numeraire
//! value `V_T`, of a wealth `X_T`, of a density `Z_T`, either exact (atoms of
//! a finite tree) or empirical (Monte Carlo sample). The central objects are
//!
//! - tail curves `m -> P(X >= m)` and moment curves `alpha -> E X^{-alpha}`
//!   across a sequence of models,
//! - the Neyman-Pearson power profile `delta -> max{ E_p(test) : E_q(test) <= delta }`
//!   of a pair of measures,
//! - quantitative tail inequalities linking the two (with sub-unit-mean
//!   preconditions), and
//! - a verdict rule mapping curve behaviour to `NAA` (wealth relative to the
//!   numeraire stays tight: no asymptotic arbitrage), `SAA` (the numeraire
//!   value explodes in probability: arbitrage can be manufactured in the
//!   limit), or `INCONCLUSIVE`.
//!
//! The verdict rule follows the limsup/liminf convention: a trailing window
//! of the sequence stands in for `n -> infinity`, so an oscillating sequence
//! that keeps returning to exploding behaviour is classified `SAA`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::SubProbabilityMeasure;

/// Point estimate with an optional standard error (present for sample laws,
/// absent when the value is exact).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub se: Option<f64>,
}

#[derive(Debug, Clone)]
enum LawRepr {
    /// `(value, probability)` atoms; probabilities sum to one.
    Atoms(Vec<(f64, f64)>),
    /// Equally weighted draws.
    Sample(Vec<f64>),
}

/// Law of one non-negative terminal quantity, tagged with its position in a
/// model sequence.
#[derive(Debug, Clone)]
pub struct TerminalLaw {
    pub index: usize,
    repr: LawRepr,
}

impl TerminalLaw {
    pub fn from_atoms(index: usize, atoms: Vec<(f64, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidInput("empty law".to_string()));
        }
        let mut mass = 0.0;
        for &(v, p) in &atoms {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "law values must be non-negative and finite, got {v}"
                )));
            }
            if !p.is_finite() || p <= 0.0 {
                return Err(Error::InvalidInput(format!(
                    "atom probabilities must be strictly positive, got {p}"
                )));
            }
            mass += p;
        }
        if (mass - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "atom probabilities sum to {mass}, expected 1"
            )));
        }
        Ok(TerminalLaw {
            index,
            repr: LawRepr::Atoms(atoms),
        })
    }

    pub fn from_sample(index: usize, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("empty law".to_string()));
        }
        for &v in &values {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "law values must be non-negative and finite, got {v}"
                )));
            }
        }
        Ok(TerminalLaw {
            index,
            repr: LawRepr::Sample(values),
        })
    }

    pub fn len(&self) -> usize {
        match &self.repr {
            LawRepr::Atoms(a) => a.len(),
            LawRepr::Sample(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_sample(&self) -> bool {
        matches!(self.repr, LawRepr::Sample(_))
    }

    /// Mean of `f(X)`; exact for atom laws, sample mean with standard error
    /// for empirical laws. `f` may return infinity (e.g. negative moments of
    /// a law touching zero), which propagates honestly.
    pub fn mean_of(&self, mut f: impl FnMut(f64) -> f64) -> Estimate {
        match &self.repr {
            LawRepr::Atoms(atoms) => Estimate {
                value: atoms.iter().map(|&(v, p)| p * f(v)).sum(),
                se: None,
            },
            LawRepr::Sample(values) => {
                let n = values.len() as f64;
                let ys: Vec<f64> = values.iter().map(|&v| f(v)).collect();
                let mean = ys.iter().sum::<f64>() / n;
                let var = ys.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>()
                    / (n - 1.0).max(1.0);
                Estimate {
                    value: mean,
                    se: Some((var / n).sqrt()),
                }
            }
        }
    }

    /// `P(X >= m)`.
    pub fn tail(&self, m: f64) -> Estimate {
        self.mean_of(|v| if v >= m { 1.0 } else { 0.0 })
    }

    /// `P(X < m)`.
    pub fn cdf_strict(&self, m: f64) -> Estimate {
        self.mean_of(|v| if v < m { 1.0 } else { 0.0 })
    }

    /// `E X^{-alpha}`.
    pub fn neg_moment(&self, alpha: f64) -> Estimate {
        self.mean_of(|v| v.powf(-alpha))
    }
}

/// Mean of `f(xi, eta)` over a paired pair of laws (same atoms or same draw
/// count). Returns `None` when the laws cannot be paired.
fn paired_mean(
    xi: &TerminalLaw,
    eta: &TerminalLaw,
    mut f: impl FnMut(f64, f64) -> f64,
) -> Option<Estimate> {
    match (&xi.repr, &eta.repr) {
        (LawRepr::Atoms(a), LawRepr::Atoms(b)) => {
            if a.len() != b.len() {
                return None;
            }
            if a.iter().zip(b).any(|(x, y)| (x.1 - y.1).abs() > 1e-12) {
                return None;
            }
            Some(Estimate {
                value: a.iter().zip(b).map(|(x, y)| x.1 * f(x.0, y.0)).sum(),
                se: None,
            })
        }
        (LawRepr::Sample(a), LawRepr::Sample(b)) => {
            if a.len() != b.len() {
                return None;
            }
            let n = a.len() as f64;
            let ys: Vec<f64> = a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect();
            let mean = ys.iter().sum::<f64>() / n;
            let var =
                ys.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / (n - 1.0).max(1.0);
            Some(Estimate {
                value: mean,
                se: Some((var / n).sqrt()),
            })
        }
        _ => None,
    }
}

/// One curve family evaluated for every model in a sequence: `values[i][j]`
/// is the curve of model `n_list[i]` at `grid[j]`.
#[derive(Debug, Clone)]
pub struct CurveMatrix {
    pub n_list: Vec<usize>,
    pub grid: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    /// Per-cell standard errors; `None` when every law is exact.
    pub std_errors: Option<Vec<Vec<f64>>>,
}

fn check_grid(grid: &[f64], name: &str, positive: bool, below_one: bool) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidInput(format!("{name} must not be empty")));
    }
    for &g in grid {
        if !g.is_finite() || (positive && g <= 0.0) || (below_one && g >= 1.0) {
            return Err(Error::InvalidInput(format!("{name} entry {g} out of range")));
        }
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput(format!("{name} must be strictly increasing")));
    }
    Ok(())
}

fn curve(laws: &[TerminalLaw], grid: &[f64], f: impl Fn(&TerminalLaw, f64) -> Estimate) -> CurveMatrix {
    let mut values = Vec::with_capacity(laws.len());
    let mut errors = Vec::with_capacity(laws.len());
    let mut any_sample = false;
    for law in laws {
        let mut row = Vec::with_capacity(grid.len());
        let mut row_se = Vec::with_capacity(grid.len());
        for &g in grid {
            let est = f(law, g);
            row.push(est.value);
            row_se.push(est.se.unwrap_or(0.0));
            any_sample |= est.se.is_some();
        }
        values.push(row);
        errors.push(row_se);
    }
    CurveMatrix {
        n_list: laws.iter().map(|l| l.index).collect(),
        grid: grid.to_vec(),
        values,
        std_errors: any_sample.then_some(errors),
    }
}

/// Tail curves `P(X_n >= m)` over a grid of thresholds.
pub fn tail_curve(laws: &[TerminalLaw], m_grid: &[f64]) -> Result<CurveMatrix> {
    if laws.is_empty() {
        return Err(Error::InvalidInput("tail curve needs at least one law".to_string()));
    }
    check_grid(m_grid, "m_grid", true, false)?;
    Ok(curve(laws, m_grid, |law, m| law.tail(m)))
}

/// Negative-moment curves `E X_n^{-alpha}` over a grid of orders in `(0, 1)`.
///
/// For the numeraire value `V_T` these are the Hellinger-type integrals of
/// the associated density `1/V_T`: `E (1/V_T)^alpha = E V_T^{-alpha}`.
pub fn hellinger_curve(laws: &[TerminalLaw], alpha_grid: &[f64]) -> Result<CurveMatrix> {
    if laws.is_empty() {
        return Err(Error::InvalidInput("moment curve needs at least one law".to_string()));
    }
    check_grid(alpha_grid, "alpha_grid", true, true)?;
    Ok(curve(laws, alpha_grid, |law, a| law.neg_moment(a)))
}

/// Maximal power of a randomized test of `q` against `p` at significance
/// levels `delta_grid`: `max { E_p(phi) : E_q(phi) <= delta, 0 <= phi <= 1 }`.
///
/// Solved exactly by the Neyman-Pearson lemma: sort atoms by likelihood
/// ratio `p/q` (atoms with `q = 0` first, they cost nothing), accept greedily
/// and split the boundary atom fractionally.
pub fn np_profile(
    p: &SubProbabilityMeasure,
    q: &SubProbabilityMeasure,
    delta_grid: &[f64],
) -> Result<Vec<f64>> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch(format!(
            "test between measures with {} and {} atoms",
            p.len(),
            q.len()
        )));
    }
    if !p.is_probability(1e-9) {
        return Err(Error::InvalidInput(format!(
            "first measure must be a probability, mass {}",
            p.mass()
        )));
    }
    for &d in delta_grid {
        if !d.is_finite() || d < 0.0 {
            return Err(Error::InvalidInput(format!("significance level {d} out of range")));
        }
    }
    let mut order: Vec<usize> = (0..p.len()).collect();
    let ratio = |i: usize| -> f64 {
        if q.weight(i) == 0.0 {
            f64::INFINITY
        } else {
            p.weight(i) / q.weight(i)
        }
    };
    order.sort_by(|&a, &b| ratio(b).total_cmp(&ratio(a)));
    // Prefix sums of (p, q) in decreasing likelihood-ratio order.
    let mut cum_p = Vec::with_capacity(order.len() + 1);
    let mut cum_q = Vec::with_capacity(order.len() + 1);
    cum_p.push(0.0);
    cum_q.push(0.0);
    for &i in &order {
        cum_p.push(cum_p.last().unwrap() + p.weight(i));
        cum_q.push(cum_q.last().unwrap() + q.weight(i));
    }
    let power = |delta: f64| -> f64 {
        // Largest prefix fully affordable at level delta.
        let mut k = 0;
        while k < order.len() && cum_q[k + 1] <= delta + 1e-15 {
            k += 1;
        }
        let mut value = cum_p[k];
        if k < order.len() {
            let i = order[k];
            if q.weight(i) > 0.0 {
                let fraction = ((delta - cum_q[k]) / q.weight(i)).clamp(0.0, 1.0);
                value += fraction * p.weight(i);
            }
        }
        value.min(1.0)
    };
    Ok(delta_grid.iter().map(|&d| power(d)).collect())
}

/// Slack of one tail inequality; negative slack is a violation. `None` with
/// a notice when a precondition fails (the inequality is then not asserted).
#[derive(Debug, Clone, Default)]
pub struct InequalitySlack {
    pub slack: Option<f64>,
    pub se: Option<f64>,
    pub notice: Option<String>,
}

impl InequalitySlack {
    fn from_estimate(est: Estimate) -> Self {
        InequalitySlack {
            slack: Some(est.value),
            se: est.se,
            notice: None,
        }
    }

    fn skipped(reason: impl Into<String>) -> Self {
        InequalitySlack {
            slack: None,
            se: None,
            notice: Some(reason.into()),
        }
    }
}

/// Quantitative tail bounds for positive variables.
#[derive(Debug, Clone)]
pub struct TailBoundReport {
    /// `M^alpha E xi^{-alpha} - P(xi < M) >= 0`; holds for any positive `xi`.
    pub lower_tail: InequalitySlack,
    /// `(1/M)^alpha + (1/N)^{1-alpha} + N^alpha P(xi < M) - E xi^{-alpha} >= 0`;
    /// requires `E(1/xi) <= 1`.
    pub moment_split: InequalitySlack,
    /// `N/M + P(eta >= N) - P(xi >= M) >= 0`; requires `E(xi/eta) <= 1` and a
    /// paired pair of laws.
    pub tail_transfer: InequalitySlack,
}

/// Evaluates the three tail bounds at `(alpha, m, n)`.
///
/// The slacks are computed as a single mean over the (joint) law, so sample
/// standard errors are exact rather than union bounds. Preconditions checked
/// with tolerance `1e-12`: failing ones skip the bound with a notice instead
/// of asserting something unproven.
pub fn tail_bound_check(
    xi: &TerminalLaw,
    eta: Option<&TerminalLaw>,
    alpha: f64,
    m: f64,
    n: f64,
) -> Result<TailBoundReport> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if !(m > 0.0) || !(n > 0.0) {
        return Err(Error::InvalidInput(format!("thresholds must be positive, got M={m}, N={n}")));
    }

    let lower_tail = InequalitySlack::from_estimate(xi.mean_of(|v| {
        m.powf(alpha) * v.powf(-alpha) - if v < m { 1.0 } else { 0.0 }
    }));

    let inv_mean = xi.mean_of(|v| 1.0 / v);
    let moment_split = if inv_mean.value <= 1.0 + 1e-12 {
        InequalitySlack::from_estimate(xi.mean_of(|v| {
            m.powf(-alpha)
                + n.powf(alpha - 1.0)
                + n.powf(alpha) * if v < m { 1.0 } else { 0.0 }
                - v.powf(-alpha)
        }))
    } else {
        InequalitySlack::skipped(format!(
            "moment split skipped: E(1/xi) = {} exceeds 1",
            inv_mean.value
        ))
    };

    let tail_transfer = match eta {
        None => InequalitySlack::skipped("tail transfer skipped: no second law"),
        Some(eta) => match paired_mean(xi, eta, |x, y| x / y) {
            None => InequalitySlack::skipped(
                "tail transfer skipped: laws are not paired (same kind and length required)",
            ),
            Some(ratio_mean) if ratio_mean.value > 1.0 + 1e-12 => InequalitySlack::skipped(
                format!("tail transfer skipped: E(xi/eta) = {} exceeds 1", ratio_mean.value),
            ),
            Some(_) => {
                let est = paired_mean(xi, eta, |x, y| {
                    n / m + if y >= n { 1.0 } else { 0.0 } - if x >= m { 1.0 } else { 0.0 }
                })
                .expect("pairing already verified");
                InequalitySlack::from_estimate(est)
            }
        },
    };

    Ok(TailBoundReport {
        lower_tail,
        moment_split,
        tail_transfer,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Naa,
    Saa,
    Inconclusive,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Verdict::Naa => write!(f, "NAA"),
            Verdict::Saa => write!(f, "SAA"),
            Verdict::Inconclusive => write!(f, "INCONCLUSIVE"),
        }
    }
}

/// Thresholds and windowing of the verdict rule.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerdictPolicy {
    /// Tightness threshold: tails at the largest threshold must stay below
    /// this for `NAA`, and moments at the smallest order above `1 - eps1`.
    pub eps1: f64,
    /// Explosion threshold: tails above `1 - eps2` at every threshold (or a
    /// moment below `eps2`) mean `SAA`.
    pub eps2: f64,
    /// Fraction of the sequence (from the end) standing in for the limit.
    pub window_fraction: f64,
}

impl Default for VerdictPolicy {
    fn default() -> Self {
        VerdictPolicy {
            eps1: 0.05,
            eps2: 0.05,
            window_fraction: 1.0 / 3.0,
        }
    }
}

impl VerdictPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps1 > 0.0 && self.eps1 < 1.0) || !(self.eps2 > 0.0 && self.eps2 < 1.0) {
            return Err(Error::InvalidInput(format!(
                "policy thresholds must lie in (0, 1): eps1={}, eps2={}",
                self.eps1, self.eps2
            )));
        }
        if !(self.window_fraction > 0.0 && self.window_fraction <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "window_fraction must lie in (0, 1], got {}",
                self.window_fraction
            )));
        }
        Ok(())
    }

    /// Index of the first row inside the trailing window.
    pub fn window_start(&self, rows: usize) -> usize {
        let w = ((rows as f64) * self.window_fraction).ceil() as usize;
        rows - w.clamp(1, rows)
    }
}

/// Default threshold grid: nine log-spaced points on `[1, 1e4]`.
pub fn default_m_grid() -> Vec<f64> {
    (0..9).map(|i| 10f64.powf(i as f64 * 0.5)).collect()
}

/// Default moment orders, ascending.
pub fn default_alpha_grid() -> Vec<f64> {
    vec![0.01, 0.05, 0.1, 0.25, 0.5]
}

/// Default significance levels for power profiles.
pub fn default_delta_grid() -> Vec<f64> {
    (0..=20).map(|i| i as f64 / 20.0).collect()
}

fn window_extreme(curve: &CurveMatrix, col: usize, start: usize, max: bool) -> f64 {
    let vals = curve.values[start..].iter().map(|row| row[col]);
    if max {
        vals.fold(f64::NEG_INFINITY, f64::max)
    } else {
        vals.fold(f64::INFINITY, f64::min)
    }
}

/// Applies the verdict rule to a tail curve of the numeraire value and an
/// optional moment curve.
///
/// Over the trailing window: `NAA` needs tails at the largest threshold to
/// stay at or below `eps1` (tightness) and, when moments are available, the
/// smallest-order moment to stay at or above `1 - eps1`. `SAA` needs tails
/// above `1 - eps2` at every threshold (explosion in probability) or some
/// moment at or below `eps2`. Conflicting or insufficient evidence is
/// `INCONCLUSIVE`.
pub fn verdict(
    tail: &CurveMatrix,
    hellinger: Option<&CurveMatrix>,
    policy: &VerdictPolicy,
) -> Result<Verdict> {
    policy.validate()?;
    if tail.values.is_empty() || tail.grid.is_empty() {
        return Err(Error::InvalidInput("verdict needs a non-empty tail curve".to_string()));
    }
    let start = policy.window_start(tail.values.len());
    let last_col = tail.grid.len() - 1;

    let mut naa = window_extreme(tail, last_col, start, true) <= policy.eps1;
    let mut saa = (0..tail.grid.len())
        .all(|col| window_extreme(tail, col, start, true) >= 1.0 - policy.eps2);

    if let Some(h) = hellinger {
        if h.values.len() != tail.values.len() {
            return Err(Error::DimensionMismatch(
                "tail and moment curves cover different sequences".to_string(),
            ));
        }
        let h_start = policy.window_start(h.values.len());
        naa = naa && window_extreme(h, 0, h_start, false) >= 1.0 - policy.eps1;
        saa = saa
            || (0..h.grid.len())
                .any(|col| window_extreme(h, col, h_start, false) <= policy.eps2);
    }

    Ok(match (naa, saa) {
        (true, false) => Verdict::Naa,
        (false, true) => Verdict::Saa,
        // Both firing means the two curve families disagree.
        _ => Verdict::Inconclusive,
    })
}

/// Finite-sequence surrogate of the limit identities tying moments to tails.
#[derive(Debug, Clone)]
pub struct CorollaryReport {
    /// Windowed minimum of `E V^{-alpha_min}`.
    pub moment_side: f64,
    /// Windowed minimum of `P(V < M_max)`.
    pub tail_side: f64,
    /// `|moment_side - tail_side|`, compared against `eps1`.
    pub agreement: f64,
    pub within_policy: bool,
    /// Worst slack of `N/M + P(V >= N) - P(X >= M)` per `(M, N)` pair,
    /// minimized over the window (requires `E(X_T/V_T) <= 1`, the numeraire
    /// property).
    pub wealth_tail_slacks: Vec<(f64, f64, f64)>,
    /// Worst slack of `N/M + P(1/Z >= N) - P(V >= M)` per `(M, N)` pair
    /// (requires `E(V_T Z_T) <= 1`, the supermartingale-density property).
    pub density_tail_slacks: Vec<(f64, f64, f64)>,
    pub notes: Vec<String>,
}

/// Checks the finite-`n` consequences of numeraire duality on a sequence of
/// laws.
///
/// `v_laws` are the numeraire values `V_T` per model. Optional `x_laws`
/// (wealths with `E(X_T/V_T) <= 1`) and `inv_z_laws` (inverse densities with
/// `E(V_T Z_T) <= 1`) must be paired with `v_laws` model by model; the tail
/// transfer bound is evaluated for every ordered grid pair `N < M`.
pub fn corollary_checks(
    v_laws: &[TerminalLaw],
    alpha_grid: &[f64],
    m_grid: &[f64],
    policy: &VerdictPolicy,
    x_laws: Option<&[TerminalLaw]>,
    inv_z_laws: Option<&[TerminalLaw]>,
) -> Result<CorollaryReport> {
    policy.validate()?;
    let tail = tail_curve(v_laws, m_grid)?;
    let hell = hellinger_curve(v_laws, alpha_grid)?;
    let start = policy.window_start(v_laws.len());
    let moment_side = window_extreme(&hell, 0, start, false);
    let last_col = m_grid.len() - 1;
    let tail_side = 1.0 - window_extreme(&tail, last_col, start, true);
    let agreement = (moment_side - tail_side).abs();

    let mut notes = Vec::new();
    let mut transfer = |laws: Option<&[TerminalLaw]>,
                        xi_of: &dyn Fn(usize) -> TerminalLaw,
                        eta_of: &dyn Fn(usize) -> TerminalLaw,
                        label: &str|
     -> Result<Vec<(f64, f64, f64)>> {
        let mut slacks = Vec::new();
        if laws.is_none() {
            return Ok(slacks);
        }
        for (j, &m) in m_grid.iter().enumerate() {
            for &n in &m_grid[..j] {
                let mut worst = f64::INFINITY;
                for row in start..v_laws.len() {
                    let report = tail_bound_check(&xi_of(row), Some(&eta_of(row)), 0.5, m, n)?;
                    match report.tail_transfer.slack {
                        Some(s) => worst = worst.min(s),
                        None => {
                            if let Some(msg) = report.tail_transfer.notice {
                                notes.push(format!("{label}: {msg}"));
                            }
                        }
                    }
                }
                if worst < f64::INFINITY {
                    slacks.push((m, n, worst));
                }
            }
        }
        Ok(slacks)
    };

    let wealth_tail_slacks = match x_laws {
        Some(xs) => {
            if xs.len() != v_laws.len() {
                return Err(Error::DimensionMismatch(
                    "wealth laws and numeraire laws cover different sequences".to_string(),
                ));
            }
            transfer(
                x_laws,
                &|row| xs[row].clone(),
                &|row| v_laws[row].clone(),
                "wealth tails",
            )?
        }
        None => Vec::new(),
    };
    let density_tail_slacks = match inv_z_laws {
        Some(zs) => {
            if zs.len() != v_laws.len() {
                return Err(Error::DimensionMismatch(
                    "density laws and numeraire laws cover different sequences".to_string(),
                ));
            }
            transfer(
                inv_z_laws,
                &|row| v_laws[row].clone(),
                &|row| zs[row].clone(),
                "density tails",
            )?
        }
        None => Vec::new(),
    };

    Ok(CorollaryReport {
        moment_side,
        tail_side,
        agreement,
        within_policy: agreement <= policy.eps1,
        wealth_tail_slacks,
        density_tail_slacks,
        notes,
    })
}

/// Bundle of everything the diagnostics produce for one model sequence.
#[derive(Debug, Clone)]
pub struct SequenceDiagnostics {
    pub n_list: Vec<usize>,
    /// Primary tail curve (what the verdict is based on).
    pub tail: CurveMatrix,
    pub tail_label: &'static str,
    /// Second tail family, when a model exposes one (e.g. terminal wealth
    /// next to integrated risk premia).
    pub secondary_tail: Option<CurveMatrix>,
    pub secondary_tail_label: Option<&'static str>,
    pub hellinger: Option<CurveMatrix>,
    pub np: Option<CurveMatrix>,
    pub verdict: Verdict,
    pub secondary_verdict: Option<Verdict>,
    pub policy: VerdictPolicy,
    pub notes: Vec<String>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn np_profile_binomial_pair() {
        let p = SubProbabilityMeasure::from_weights(vec![0.6, 0.4]).unwrap();
        let q = SubProbabilityMeasure::from_weights(vec![1.0 / 3.0, 2.0 / 3.0]).unwrap();
        let power = np_profile(&p, &q, &[0.0, 0.2, 1.0 / 3.0, 0.5, 1.0]).unwrap();
        assert_relative_eq!(power[0], 0.0, epsilon = 1e-12);
        // First atom has likelihood ratio 1.8: spend all of delta on it.
        assert_relative_eq!(power[1], 0.6 * 0.2 / (1.0 / 3.0), epsilon = 1e-12);
        assert_relative_eq!(power[2], 0.6, epsilon = 1e-12);
        assert_relative_eq!(power[3], 0.6 + (0.5 - 1.0 / 3.0) / (2.0 / 3.0) * 0.4, epsilon = 1e-12);
        assert_relative_eq!(power[4], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn np_profile_disjoint_supports_has_full_power_at_zero() {
        let p = SubProbabilityMeasure::from_weights(vec![1.0, 0.0]).unwrap();
        let q = SubProbabilityMeasure::from_weights(vec![0.0, 1.0]).unwrap();
        let power = np_profile(&p, &q, &[0.0, 0.5]).unwrap();
        assert_eq!(power, vec![1.0, 1.0]);
    }

    #[test]
    fn tail_bounds_hold_on_exact_laws() {
        // xi with E(1/xi) = 1 exactly.
        let xi = TerminalLaw::from_atoms(1, vec![(1.8, 0.6), (0.6, 0.4)]).unwrap();
        let eta = xi.clone();
        let report = tail_bound_check(&xi, Some(&eta), 0.5, 2.0, 1.5).unwrap();
        assert!(report.lower_tail.slack.unwrap() >= 0.0);
        assert!(report.moment_split.slack.unwrap() >= 0.0);
        assert!(report.tail_transfer.slack.unwrap() >= 0.0);

        // Violated precondition is skipped with a notice, not asserted.
        let heavy = TerminalLaw::from_atoms(1, vec![(0.1, 0.5), (0.2, 0.5)]).unwrap();
        let report = tail_bound_check(&heavy, None, 0.5, 2.0, 1.5).unwrap();
        assert!(report.moment_split.slack.is_none());
        assert!(report.moment_split.notice.unwrap().contains("exceeds 1"));
    }

    #[test]
    fn tail_bound_rejects_bad_parameters() {
        let xi = TerminalLaw::from_atoms(0, vec![(1.0, 1.0)]).unwrap();
        assert!(tail_bound_check(&xi, None, 1.2, 1.0, 1.0).is_err());
        assert!(tail_bound_check(&xi, None, 0.5, -1.0, 1.0).is_err());
    }

    #[test]
    fn law_of_zero_value_gives_infinite_moment() {
        let law = TerminalLaw::from_atoms(0, vec![(0.0, 0.5), (2.0, 0.5)]).unwrap();
        assert!(law.neg_moment(0.5).value.is_infinite());
        assert_relative_eq!(law.tail(1.0).value, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn verdict_tight_sequence_is_naa() {
        let laws: Vec<TerminalLaw> = (1..=9)
            .map(|n| TerminalLaw::from_atoms(n, vec![(1.0 + 1.0 / n as f64, 1.0)]).unwrap())
            .collect();
        let tail = tail_curve(&laws, &default_m_grid()).unwrap();
        let hell = hellinger_curve(&laws, &default_alpha_grid()).unwrap();
        let v = verdict(&tail, Some(&hell), &VerdictPolicy::default()).unwrap();
        assert_eq!(v, Verdict::Naa);
    }

    #[test]
    fn verdict_exploding_sequence_is_saa() {
        let laws: Vec<TerminalLaw> = (1..=24)
            .map(|n| TerminalLaw::from_atoms(n, vec![((n as f64).exp(), 1.0)]).unwrap())
            .collect();
        let tail = tail_curve(&laws, &default_m_grid()).unwrap();
        let hell = hellinger_curve(&laws, &default_alpha_grid()).unwrap();
        let v = verdict(&tail, Some(&hell), &VerdictPolicy::default()).unwrap();
        assert_eq!(v, Verdict::Saa);
    }

    #[test]
    fn verdict_oscillating_sequence_follows_limsup_convention() {
        // Tight for even n, exploding for odd n: the trailing window keeps
        // seeing explosions, so the sequence is classified SAA.
        let laws: Vec<TerminalLaw> = (1..=24)
            .map(|n| {
                let v = if n % 2 == 0 { 1.0 } else { (n as f64).exp() };
                TerminalLaw::from_atoms(n, vec![(v, 1.0)]).unwrap()
            })
            .collect();
        let tail = tail_curve(&laws, &default_m_grid()).unwrap();
        let v = verdict(&tail, None, &VerdictPolicy::default()).unwrap();
        assert_eq!(v, Verdict::Saa);
        // And it is *not* NAA under tails alone either.
        let hell = hellinger_curve(&laws, &default_alpha_grid()).unwrap();
        let v2 = verdict(&tail, Some(&hell), &VerdictPolicy::default()).unwrap();
        assert_eq!(v2, Verdict::Saa);
    }

    #[test]
    fn verdict_middling_sequence_is_inconclusive() {
        // Half the mass escapes beyond the largest threshold, half stays put:
        // neither tight nor exploding at the default thresholds.
        let laws: Vec<TerminalLaw> = (1..=9)
            .map(|n| TerminalLaw::from_atoms(n, vec![(2e4, 0.5), (0.5, 0.5)]).unwrap())
            .collect();
        let tail = tail_curve(&laws, &default_m_grid()).unwrap();
        let v = verdict(&tail, None, &VerdictPolicy::default()).unwrap();
        assert_eq!(v, Verdict::Inconclusive);
    }

    #[test]
    fn verdict_bounded_sequence_is_naa_by_tightness() {
        let laws: Vec<TerminalLaw> = (1..=9)
            .map(|n| TerminalLaw::from_atoms(n, vec![(50.0, 0.5), (0.5, 0.5)]).unwrap())
            .collect();
        let tail = tail_curve(&laws, &default_m_grid()).unwrap();
        let v = verdict(&tail, None, &VerdictPolicy::default()).unwrap();
        assert_eq!(v, Verdict::Naa);
    }

    #[test]
    fn corollary_checks_with_wealth_equal_to_numeraire() {
        let laws: Vec<TerminalLaw> = (1..=6)
            .map(|n| TerminalLaw::from_atoms(n, vec![(1.8, 0.6), (0.6, 0.4)]).unwrap())
            .collect();
        let report = corollary_checks(
            &laws,
            &default_alpha_grid(),
            &default_m_grid(),
            &VerdictPolicy::default(),
            Some(&laws),
            Some(&laws),
        )
        .unwrap();
        // X = V and N < M force N/M + P(V>=N) - P(V>=M) >= N/M > 0.
        for &(_, _, slack) in &report.wealth_tail_slacks {
            assert!(slack >= 0.0);
        }
        assert!(!report.wealth_tail_slacks.is_empty());
        assert!(report.within_policy, "agreement = {}", report.agreement);
    }

    #[test]
    fn curves_reject_bad_grids() {
        let law = TerminalLaw::from_atoms(0, vec![(1.0, 1.0)]).unwrap();
        assert!(tail_curve(&[law.clone()], &[]).is_err());
        assert!(tail_curve(&[law.clone()], &[2.0, 1.0]).is_err());
        assert!(tail_curve(&[law.clone()], &[0.0, 1.0]).is_err());
        assert!(hellinger_curve(&[law.clone()], &[0.5, 1.5]).is_err());
        assert!(hellinger_curve(&[law], &[0.2, 0.2]).is_err());
    }

    #[test]
    fn sample_law_reports_standard_errors() {
        let law = TerminalLaw::from_sample(3, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let est = law.tail(2.5);
        assert_relative_eq!(est.value, 0.5, epsilon = 1e-15);
        assert!(est.se.unwrap() > 0.0);
        let curve = tail_curve(&[law], &[2.5]).unwrap();
        assert!(curve.std_errors.is_some());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        /// Power profiles are within [0,1], non-decreasing and concave in delta.
        #[test]
        fn np_profile_is_monotone_and_concave(
            raw_p in proptest::collection::vec(0.01f64..1.0, 2..8),
            raw_q in proptest::collection::vec(0.0f64..1.0, 2..8),
        ) {
            let k = raw_p.len().min(raw_q.len());
            let sp: f64 = raw_p[..k].iter().sum();
            let p = SubProbabilityMeasure::from_weights_tol(
                raw_p[..k].iter().map(|x| x / sp).collect(), 1e-9).unwrap();
            let sq: f64 = raw_q[..k].iter().sum::<f64>().max(1.0);
            let q = SubProbabilityMeasure::from_weights_tol(
                raw_q[..k].iter().map(|x| x / sq).collect(), 1e-9).unwrap();
            let grid: Vec<f64> = (0..=40).map(|i| i as f64 / 40.0).collect();
            let power = np_profile(&p, &q, &grid).unwrap();
            for w in power.windows(2) {
                prop_assert!(w[1] >= w[0] - 1e-12);
            }
            for w in power.windows(3) {
                // Concavity: increments shrink.
                prop_assert!(w[1] - w[0] >= w[2] - w[1] - 1e-9);
            }
            for &v in &power {
                prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
            }
        }
    }
}
