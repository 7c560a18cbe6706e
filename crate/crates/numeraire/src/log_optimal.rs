//! Log-optimal (numeraire) portfolios on finite event trees.
//!
//! On a finite tree the growth-optimal problem decomposes into independent
//! one-period problems: at each internal node choose fractions-of-wealth
//! `phi` maximizing
//!
//! ```text
//!   g(phi) = sum_c p_c ln(1 + (phi, dS_c)),
//! ```
//!
//! where `dS_c` are the price increments to the children. The resulting
//! wealth `V` with `V_0 = 1` is the numeraire portfolio: `X/V` is a
//! supermartingale for every admissible `X`, and first-order optimality makes
//! `q_c = p_c / (1 + (phi, dS_c))` a one-step martingale measure, so the leaf
//! measure `Qhat = P/V_T` is a martingale measure for the whole market.
//!
//! `Qhat` also solves the dual problem: it minimizes the reverse relative
//! entropy `H(P|q) = E_P ln(dP/dq)` over martingale measures, and the
//! minimal value equals `E ln V_T` with zero duality gap.
//!
//! Martingale measures themselves are found exactly: the one-step measures at
//! a node form a polytope `{q >= 0, sum q = 1, sum q_c dS_c = 0}`, whose
//! vertices are enumerated by support (supports of size at most `d+1` with an
//! invertible constraint block). The average of all vertices is strictly
//! positive precisely when the polytope contains a strictly positive point,
//! i.e. when the node admits no one-step arbitrage.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::error::{Error, Result};
use crate::market::{
    is_supermartingale, FiniteMarket, Strategy, SubProbabilityMeasure, ValueProcess,
};
use crate::rng;

/// Wealth factors are kept at or above this floor during the line search.
const RETURN_FLOOR: f64 = 1e-10;

/// Vertex entries within this tolerance of zero are treated as zero when
/// testing strict positivity of the averaged martingale measure.
const VERTEX_TOL: f64 = 1e-12;

const MAX_NEWTON_ITER: usize = 200;

struct NodeProblem {
    probs: Vec<f64>,
    deltas: Vec<DVector<f64>>,
}

fn node_problem(market: &FiniteMarket, node: usize) -> NodeProblem {
    let tree = market.tree();
    let children = &tree.node(node).children;
    NodeProblem {
        probs: children.iter().map(|&c| tree.node(c).branch_prob).collect(),
        deltas: children
            .iter()
            .map(|&c| DVector::from_vec(market.delta_price(node, c)))
            .collect(),
    }
}

/// Enumerates the vertices of `{q >= 0, sum q = 1, sum q_c dS_c = 0}`.
fn one_step_vertices(deltas: &[DVector<f64>], dim: usize) -> Vec<Vec<f64>> {
    let k = deltas.len();
    let rows = dim + 1;
    let mut rhs = DVector::zeros(rows);
    rhs[0] = 1.0;
    let mut vertices: Vec<Vec<f64>> = Vec::new();
    let max_support = rows.min(k);
    let mut support = Vec::new();
    enumerate_supports(k, max_support, &mut support, &mut |supp: &[usize]| {
        let cols = supp.len();
        let mut a = DMatrix::zeros(rows, cols);
        for (j, &c) in supp.iter().enumerate() {
            a[(0, j)] = 1.0;
            for i in 0..dim {
                a[(i + 1, j)] = deltas[c][i];
            }
        }
        let svd = a.clone().svd(true, true);
        let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
        let rank = svd
            .singular_values
            .iter()
            .filter(|&&s| s > 1e-12 * smax.max(1.0))
            .count();
        if rank < cols {
            // Non-unique solution on this support; its vertices appear under
            // smaller supports.
            return;
        }
        let x = match svd.solve(&rhs, 1e-12) {
            Ok(x) => x,
            Err(_) => return,
        };
        let residual = (&a * &x - &rhs).norm();
        if residual > 1e-10 {
            return;
        }
        if x.iter().any(|&v| v < -1e-10) {
            return;
        }
        let mut q = vec![0.0; k];
        for (j, &c) in supp.iter().enumerate() {
            q[c] = x[j].max(0.0);
        }
        let duplicate = vertices.iter().any(|v| {
            v.iter()
                .zip(&q)
                .all(|(a, b)| (a - b).abs() <= 1e-9)
        });
        if !duplicate {
            vertices.push(q);
        }
    });
    vertices
}

fn enumerate_supports(
    k: usize,
    max_size: usize,
    current: &mut Vec<usize>,
    visit: &mut impl FnMut(&[usize]),
) {
    fn rec(
        start: usize,
        k: usize,
        max_size: usize,
        current: &mut Vec<usize>,
        visit: &mut impl FnMut(&[usize]),
    ) {
        if !current.is_empty() {
            visit(current);
        }
        if current.len() == max_size {
            return;
        }
        for i in start..k {
            current.push(i);
            rec(i + 1, k, max_size, current, visit);
            current.pop();
        }
    }
    rec(0, k, max_size, current, visit);
}

/// Average of the vertices of a node's one-step martingale polytope, or
/// `None` when no strictly positive one-step measure exists.
fn one_step_measure(deltas: &[DVector<f64>], dim: usize) -> Option<Vec<f64>> {
    let vertices = one_step_vertices(deltas, dim);
    if vertices.is_empty() {
        return None;
    }
    let k = deltas.len();
    let mut avg = vec![0.0; k];
    for v in &vertices {
        for i in 0..k {
            avg[i] += v[i];
        }
    }
    let total: f64 = avg.iter().sum();
    for a in avg.iter_mut() {
        *a /= total;
    }
    if avg.iter().any(|&a| a <= VERTEX_TOL) {
        return None;
    }
    Some(avg)
}

/// Finds an equivalent martingale measure, assembled from the averaged
/// vertex measures of every one-step polytope, or `None` when some node
/// admits one-step arbitrage (no strictly positive measure exists).
pub fn find_martingale_measure(market: &FiniteMarket) -> Option<SubProbabilityMeasure> {
    let tree = market.tree();
    let mut cond: Vec<Vec<f64>> = vec![Vec::new(); tree.len()];
    for node in tree.internal_nodes() {
        let problem = node_problem(market, node);
        cond[node] = one_step_measure(&problem.deltas, market.dim())?;
    }
    let mut path = vec![0.0; tree.len()];
    path[tree.root()] = 1.0;
    for node in tree.internal_nodes() {
        for (j, &c) in tree.node(node).children.iter().enumerate() {
            path[c] = path[node] * cond[node][j];
        }
    }
    let weights: Vec<f64> = tree.leaves().iter().map(|&l| path[l]).collect();
    SubProbabilityMeasure::from_weights_tol(weights, 1e-9).ok()
}

/// Solves one node's concave problem by damped Newton with backtracking.
/// Returns the optimal fractions and the final gradient norm.
///
/// A step is accepted on sufficient objective increase (Armijo) or, once the
/// objective change falls below float resolution, on a strict decrease of the
/// gradient norm; the second rule lets the iteration polish to near machine
/// precision where line searches on the objective stall.
fn newton_node(problem: &NodeProblem, dim: usize, tol: f64) -> Result<(DVector<f64>, f64)> {
    let target = (tol * 1e-2).max(5e-16);
    let returns = |phi: &DVector<f64>| -> Vec<f64> {
        problem.deltas.iter().map(|d| 1.0 + phi.dot(d)).collect()
    };
    let objective = |r: &[f64]| -> f64 {
        problem
            .probs
            .iter()
            .zip(r)
            .map(|(&p, &ri)| p * ri.ln())
            .sum()
    };
    let derivatives = |r: &[f64]| -> (DVector<f64>, DMatrix<f64>) {
        let mut grad = DVector::zeros(dim);
        let mut hess = DMatrix::zeros(dim, dim);
        for ((&p, d), &ri) in problem.probs.iter().zip(&problem.deltas).zip(r) {
            grad.axpy(p / ri, d, 1.0);
            hess.ger(p / (ri * ri), d, d, 1.0);
        }
        (grad, hess)
    };

    let mut phi = DVector::zeros(dim);
    let r = returns(&phi);
    let mut g = objective(&r);
    let (mut grad, mut hess) = derivatives(&r);
    let mut grad_norm = grad.norm();
    for _ in 0..MAX_NEWTON_ITER {
        if grad_norm <= target {
            return Ok((phi, grad_norm));
        }
        // Pseudo-inverse Newton step: on degenerate branches the Hessian is
        // singular and the minimum-norm step keeps the iterate in the span of
        // the price increments, so the limit is the minimum-norm optimum.
        let mut step = {
            let svd = hess.clone().svd(true, true);
            let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
            svd.solve(&grad, 1e-12 * smax.max(f64::MIN_POSITIVE))
                .unwrap_or_else(|_| grad.clone())
        };
        let mut slope = grad.dot(&step);
        if slope <= 0.0 {
            step = grad.clone();
            slope = grad.dot(&step);
        }
        let mut t = 1.0;
        let mut advanced = false;
        while t >= 1e-14 {
            let cand = &phi + &step * t;
            let rc = returns(&cand);
            if rc.iter().all(|&x| x >= RETURN_FLOOR) {
                let gc = objective(&rc);
                let (grad_c, hess_c) = derivatives(&rc);
                let gn_c = grad_c.norm();
                if gc >= g + 1e-4 * t * slope || gn_c < grad_norm {
                    phi = cand;
                    g = gc;
                    grad = grad_c;
                    hess = hess_c;
                    grad_norm = gn_c;
                    advanced = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !advanced {
            break;
        }
    }
    if grad_norm <= tol {
        Ok((phi, grad_norm))
    } else {
        Err(Error::NonConvergence(format!(
            "one-step growth problem stalled at gradient norm {grad_norm:.3e} \
             (tolerance {tol:.1e}); the market is at or near arbitrage"
        )))
    }
}

/// The numeraire portfolio and its dual objects.
#[derive(Debug, Clone)]
pub struct NumeraireSolution {
    /// Security units held at every internal node.
    pub strategy: Strategy,
    /// Fractions-of-wealth representation of the same strategy.
    pub fractions: Vec<Vec<f64>>,
    /// Wealth process with `V_0 = 1`; strictly positive.
    pub value: ValueProcess,
    /// `E ln V_T`.
    pub log_value: f64,
    /// Leaf measure with weights `P(leaf)/V_T(leaf)`; mass one up to solver
    /// tolerance.
    pub qhat: SubProbabilityMeasure,
    /// `H(P | Qhat)`, computed independently of `log_value`.
    pub dual_value: f64,
    /// `|log_value - dual_value|`.
    pub gap: f64,
    /// Worst final gradient norm across nodes.
    pub grad_norm: f64,
}

/// Computes the numeraire portfolio of a finite market.
///
/// `tol` bounds the accepted first-order error of each one-step problem (the
/// solver internally pushes two orders of magnitude further when it can).
/// Markets admitting arbitrage are rejected up front.
pub fn solve_log_optimal(market: &FiniteMarket, tol: f64) -> Result<NumeraireSolution> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("tolerance must be positive, got {tol}")));
    }
    if find_martingale_measure(market).is_none() {
        return Err(Error::Arbitrage(
            "no strictly positive one-step martingale measure exists; \
             the log-optimal problem is unbounded"
                .to_string(),
        ));
    }
    let tree = market.tree();
    let dim = market.dim();
    let mut fractions: Vec<Vec<f64>> = vec![Vec::new(); tree.len()];
    let mut grad_norm = 0.0f64;
    for node in tree.internal_nodes() {
        let problem = node_problem(market, node);
        let (phi, gn) = newton_node(&problem, dim, tol)?;
        grad_norm = grad_norm.max(gn);
        fractions[node] = phi.iter().copied().collect();
    }

    let mut values = vec![0.0; tree.len()];
    values[tree.root()] = 1.0;
    for node in tree.internal_nodes() {
        for &c in &tree.node(node).children {
            let ds = market.delta_price(node, c);
            let growth: f64 = fractions[node].iter().zip(&ds).map(|(f, d)| f * d).sum();
            values[c] = values[node] * (1.0 + growth);
        }
    }
    let holdings: Vec<Vec<f64>> = (0..tree.len())
        .map(|node| fractions[node].iter().map(|f| f * values[node]).collect())
        .collect();
    let min_value = values.iter().copied().fold(f64::INFINITY, f64::min);
    let value = ValueProcess {
        initial: 1.0,
        values: values.clone(),
        min_value,
        nonnegative: true,
    };

    let terminal = market.terminal_values(&values);
    let log_value = market.expectation(|pos| terminal[pos].ln());
    let xi: Vec<f64> = terminal.iter().map(|v| 1.0 / v).collect();
    let weights: Vec<f64> = tree
        .leaf_probs()
        .iter()
        .zip(&xi)
        .map(|(&p, &x)| p * x)
        .collect();
    let qhat = SubProbabilityMeasure::from_weights_tol(weights, 1e-9).map_err(|_| {
        Error::NonConvergence(format!(
            "candidate martingale measure has mass {:.12} beyond tolerance; \
             one-step problems did not reach sufficient accuracy",
            tree.leaf_probs().iter().zip(&xi).map(|(&p, &x)| p * x).sum::<f64>()
        ))
    })?;
    let dual_value = reverse_entropy(&market.measure(), &qhat)?;
    let gap = (log_value - dual_value).abs();
    Ok(NumeraireSolution {
        strategy: Strategy::new(holdings),
        fractions,
        value,
        log_value,
        qhat,
        dual_value,
        gap,
        grad_norm,
    })
}

/// Reverse relative entropy `H(p|q) = sum_i p_i ln(p_i/q_i)`.
///
/// `p` must be a probability measure; atoms with `p_i > 0, q_i = 0` make the
/// measures non-equivalent and are rejected.
pub fn reverse_entropy(p: &SubProbabilityMeasure, q: &SubProbabilityMeasure) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch(format!(
            "entropy between measures with {} and {} atoms",
            p.len(),
            q.len()
        )));
    }
    if !p.is_probability(1e-9) {
        return Err(Error::InvalidInput(format!(
            "first argument must be a probability measure, mass {}",
            p.mass()
        )));
    }
    let mut h = 0.0;
    for (&pi, &qi) in p.weights().iter().zip(q.weights()) {
        if pi == 0.0 {
            continue;
        }
        if qi <= 0.0 {
            return Err(Error::NotEquivalent(
                "reference measure vanishes on an atom with positive probability".to_string(),
            ));
        }
        h += pi * (pi / qi).ln();
    }
    Ok(h)
}

/// Numerical evidence that a solution satisfies both optimality
/// characterizations. All slacks are signed so that negative values are
/// violations.
#[derive(Debug, Clone)]
pub struct DualityReport {
    /// Most negative one-step martingale slack of any price under `Qhat`
    /// (checked in both directions, so zero means exact martingale).
    pub martingale_slack: f64,
    /// `min_q H(P|q) - H(P|Qhat)` over sampled strictly positive martingale
    /// measures.
    pub entropy_margin: f64,
    /// Worst supermartingale slack of `X/V` over sampled admissible wealths.
    pub ratio_slack: f64,
    /// `|Qhat(all) - 1|`.
    pub mass_error: f64,
    pub samples: usize,
}

impl DualityReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.martingale_slack >= -tol
            && self.entropy_margin >= -tol
            && self.ratio_slack >= -tol
            && self.mass_error <= tol
    }
}

/// Stress-tests a numeraire solution:
/// prices are martingales under `Qhat`; no sampled martingale measure has
/// smaller reverse entropy; `X/V` is a supermartingale for sampled admissible
/// strategies.
pub fn verify_duality(
    market: &FiniteMarket,
    solution: &NumeraireSolution,
    samples: usize,
    seed: u64,
) -> Result<DualityReport> {
    let tree = market.tree();
    let reweighted = market.reweighted(&solution.qhat)?;
    let mut martingale_slack = f64::INFINITY;
    for i in 0..market.dim() {
        let coord: Vec<f64> = (0..tree.len()).map(|id| market.price(id)[i]).collect();
        let up = is_supermartingale(&reweighted, &coord, 0.0)?;
        let neg: Vec<f64> = coord.iter().map(|v| -v).collect();
        let down = is_supermartingale(&reweighted, &neg, 0.0)?;
        martingale_slack = martingale_slack.min(up.worst_slack).min(down.worst_slack);
    }
    if market.dim() == 0 {
        martingale_slack = 0.0;
    }

    // Per-node vertex sets, reused across entropy samples.
    let vertex_sets: Vec<Vec<Vec<f64>>> = (0..tree.len())
        .map(|node| {
            if tree.is_leaf(node) {
                Vec::new()
            } else {
                let problem = node_problem(market, node);
                one_step_vertices(&problem.deltas, market.dim())
            }
        })
        .collect();

    let mut rng = rng::stream(seed, 0);
    let mut entropy_margin = f64::INFINITY;
    let h_star = solution.dual_value;
    for _ in 0..samples {
        let mut path = vec![0.0; tree.len()];
        path[tree.root()] = 1.0;
        for node in tree.internal_nodes() {
            let vertices = &vertex_sets[node];
            let mut mix = vec![0.0; vertices[0].len()];
            let mut total = 0.0;
            for v in vertices {
                let w: f64 = Exp1.sample(&mut rng);
                total += w;
                for (m, &vi) in mix.iter_mut().zip(v) {
                    *m += w * vi;
                }
            }
            for (j, &c) in tree.node(node).children.iter().enumerate() {
                path[c] = path[node] * mix[j] / total;
            }
        }
        let weights: Vec<f64> = tree.leaves().iter().map(|&l| path[l]).collect();
        if weights.iter().any(|&w| w <= 0.0) {
            // Mixture touched a face; such measures are not equivalent and
            // fall outside the dual feasible set.
            continue;
        }
        let q = SubProbabilityMeasure::from_weights_tol(weights, 1e-9)?;
        let h = reverse_entropy(&market.measure(), &q)?;
        entropy_margin = entropy_margin.min(h - h_star);
    }
    if entropy_margin == f64::INFINITY {
        entropy_margin = 0.0;
    }

    let mut ratio_slack = f64::INFINITY;
    for _ in 0..samples {
        let x = random_admissible_value(market, &mut rng);
        let ratio: Vec<f64> = x
            .iter()
            .zip(&solution.value.values)
            .map(|(&xi, &vi)| xi / vi)
            .collect();
        let check = is_supermartingale(market, &ratio, 0.0)?;
        ratio_slack = ratio_slack.min(check.worst_slack);
    }
    if ratio_slack == f64::INFINITY {
        ratio_slack = 0.0;
    }

    Ok(DualityReport {
        martingale_slack,
        entropy_margin,
        ratio_slack,
        mass_error: (solution.qhat.mass() - 1.0).abs(),
        samples,
    })
}

/// Samples a strictly positive admissible wealth process with `X_0 = 1` by
/// drawing bounded random fractions at every internal node.
pub fn random_admissible_value(market: &FiniteMarket, rng: &mut impl Rng) -> Vec<f64> {
    let tree = market.tree();
    let dim = market.dim();
    let mut values = vec![0.0; tree.len()];
    values[tree.root()] = 1.0;
    for node in tree.internal_nodes() {
        let mut dir = DVector::zeros(dim);
        for i in 0..dim {
            dir[i] = StandardNormal.sample(rng);
        }
        let norm = dir.norm();
        if norm > 0.0 {
            dir /= norm;
        }
        // Largest |t| keeping every one-step return above 10% of wealth.
        let mut t_max: f64 = 10.0;
        let mut t_min: f64 = -10.0;
        for &c in &tree.node(node).children {
            let ds = DVector::from_vec(market.delta_price(node, c));
            let a = dir.dot(&ds);
            if a < 0.0 {
                t_max = t_max.min(-0.9 / a);
            } else if a > 0.0 {
                t_min = t_min.max(-0.9 / a);
            }
        }
        let u: f64 = rng.random();
        let t = t_min + u * (t_max - t_min);
        for &c in &tree.node(node).children {
            let ds = DVector::from_vec(market.delta_price(node, c));
            values[c] = values[node] * (1.0 + t * dir.dot(&ds));
        }
    }
    values
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn binomial_example() -> FiniteMarket {
        FiniteMarket::binomial(1.0, 1.2, 0.9, 0.6, 1).unwrap()
    }

    #[test]
    fn binomial_solution_matches_hand_computation() {
        // One-period, u=1.2, d=0.9, p=0.6: phi* = (p u' + (1-p) d')/(-u' d')
        // with u' = 0.2, d' = -0.1, giving phi* = 4.
        let m = binomial_example();
        let sol = solve_log_optimal(&m, 1e-12).unwrap();
        assert_relative_eq!(sol.fractions[0][0], 4.0, epsilon = 1e-10);
        let vt = sol.value.terminal(&m);
        assert_relative_eq!(vt[0], 1.8, epsilon = 1e-10);
        assert_relative_eq!(vt[1], 0.6, epsilon = 1e-10);
        assert_relative_eq!(sol.log_value, 0.6 * 1.8f64.ln() + 0.4 * 0.6f64.ln(), epsilon = 1e-12);
        assert_relative_eq!(sol.log_value, 0.14834174943487517, epsilon = 1e-12);
        assert_relative_eq!(sol.qhat.weight(0), 1.0 / 3.0, epsilon = 1e-10);
        assert_relative_eq!(sol.qhat.weight(1), 2.0 / 3.0, epsilon = 1e-10);
        assert!(sol.gap <= 1e-12);
        assert!((sol.qhat.mass() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn entropy_matches_log_value_identity() {
        // d P / d Qhat = V_T, so H(P|Qhat) = E ln V_T.
        let m = FiniteMarket::binomial(1.0, 1.3, 0.8, 0.55, 3).unwrap();
        let sol = solve_log_optimal(&m, 1e-12).unwrap();
        assert!(sol.gap <= 1e-12, "gap = {}", sol.gap);
    }

    #[test]
    fn martingale_measure_on_complete_binomial_is_unique() {
        let m = binomial_example();
        let q = find_martingale_measure(&m).unwrap();
        // (q u' + (1-q) d') = 0 => q = 1/3.
        assert_relative_eq!(q.weight(0), 1.0 / 3.0, epsilon = 1e-10);
        assert_relative_eq!(q.weight(1), 2.0 / 3.0, epsilon = 1e-10);
    }

    #[test]
    fn trinomial_measure_is_interior() {
        let m = FiniteMarket::one_period(
            &[1.0],
            &[(0.3, vec![1.3]), (0.4, vec![1.0]), (0.3, vec![0.8])],
        )
        .unwrap();
        let q = find_martingale_measure(&m).unwrap();
        // Vertices of the polytope: (0.4, 0, 0.6) and (0, 1, 0).
        assert_relative_eq!(q.weight(0), 0.2, epsilon = 1e-9);
        assert_relative_eq!(q.weight(1), 0.5, epsilon = 1e-9);
        assert_relative_eq!(q.weight(2), 0.3, epsilon = 1e-9);
        for i in 0..3 {
            assert!(q.weight(i) > 0.0);
        }
        let e: f64 = q
            .weights()
            .iter()
            .zip([1.3, 1.0, 0.8])
            .map(|(&w, s)| w * s)
            .sum();
        assert_relative_eq!(e, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn arbitrage_is_detected() {
        // Both branches strictly above the current price.
        let m = FiniteMarket::one_period(&[1.0], &[(0.5, vec![1.2]), (0.5, vec![1.1])]).unwrap();
        assert!(find_martingale_measure(&m).is_none());
        assert!(matches!(solve_log_optimal(&m, 1e-10), Err(Error::Arbitrage(_))));

        // One-sided with an attainable zero: still no *equivalent* measure.
        let m2 = FiniteMarket::one_period(&[1.0], &[(0.5, vec![1.2]), (0.5, vec![1.0])]).unwrap();
        assert!(find_martingale_measure(&m2).is_none());
    }

    #[test]
    fn degenerate_branch_gets_minimum_norm_fractions() {
        // Two children with identical prices equal to the parent's: any
        // holdings are optimal; the solver must pick zero.
        let m = FiniteMarket::one_period(&[1.0], &[(0.5, vec![1.0]), (0.5, vec![1.0])]).unwrap();
        let sol = solve_log_optimal(&m, 1e-12).unwrap();
        assert_eq!(sol.fractions[0], vec![0.0]);
        assert_relative_eq!(sol.log_value, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn two_assets_with_redundant_direction() {
        // Second asset duplicates the first: the Hessian is singular along
        // (1, -1); the pseudo-inverse step must still find the optimum.
        let m = FiniteMarket::one_period(
            &[1.0, 1.0],
            &[(0.6, vec![1.2, 1.2]), (0.4, vec![0.9, 0.9])],
        )
        .unwrap();
        let sol = solve_log_optimal(&m, 1e-12).unwrap();
        let vt = sol.value.terminal(&m);
        assert_relative_eq!(vt[0], 1.8, epsilon = 1e-9);
        assert_relative_eq!(vt[1], 0.6, epsilon = 1e-9);
        // Minimum-norm solution splits the exposure evenly.
        assert_relative_eq!(sol.fractions[0][0], 2.0, epsilon = 1e-8);
        assert_relative_eq!(sol.fractions[0][1], 2.0, epsilon = 1e-8);
    }

    #[test]
    fn scaling_prices_leaves_wealth_unchanged() {
        let base = FiniteMarket::binomial(1.0, 1.25, 0.85, 0.55, 2).unwrap();
        let scaled = FiniteMarket::binomial(250.0, 1.25, 0.85, 0.55, 2).unwrap();
        let a = solve_log_optimal(&base, 1e-12).unwrap();
        let b = solve_log_optimal(&scaled, 1e-12).unwrap();
        assert_relative_eq!(a.log_value, b.log_value, epsilon = 1e-9);
        for (va, vb) in a.value.values.iter().zip(&b.value.values) {
            assert_relative_eq!(va, vb, epsilon = 1e-9);
        }
        // Units scale inversely with price.
        assert_relative_eq!(
            a.strategy.gamma(0)[0],
            250.0 * b.strategy.gamma(0)[0],
            epsilon = 1e-9
        );
    }

    #[test]
    fn duality_verification_on_incomplete_market() {
        let m = FiniteMarket::one_period(
            &[1.0],
            &[(0.3, vec![1.5]), (0.4, vec![1.0]), (0.3, vec![0.8])],
        )
        .unwrap();
        let sol = solve_log_optimal(&m, 1e-12).unwrap();
        let report = verify_duality(&m, &sol, 200, 42).unwrap();
        assert!(report.passes(1e-9), "{report:?}");
        // The sampled entropies should actually move (incomplete market).
        assert!(report.entropy_margin >= 0.0);
    }

    #[test]
    fn duality_verification_on_complete_market_is_tight() {
        let m = binomial_example();
        let sol = solve_log_optimal(&m, 1e-12).unwrap();
        let report = verify_duality(&m, &sol, 50, 7).unwrap();
        // Single vertex: every sampled measure is Qhat itself.
        assert!(report.entropy_margin.abs() <= 1e-12);
        assert!(report.passes(1e-9));
    }

    #[test]
    fn reverse_entropy_rejects_vanishing_reference() {
        let p = SubProbabilityMeasure::from_weights(vec![0.5, 0.5]).unwrap();
        let q = SubProbabilityMeasure::from_weights(vec![1.0, 0.0]).unwrap();
        assert!(matches!(reverse_entropy(&p, &q), Err(Error::NotEquivalent(_))));
        let sub = SubProbabilityMeasure::from_weights(vec![0.25, 0.25]).unwrap();
        // Entropy against a sub-probability is well defined and larger.
        let h = reverse_entropy(&p, &sub).unwrap();
        assert_relative_eq!(h, (2.0f64).ln(), epsilon = 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        /// E(1/V_T) = 1 and E ln V_T >= 0 on random viable binomial markets.
        #[test]
        fn numeraire_inverse_has_unit_mean(
            u in 1.05f64..1.8,
            d in 0.4f64..0.95,
            p in 0.05f64..0.95,
            periods in 1usize..4,
        ) {
            let m = FiniteMarket::binomial(1.0, u, d, p, periods).unwrap();
            let sol = solve_log_optimal(&m, 1e-12).unwrap();
            let vt = sol.value.terminal(&m);
            let inv_mean = m.expectation(|pos| 1.0 / vt[pos]);
            prop_assert!((inv_mean - 1.0).abs() <= 1e-10);
            prop_assert!(sol.log_value >= -1e-12);
            prop_assert!(sol.gap <= 1e-10);
        }
    }
}
