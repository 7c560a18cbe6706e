//! Finite market models on event trees.
//!
//! A market lives on a rooted tree: nodes are market states, edges carry
//! one-step branch probabilities, and every node holds a strictly positive
//! price vector for `d` securities (discounted units, so cash is the constant
//! `1` and does not appear). All leaves sit at the common horizon `T`.
//!
//! The JSON on-disk format mirrors the tree directly:
//!
//! ```json
//! {
//!   "T": 1,
//!   "d": 1,
//!   "nodes": [
//!     {"id": 0, "t": 0, "parent": null, "prob": 1.0, "prices": [1.0]},
//!     {"id": 1, "t": 1, "parent": 0, "prob": 0.6, "prices": [1.2]},
//!     {"id": 2, "t": 1, "parent": 0, "prob": 0.4, "prices": [0.9]}
//!   ]
//! }
//! ```
//!
//! Loading validates structure (unique ids, single root, times increasing by
//! one along edges, uniform leaf depth, branch probabilities in `(0,1]`
//! summing to one per node, positive prices) and rejects files with any
//! violation. [`MarketDocument::validate`] exposes the same checks as a
//! report for diagnostic use.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for structural probability sums (branch sums, leaf mass).
pub const STRUCTURAL_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct Node {
    pub time: usize,
    pub parent: Option<usize>,
    /// Probability of the edge from the parent; `1.0` at the root.
    pub branch_prob: f64,
    pub children: Vec<usize>,
}

/// Rooted tree with uniform leaf depth and per-edge probabilities.
#[derive(Debug, Clone)]
pub struct EventTree {
    nodes: Vec<Node>,
    horizon: usize,
    leaves: Vec<usize>,
    leaf_probs: Vec<f64>,
    leaf_pos: Vec<Option<usize>>,
}

impl EventTree {
    fn assemble(nodes: Vec<Node>, horizon: usize) -> Self {
        let mut leaves = Vec::new();
        let mut leaf_pos = vec![None; nodes.len()];
        for (id, node) in nodes.iter().enumerate() {
            if node.children.is_empty() {
                leaf_pos[id] = Some(leaves.len());
                leaves.push(id);
            }
        }
        let mut path_prob = vec![0.0; nodes.len()];
        for (id, node) in nodes.iter().enumerate() {
            path_prob[id] = match node.parent {
                None => 1.0,
                Some(p) => path_prob[p] * node.branch_prob,
            };
        }
        let leaf_probs = leaves.iter().map(|&l| path_prob[l]).collect();
        EventTree {
            nodes,
            horizon,
            leaves,
            leaf_probs,
            leaf_pos,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn root(&self) -> usize {
        0
    }

    pub fn node(&self, id: usize) -> &Node {
        &self.nodes[id]
    }

    pub fn is_leaf(&self, id: usize) -> bool {
        self.nodes[id].children.is_empty()
    }

    /// Leaf node ids in stable (construction) order.
    pub fn leaves(&self) -> &[usize] {
        &self.leaves
    }

    /// Unconditional probability of each leaf, aligned with [`leaves`](Self::leaves).
    pub fn leaf_probs(&self) -> &[f64] {
        &self.leaf_probs
    }

    /// Position of a node in the leaf ordering, if it is a leaf.
    pub fn leaf_position(&self, id: usize) -> Option<usize> {
        self.leaf_pos[id]
    }

    pub fn internal_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.nodes.len()).filter(move |&id| !self.is_leaf(id))
    }

    /// Total weight of the leaves below each node, for leaf weights `w`.
    pub fn subtree_mass(&self, weights: &[f64]) -> Vec<f64> {
        let mut mass = vec![0.0; self.nodes.len()];
        // Children always have larger ids than parents (construction order),
        // so one reverse sweep accumulates bottom-up.
        for id in (0..self.nodes.len()).rev() {
            if let Some(pos) = self.leaf_pos[id] {
                mass[id] = weights[pos];
            } else {
                mass[id] = self.nodes[id].children.iter().map(|&c| mass[c]).sum();
            }
        }
        mass
    }
}

/// On-disk form of one node.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeDocument {
    pub id: u64,
    pub t: usize,
    pub parent: Option<u64>,
    pub prob: f64,
    pub prices: Vec<f64>,
}

/// On-disk form of a market; see the module docs for the schema.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarketDocument {
    #[serde(rename = "T")]
    pub horizon: usize,
    pub d: usize,
    pub nodes: Vec<NodeDocument>,
}

/// Outcome of structural validation: empty means well formed.
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn summary(&self) -> String {
        self.violations.join("; ")
    }
}

impl MarketDocument {
    /// Checks every structural invariant and reports all violations found.
    pub fn validate(&self) -> ValidationReport {
        let mut v = Vec::new();
        if self.d == 0 {
            v.push("d must be at least 1".to_string());
        }
        let mut index = HashMap::new();
        for (i, node) in self.nodes.iter().enumerate() {
            if index.insert(node.id, i).is_some() {
                v.push(format!("duplicate node id {}", node.id));
            }
        }
        let roots: Vec<&NodeDocument> = self.nodes.iter().filter(|n| n.parent.is_none()).collect();
        if roots.len() != 1 {
            v.push(format!("expected exactly one root, found {}", roots.len()));
        }
        for root in &roots {
            if root.t != 0 {
                v.push(format!("root node {} has t={}, expected 0", root.id, root.t));
            }
            if (root.prob - 1.0).abs() > STRUCTURAL_TOL {
                v.push(format!("root node {} has prob {}, expected 1", root.id, root.prob));
            }
        }
        let mut children: HashMap<u64, Vec<&NodeDocument>> = HashMap::new();
        for node in &self.nodes {
            if node.prices.len() != self.d {
                v.push(format!(
                    "node {} has {} prices, expected d={}",
                    node.id,
                    node.prices.len(),
                    self.d
                ));
            }
            for &s in &node.prices {
                if !s.is_finite() || s <= 0.0 {
                    v.push(format!("node {} has non-positive price {}", node.id, s));
                    break;
                }
            }
            if node.t > self.horizon {
                v.push(format!(
                    "node {} has t={} beyond horizon T={}",
                    node.id, node.t, self.horizon
                ));
            }
            if let Some(pid) = node.parent {
                match index.get(&pid) {
                    None => v.push(format!("node {} references missing parent {}", node.id, pid)),
                    Some(&pi) => {
                        let parent = &self.nodes[pi];
                        if node.t != parent.t + 1 {
                            v.push(format!(
                                "node {} has t={}, expected parent t+1={}",
                                node.id,
                                node.t,
                                parent.t + 1
                            ));
                        }
                        if !(node.prob > 0.0 && node.prob <= 1.0) || !node.prob.is_finite() {
                            v.push(format!(
                                "node {} has branch prob {} outside (0, 1]",
                                node.id, node.prob
                            ));
                        }
                        children.entry(pid).or_default().push(node);
                    }
                }
            }
        }
        for node in &self.nodes {
            match children.get(&node.id) {
                None => {
                    if node.t != self.horizon {
                        v.push(format!(
                            "non-uniform depth: node {} is a leaf at t={}, expected T={}",
                            node.id, node.t, self.horizon
                        ));
                    }
                }
                Some(kids) => {
                    let sum: f64 = kids.iter().map(|k| k.prob).sum();
                    if (sum - 1.0).abs() > STRUCTURAL_TOL {
                        v.push(format!("branch sum {} != 1 at node {}", sum, node.id));
                    }
                }
            }
        }
        if v.is_empty() {
            // Leaf mass check only makes sense on structurally sound trees.
            let market = FiniteMarket::from_valid_document(self);
            let mut mass = 0.0;
            let mut comp = 0.0;
            for &p in market.tree.leaf_probs() {
                let y = p - comp;
                let t = mass + y;
                comp = (t - mass) - y;
                mass = t;
            }
            if (mass - 1.0).abs() > STRUCTURAL_TOL {
                v.push(format!("leaf probabilities sum to {mass}, expected 1"));
            }
        }
        ValidationReport { violations: v }
    }
}

/// A validated finite market on an event tree.
#[derive(Debug, Clone)]
pub struct FiniteMarket {
    tree: EventTree,
    prices: Vec<Vec<f64>>,
    dim: usize,
}

impl FiniteMarket {
    /// Builds from a document, rejecting any structural violation.
    pub fn from_document(doc: &MarketDocument) -> Result<Self> {
        let report = doc.validate();
        if !report.is_ok() {
            return Err(Error::InvalidMarket(report.summary()));
        }
        Ok(Self::from_valid_document(doc))
    }

    fn from_valid_document(doc: &MarketDocument) -> Self {
        // Order nodes root-first so children always follow their parent.
        let mut order: Vec<usize> = (0..doc.nodes.len()).collect();
        order.sort_by_key(|&i| (doc.nodes[i].t, i));
        let mut dense: HashMap<u64, usize> = HashMap::new();
        for (new_id, &i) in order.iter().enumerate() {
            dense.insert(doc.nodes[i].id, new_id);
        }
        let mut nodes: Vec<Node> = order
            .iter()
            .map(|&i| Node {
                time: doc.nodes[i].t,
                parent: doc.nodes[i].parent.map(|p| dense[&p]),
                branch_prob: if doc.nodes[i].parent.is_some() {
                    doc.nodes[i].prob
                } else {
                    1.0
                },
                children: Vec::new(),
            })
            .collect();
        for id in 0..nodes.len() {
            if let Some(p) = nodes[id].parent {
                nodes[p].children.push(id);
            }
        }
        let prices = order.iter().map(|&i| doc.nodes[i].prices.clone()).collect();
        FiniteMarket {
            tree: EventTree::assemble(nodes, doc.horizon),
            prices,
            dim: doc.d,
        }
    }

    pub fn to_document(&self) -> MarketDocument {
        let nodes = (0..self.tree.len())
            .map(|id| {
                let n = self.tree.node(id);
                NodeDocument {
                    id: id as u64,
                    t: n.time,
                    parent: n.parent.map(|p| p as u64),
                    prob: n.branch_prob,
                    prices: self.prices[id].clone(),
                }
            })
            .collect();
        MarketDocument {
            horizon: self.tree.horizon(),
            d: self.dim,
            nodes,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let doc: MarketDocument = serde_json::from_str(&text)?;
        Self::from_document(&doc)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.to_document())?;
        Ok(std::fs::write(path, text)?)
    }

    /// Single-period market: root prices plus one `(prob, prices)` branch per
    /// terminal state.
    pub fn one_period(s0: &[f64], branches: &[(f64, Vec<f64>)]) -> Result<Self> {
        let mut b = MarketBuilder::new(s0.to_vec());
        for (prob, prices) in branches {
            b.add_child(0, *prob, prices.clone());
        }
        b.build()
    }

    /// Market with i.i.d. one-period returns: each period every node branches
    /// into `factors` outcomes, `(prob, gross return)` each, applied to all
    /// coordinates of the parent price.
    pub fn iid(s0: f64, factors: &[(f64, f64)], periods: usize) -> Result<Self> {
        let mut b = MarketBuilder::new(vec![s0]);
        let mut frontier = vec![0usize];
        for _ in 0..periods {
            let mut next = Vec::with_capacity(frontier.len() * factors.len());
            for &node in &frontier {
                let s = b.prices[node][0];
                for &(prob, factor) in factors {
                    next.push(b.add_child(node, prob, vec![s * factor]));
                }
            }
            frontier = next;
        }
        b.build()
    }

    /// Binomial market: up factor `u` with probability `p`, down factor `d`.
    pub fn binomial(s0: f64, u: f64, d: f64, p: f64, periods: usize) -> Result<Self> {
        Self::iid(s0, &[(p, u), (1.0 - p, d)], periods)
    }

    pub fn tree(&self) -> &EventTree {
        &self.tree
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn horizon(&self) -> usize {
        self.tree.horizon()
    }

    pub fn price(&self, node: usize) -> &[f64] {
        &self.prices[node]
    }

    /// Price increment along the edge `parent -> child`.
    pub fn delta_price(&self, parent: usize, child: usize) -> Vec<f64> {
        (0..self.dim)
            .map(|i| self.prices[child][i] - self.prices[parent][i])
            .collect()
    }

    /// The reference measure `P` as weights on leaves.
    pub fn measure(&self) -> SubProbabilityMeasure {
        SubProbabilityMeasure::from_weights_tol(self.tree.leaf_probs().to_vec(), 1e-9)
            .expect("leaf probabilities form a probability measure")
    }

    /// Restricts a node-indexed vector to the leaves, in leaf order.
    pub fn terminal_values(&self, per_node: &[f64]) -> Vec<f64> {
        self.tree.leaves().iter().map(|&l| per_node[l]).collect()
    }

    /// `E f(leaf)` under the market's own measure; `f` gets the leaf position.
    pub fn expectation(&self, mut f: impl FnMut(usize) -> f64) -> f64 {
        self.tree
            .leaf_probs()
            .iter()
            .enumerate()
            .map(|(pos, &p)| p * f(pos))
            .sum()
    }

    /// `E_q f(leaf)` under an explicit (sub-probability) measure on leaves.
    pub fn expectation_under(
        &self,
        q: &SubProbabilityMeasure,
        mut f: impl FnMut(usize) -> f64,
    ) -> Result<f64> {
        if q.len() != self.tree.leaves().len() {
            return Err(Error::DimensionMismatch(format!(
                "measure has {} atoms, market has {} leaves",
                q.len(),
                self.tree.leaves().len()
            )));
        }
        Ok(q.weights()
            .iter()
            .enumerate()
            .map(|(pos, &w)| w * f(pos))
            .sum())
    }

    /// Replaces the branch probabilities by those induced by a strictly
    /// positive leaf measure (conditional mass ratios). Prices are unchanged.
    pub fn reweighted(&self, q: &SubProbabilityMeasure) -> Result<Self> {
        if q.len() != self.tree.leaves().len() {
            return Err(Error::DimensionMismatch(format!(
                "measure has {} atoms, market has {} leaves",
                q.len(),
                self.tree.leaves().len()
            )));
        }
        if q.weights().iter().any(|&w| w <= 0.0) {
            return Err(Error::NotEquivalent(
                "reweighting measure must be strictly positive on every leaf".to_string(),
            ));
        }
        let mass = self.tree.subtree_mass(q.weights());
        let mut nodes: Vec<Node> = (0..self.tree.len()).map(|id| self.tree.node(id).clone()).collect();
        for id in 0..nodes.len() {
            let kids = nodes[id].children.clone();
            if kids.is_empty() {
                continue;
            }
            let total: f64 = kids.iter().map(|&c| mass[c]).sum();
            for &c in &kids {
                nodes[c].branch_prob = mass[c] / total;
            }
        }
        Ok(FiniteMarket {
            tree: EventTree::assemble(nodes, self.tree.horizon()),
            prices: self.prices.clone(),
            dim: self.dim,
        })
    }

    /// Re-runs structural validation on the built market.
    pub fn validate(&self) -> ValidationReport {
        self.to_document().validate()
    }
}

/// Incremental construction of a market, validated at `build`.
#[derive(Debug, Clone)]
pub struct MarketBuilder {
    parents: Vec<Option<usize>>,
    times: Vec<usize>,
    probs: Vec<f64>,
    prices: Vec<Vec<f64>>,
}

impl MarketBuilder {
    pub fn new(root_prices: Vec<f64>) -> Self {
        MarketBuilder {
            parents: vec![None],
            times: vec![0],
            probs: vec![1.0],
            prices: vec![root_prices],
        }
    }

    /// Adds a child node and returns its id.
    pub fn add_child(&mut self, parent: usize, prob: f64, prices: Vec<f64>) -> usize {
        let id = self.parents.len();
        self.parents.push(Some(parent));
        self.times.push(self.times[parent] + 1);
        self.probs.push(prob);
        self.prices.push(prices);
        id
    }

    pub fn build(self) -> Result<FiniteMarket> {
        let horizon = self.times.iter().copied().max().unwrap_or(0);
        let d = self.prices[0].len();
        let nodes = (0..self.parents.len())
            .map(|i| NodeDocument {
                id: i as u64,
                t: self.times[i],
                parent: self.parents[i].map(|p| p as u64),
                prob: self.probs[i],
                prices: self.prices[i].clone(),
            })
            .collect();
        FiniteMarket::from_document(&MarketDocument {
            horizon,
            d,
            nodes,
        })
    }
}

/// Non-negative weights on a finite set of atoms with total mass at most one.
///
/// Sub-probability measures appear as `P/V_T` images of numeraire portfolios
/// and as hypothesis-test alternatives; a plain probability measure is the
/// special case of mass one.
#[derive(Debug, Clone)]
pub struct SubProbabilityMeasure {
    weights: Vec<f64>,
    mass: f64,
}

impl SubProbabilityMeasure {
    /// Standard constructor with the structural mass tolerance `1e-12`.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        Self::from_weights_tol(weights, STRUCTURAL_TOL)
    }

    /// Constructor with an explicit mass tolerance, for weights produced by
    /// iterative solvers whose mass is only accurate to the solver tolerance.
    pub fn from_weights_tol(weights: Vec<f64>, tol: f64) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidInput("measure needs at least one atom".to_string()));
        }
        for &w in &weights {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::InvalidInput(format!("negative or non-finite weight {w}")));
            }
        }
        let mass: f64 = weights.iter().sum();
        if mass > 1.0 + tol {
            return Err(Error::InvalidInput(format!(
                "total mass {mass} exceeds 1 beyond tolerance {tol}"
            )));
        }
        Ok(SubProbabilityMeasure { weights, mass })
    }

    /// Uniform probability measure on `k` atoms.
    pub fn uniform(k: usize) -> Self {
        SubProbabilityMeasure {
            weights: vec![1.0 / k as f64; k],
            mass: 1.0,
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn is_probability(&self, tol: f64) -> bool {
        (self.mass - 1.0).abs() <= tol
    }
}

/// Adapted density process: one strictly positive value per node, exactly one
/// at the root.
#[derive(Debug, Clone)]
pub struct DensityProcess {
    values: Vec<f64>,
}

impl DensityProcess {
    pub fn new(market: &FiniteMarket, values: Vec<f64>) -> Result<Self> {
        if values.len() != market.tree().len() {
            return Err(Error::DimensionMismatch(format!(
                "{} density values for {} nodes",
                values.len(),
                market.tree().len()
            )));
        }
        if values[market.tree().root()] != 1.0 {
            return Err(Error::InvalidInput(format!(
                "density process must start at exactly 1, got {}",
                values[market.tree().root()]
            )));
        }
        for &z in &values {
            if !z.is_finite() || z <= 0.0 {
                return Err(Error::InvalidInput(format!(
                    "density values must be strictly positive, got {z}"
                )));
            }
        }
        Ok(DensityProcess { values })
    }

    /// Conditional-mass-ratio martingale `Z_t = q(subtree)/P(subtree)` of a
    /// strictly positive leaf measure, normalized to start at exactly one.
    pub fn from_measure(market: &FiniteMarket, q: &SubProbabilityMeasure) -> Result<Self> {
        if q.len() != market.tree().leaves().len() {
            return Err(Error::DimensionMismatch(format!(
                "measure has {} atoms, market has {} leaves",
                q.len(),
                market.tree().leaves().len()
            )));
        }
        if q.weights().iter().any(|&w| w <= 0.0) {
            return Err(Error::NotEquivalent(
                "density requires a strictly positive measure".to_string(),
            ));
        }
        let q_mass = market.tree().subtree_mass(q.weights());
        let p_mass = market.tree().subtree_mass(market.tree().leaf_probs());
        let root = market.tree().root();
        let scale = q_mass[root] / p_mass[root];
        let mut values: Vec<f64> = (0..market.tree().len())
            .map(|id| q_mass[id] / p_mass[id] / scale)
            .collect();
        values[root] = 1.0;
        DensityProcess::new(market, values)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Terminal density per leaf, in leaf order.
    pub fn terminal(&self, market: &FiniteMarket) -> Vec<f64> {
        market.terminal_values(&self.values)
    }
}

/// Predictable trading strategy: security holdings chosen at every internal
/// node and kept over the following period. Leaf entries are unused.
#[derive(Debug, Clone)]
pub struct Strategy {
    holdings: Vec<Vec<f64>>,
}

impl Strategy {
    pub fn new(holdings: Vec<Vec<f64>>) -> Self {
        Strategy { holdings }
    }

    pub fn zero(market: &FiniteMarket) -> Self {
        Strategy {
            holdings: vec![vec![0.0; market.dim()]; market.tree().len()],
        }
    }

    /// Same holdings vector at every internal node.
    pub fn constant(market: &FiniteMarket, gamma: &[f64]) -> Self {
        Strategy {
            holdings: vec![gamma.to_vec(); market.tree().len()],
        }
    }

    pub fn holdings(&self) -> &[Vec<f64>] {
        &self.holdings
    }

    pub fn gamma(&self, node: usize) -> &[f64] {
        &self.holdings[node]
    }
}

/// Self-financing wealth along the tree.
#[derive(Debug, Clone)]
pub struct ValueProcess {
    pub initial: f64,
    /// Wealth at every node.
    pub values: Vec<f64>,
    pub min_value: f64,
    /// Whether the process stays non-negative everywhere (admissibility).
    pub nonnegative: bool,
}

impl ValueProcess {
    pub fn terminal(&self, market: &FiniteMarket) -> Vec<f64> {
        market.terminal_values(&self.values)
    }
}

/// Runs a self-financing strategy from initial wealth `x0 >= 0`:
/// `X(child) = X(node) + (gamma(node), S(child) - S(node))`.
pub fn evaluate_value_process(
    market: &FiniteMarket,
    strategy: &Strategy,
    x0: f64,
) -> Result<ValueProcess> {
    if !(x0 >= 0.0) || !x0.is_finite() {
        return Err(Error::InvalidInput(format!(
            "initial wealth must be non-negative and finite, got {x0}"
        )));
    }
    if strategy.holdings().len() != market.tree().len() {
        return Err(Error::DimensionMismatch(format!(
            "strategy defined on {} nodes, market has {}",
            strategy.holdings().len(),
            market.tree().len()
        )));
    }
    let tree = market.tree();
    let mut values = vec![0.0; tree.len()];
    values[tree.root()] = x0;
    for id in 0..tree.len() {
        if tree.is_leaf(id) {
            continue;
        }
        let gamma = strategy.gamma(id);
        if gamma.len() != market.dim() {
            return Err(Error::DimensionMismatch(format!(
                "strategy at node {id} has {} coordinates, market has d={}",
                gamma.len(),
                market.dim()
            )));
        }
        for &c in &tree.node(id).children {
            let ds = market.delta_price(id, c);
            let gain: f64 = gamma.iter().zip(&ds).map(|(g, d)| g * d).sum();
            values[c] = values[id] + gain;
        }
    }
    let min_value = values.iter().copied().fold(f64::INFINITY, f64::min);
    let scale = x0.abs().max(1.0);
    Ok(ValueProcess {
        initial: x0,
        values,
        min_value,
        nonnegative: min_value >= -1e-12 * scale,
    })
}

/// One-step conditional supermartingale check for a node-indexed process.
#[derive(Debug, Clone, Copy)]
pub struct SupermartingaleCheck {
    pub holds: bool,
    /// Most negative one-step slack `value(node) - E[value(child) | node]`.
    pub worst_slack: f64,
    pub worst_node: usize,
}

pub fn is_supermartingale(
    market: &FiniteMarket,
    values: &[f64],
    tol: f64,
) -> Result<SupermartingaleCheck> {
    let tree = market.tree();
    if values.len() != tree.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} process values for {} nodes",
            values.len(),
            tree.len()
        )));
    }
    let mut worst_slack = f64::INFINITY;
    let mut worst_node = tree.root();
    for id in tree.internal_nodes() {
        let expected: f64 = tree
            .node(id)
            .children
            .iter()
            .map(|&c| tree.node(c).branch_prob * values[c])
            .sum();
        let slack = values[id] - expected;
        if slack < worst_slack {
            worst_slack = slack;
            worst_node = id;
        }
    }
    if worst_slack == f64::INFINITY {
        worst_slack = 0.0;
    }
    Ok(SupermartingaleCheck {
        holds: worst_slack >= -tol,
        worst_slack,
        worst_node,
    })
}

/// Maps a non-negative terminal density `xi` (per leaf) to the measure with
/// weights `xi * P(leaf)`; the total mass must not exceed one.
pub fn density_to_measure(market: &FiniteMarket, xi: &[f64]) -> Result<SubProbabilityMeasure> {
    if xi.len() != market.tree().leaves().len() {
        return Err(Error::DimensionMismatch(format!(
            "{} density values for {} leaves",
            xi.len(),
            market.tree().leaves().len()
        )));
    }
    for &x in xi {
        if !x.is_finite() || x < 0.0 {
            return Err(Error::InvalidInput(format!(
                "terminal density must be non-negative and finite, got {x}"
            )));
        }
    }
    let weights = market
        .tree()
        .leaf_probs()
        .iter()
        .zip(xi)
        .map(|(&p, &x)| p * x)
        .collect();
    SubProbabilityMeasure::from_weights_tol(weights, STRUCTURAL_TOL)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn one_period_example() -> FiniteMarket {
        FiniteMarket::one_period(&[1.0], &[(0.6, vec![1.5]), (0.4, vec![1.05])]).unwrap()
    }

    #[test]
    fn binomial_shape() {
        let m = FiniteMarket::binomial(1.0, 1.2, 0.9, 0.6, 2).unwrap();
        assert_eq!(m.tree().len(), 7);
        assert_eq!(m.tree().leaves().len(), 4);
        assert_eq!(m.horizon(), 2);
        let probs = m.tree().leaf_probs();
        assert_relative_eq!(probs.iter().sum::<f64>(), 1.0, epsilon = 1e-15);
        assert_relative_eq!(probs[0], 0.36, epsilon = 1e-15);
        // Prices multiply along paths.
        let leaf_prices: Vec<f64> = m.tree().leaves().iter().map(|&l| m.price(l)[0]).collect();
        assert_relative_eq!(leaf_prices[0], 1.44, epsilon = 1e-12);
        assert_relative_eq!(leaf_prices[3], 0.81, epsilon = 1e-12);
    }

    #[test]
    fn expectation_of_terminal_price() {
        let m = one_period_example();
        let s_t: Vec<f64> = m.tree().leaves().iter().map(|&l| m.price(l)[0]).collect();
        let e = m.expectation(|pos| s_t[pos]);
        assert_relative_eq!(e, 1.32, epsilon = 1e-15);

        let q = SubProbabilityMeasure::from_weights(vec![0.25, 0.75]).unwrap();
        let eq = m.expectation_under(&q, |pos| s_t[pos]).unwrap();
        assert_relative_eq!(eq, 0.25 * 1.5 + 0.75 * 1.05, epsilon = 1e-15);
    }

    #[test]
    fn validation_reports_branch_sum() {
        let doc = MarketDocument {
            horizon: 1,
            d: 1,
            nodes: vec![
                NodeDocument { id: 0, t: 0, parent: None, prob: 1.0, prices: vec![1.0] },
                NodeDocument { id: 1, t: 1, parent: Some(0), prob: 0.6, prices: vec![1.2] },
                NodeDocument { id: 2, t: 1, parent: Some(0), prob: 0.5, prices: vec![0.9] },
            ],
        };
        let report = doc.validate();
        assert!(!report.is_ok());
        assert!(report.summary().contains("branch sum 1.1"));
        assert!(FiniteMarket::from_document(&doc).is_err());
    }

    #[test]
    fn validation_reports_depth_prob_and_price_problems() {
        let doc = MarketDocument {
            horizon: 2,
            d: 1,
            nodes: vec![
                NodeDocument { id: 0, t: 0, parent: None, prob: 1.0, prices: vec![1.0] },
                NodeDocument { id: 1, t: 1, parent: Some(0), prob: 1.0, prices: vec![1.2] },
                NodeDocument { id: 2, t: 2, parent: Some(1), prob: 1.5, prices: vec![-1.0] },
                NodeDocument { id: 3, t: 1, parent: Some(0), prob: 0.0, prices: vec![0.9] },
            ],
        };
        let report = doc.validate();
        let text = report.summary();
        assert!(text.contains("non-uniform depth"));
        assert!(text.contains("outside (0, 1]"));
        assert!(text.contains("non-positive price"));
    }

    #[test]
    fn supermartingale_slacks() {
        let m = FiniteMarket::one_period(&[1.0], &[(0.6, vec![1.8]), (0.4, vec![0.6])]).unwrap();
        // Values equal to conditional expectation: slack zero.
        let fair = vec![1.32, 1.8, 0.6];
        let check = is_supermartingale(&m, &fair, 1e-12).unwrap();
        assert!(check.holds);
        assert_relative_eq!(check.worst_slack, 0.0, epsilon = 1e-15);

        // Strict submartingale: slack -0.5.
        let sub = vec![1.0, 1.5, 1.5];
        let check = is_supermartingale(&m, &sub, 1e-12).unwrap();
        assert!(!check.holds);
        assert_relative_eq!(check.worst_slack, -0.5, epsilon = 1e-15);
        assert_eq!(check.worst_node, 0);
    }

    #[test]
    fn density_to_measure_matches_hand_computation() {
        let m = FiniteMarket::one_period(&[1.0], &[(0.6, vec![1.8]), (0.4, vec![0.6])]).unwrap();
        // xi = 1/V_T for the log-optimal portfolio of this market.
        let xi = [1.0 / 1.8, 1.0 / 0.6];
        let q = density_to_measure(&m, &xi).unwrap();
        assert_relative_eq!(q.weight(0), 1.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(q.weight(1), 2.0 / 3.0, epsilon = 1e-15);
        assert!(q.is_probability(1e-12));

        // Mass above one is rejected.
        assert!(density_to_measure(&m, &[2.0, 2.0]).is_err());
    }

    #[test]
    fn reweighting_turns_prices_into_martingales() {
        let m = FiniteMarket::one_period(&[1.0], &[(0.6, vec![1.8]), (0.4, vec![0.6])]).unwrap();
        let q = SubProbabilityMeasure::from_weights(vec![1.0 / 3.0, 2.0 / 3.0]).unwrap();
        let rw = m.reweighted(&q).unwrap();
        let prices: Vec<f64> = (0..rw.tree().len()).map(|id| rw.price(id)[0]).collect();
        let up = is_supermartingale(&rw, &prices, 1e-12).unwrap();
        let down_values: Vec<f64> = prices.iter().map(|v| -v).collect();
        let down = is_supermartingale(&rw, &down_values, 1e-12).unwrap();
        assert!(up.holds && down.holds);
        assert_relative_eq!(up.worst_slack, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn value_process_follows_holdings() {
        let m = FiniteMarket::one_period(&[1.0], &[(0.6, vec![1.2]), (0.4, vec![0.9])]).unwrap();
        let x = evaluate_value_process(&m, &Strategy::constant(&m, &[2.0]), 1.0).unwrap();
        let t = x.terminal(&m);
        assert_relative_eq!(t[0], 1.4, epsilon = 1e-15);
        assert_relative_eq!(t[1], 0.8, epsilon = 1e-15);
        assert!(x.nonnegative);

        let y = evaluate_value_process(&m, &Strategy::constant(&m, &[20.0]), 1.0).unwrap();
        assert!(!y.nonnegative);
        assert_relative_eq!(y.min_value, -1.0, epsilon = 1e-15);

        let bad = evaluate_value_process(&m, &Strategy::constant(&m, &[1.0, 2.0]), 1.0);
        assert!(bad.is_err());
        assert!(evaluate_value_process(&m, &Strategy::zero(&m), -1.0).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("market.json");
        let m = FiniteMarket::binomial(1.0, 1.2, 0.9, 0.6, 2).unwrap();
        m.save(&path).unwrap();
        let loaded = FiniteMarket::load(&path).unwrap();
        assert_eq!(loaded.tree().len(), m.tree().len());
        for id in 0..m.tree().len() {
            assert_eq!(loaded.price(id), m.price(id));
            assert_eq!(loaded.tree().node(id).branch_prob, m.tree().node(id).branch_prob);
        }

        std::fs::write(&path, "{ not json").unwrap();
        assert!(matches!(FiniteMarket::load(&path), Err(Error::Json(_))));
    }

    #[test]
    fn density_process_invariants() {
        let m = FiniteMarket::one_period(&[1.0], &[(0.6, vec![1.8]), (0.4, vec![0.6])]).unwrap();
        assert!(DensityProcess::new(&m, vec![1.0, 0.5, 2.0]).is_ok());
        assert!(DensityProcess::new(&m, vec![0.999, 0.5, 2.0]).is_err());
        assert!(DensityProcess::new(&m, vec![1.0, 0.0, 2.0]).is_err());

        let q = SubProbabilityMeasure::from_weights(vec![1.0 / 3.0, 2.0 / 3.0]).unwrap();
        let z = DensityProcess::from_measure(&m, &q).unwrap();
        assert_eq!(z.values()[0], 1.0);
        let zt = z.terminal(&m);
        // dq/dP on leaves: (1/3)/0.6 and (2/3)/0.4.
        assert_relative_eq!(zt[0], 1.0 / 3.0 / 0.6, epsilon = 1e-12);
        assert_relative_eq!(zt[1], 2.0 / 3.0 / 0.4, epsilon = 1e-12);
    }

    #[test]
    fn value_process_wealth_hits_zero_exactly() {
        // Holding 1/0.4 shares loses everything on the down branch.
        let m = FiniteMarket::one_period(&[1.0], &[(0.5, vec![1.4]), (0.5, vec![0.6])]).unwrap();
        let x = evaluate_value_process(&m, &Strategy::constant(&m, &[2.5]), 1.0).unwrap();
        assert_relative_eq!(x.min_value, 0.0, epsilon = 1e-15);
        assert!(x.nonnegative);
    }
}
