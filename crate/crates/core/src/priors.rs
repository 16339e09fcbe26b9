//! Tree prior: depth-dependent split probability, operator/feature weights,
//! Dirichlet terms, and the generative sampler used for GROW proposals.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::expr::{Arity, OperatorSet, SymbolicTree, TreeSummary};

/// Split probability `p_m = alpha * (1 + m)^(-delta0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRule {
    pub alpha: f64,
    pub delta0: f64,
    /// Whether the depth product in the tree prior includes the root (m = 0).
    #[serde(default = "default_true")]
    pub include_root_factor: bool,
}

fn default_true() -> bool {
    true
}

impl Default for SplitRule {
    fn default() -> Self {
        SplitRule::new(0.95, 1.2)
    }
}

impl SplitRule {
    pub fn new(alpha: f64, delta0: f64) -> Self {
        SplitRule {
            alpha,
            delta0,
            include_root_factor: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0,1), got {}", self.alpha)));
        }
        if !(self.delta0 >= 0.0 && self.delta0.is_finite()) {
            return Err(Error::Config(format!("delta0 must be >= 0, got {}", self.delta0)));
        }
        Ok(())
    }

    #[inline]
    pub fn split_probability(&self, depth: usize) -> f64 {
        self.alpha * (1.0 + depth as f64).powf(-self.delta0)
    }

    /// `sum_m |nonterminals(m)| log p_m + |terminals(m)| log(1 - p_m)`.
    pub fn log_depth_factor(&self, summary: &TreeSummary) -> f64 {
        let first = usize::from(!self.include_root_factor);
        let mut total = 0.0;
        for m in first..summary.nonterminals_by_depth.len() {
            let pm = self.split_probability(m);
            let inner = summary.nonterminals_by_depth[m];
            let leaves = summary.terminals_by_depth[m];
            if inner > 0 {
                total += inner as f64 * pm.ln();
            }
            if leaves > 0 {
                total += leaves as f64 * (1.0 - pm).ln();
            }
        }
        total
    }
}

/// Convenience wrapper over [`SplitRule::split_probability`].
pub fn split_probability(rule: &SplitRule, depth: usize) -> f64 {
    rule.split_probability(depth)
}

/// A point on the probability simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Domain("weight vector is empty".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Domain("weights must be finite and nonnegative".into()));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!("weights sum to {sum}, not 1")));
        }
        Ok(WeightVector(weights))
    }

    /// Normalizes nonnegative masses onto the simplex.
    pub fn from_unnormalized(masses: Vec<f64>) -> Result<Self> {
        let sum: f64 = masses.iter().sum();
        if !(sum > 0.0 && sum.is_finite()) {
            return Err(Error::Domain("weights must have positive finite mass".into()));
        }
        let mut w: Vec<f64> = masses.iter().map(|m| m / sum).collect();
        // push rounding residue onto the largest entry so the sum is exact to 1e-12
        let residue = 1.0 - w.iter().sum::<f64>();
        if let Some(max) = w.iter_mut().max_by(|a, b| a.total_cmp(b)) {
            *max += residue;
        }
        WeightVector::new(w)
    }

    pub fn uniform(len: usize) -> Self {
        WeightVector(vec![1.0 / len as f64; len])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Draws an index with probability proportional to its weight.
    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random::<f64>() * self.0.iter().sum::<f64>();
        let mut acc = 0.0;
        let mut last_positive = 0;
        for (i, w) in self.0.iter().enumerate() {
            if *w > 0.0 {
                last_positive = i;
                acc += w;
                if u < acc {
                    return i;
                }
            }
        }
        last_positive
    }
}

/// Positive Dirichlet concentration vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Concentrations(Vec<f64>);

impl Concentrations {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Domain("concentration vector is empty".into()));
        }
        if let Some(bad) = values.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
            return Err(Error::Domain(format!("concentration {bad} is not positive")));
        }
        Ok(Concentrations(values))
    }

    /// `(1/len, ..., 1/len)`.
    pub fn uniform(len: usize) -> Self {
        Concentrations(vec![1.0 / len as f64; len])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `log B(a) = sum log Gamma(a_i) - log Gamma(sum a_i)`.
pub fn log_multivariate_beta(a: &[f64]) -> f64 {
    let total: f64 = a.iter().sum();
    a.iter().map(|&v| ln_gamma(v)).sum::<f64>() - ln_gamma(total)
}

/// `log B(concentrations + counts)`, the Dirichlet-multinomial term of the
/// collapsed tree prior.
pub fn log_dirichlet_multinomial(concentrations: &[f64], counts: &[usize]) -> Result<f64> {
    if concentrations.len() != counts.len() {
        return Err(Error::Domain(format!(
            "{} concentrations for {} counts",
            concentrations.len(),
            counts.len()
        )));
    }
    if let Some(bad) = concentrations.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
        return Err(Error::Domain(format!("concentration {bad} is not positive")));
    }
    let shifted: Vec<f64> = concentrations
        .iter()
        .zip(counts)
        .map(|(a, &c)| a + c as f64)
        .collect();
    Ok(log_multivariate_beta(&shifted))
}

fn weighted_log_count(weights: &[f64], counts: &[usize]) -> f64 {
    weights
        .iter()
        .zip(counts)
        .filter(|(_, &c)| c > 0)
        .map(|(w, &c)| c as f64 * w.ln())
        .sum()
}

/// Log prior of a tree given operator and feature weights, computed from its
/// summary. Returns `-inf` when a used operator or feature has zero weight.
pub fn log_tree_prior_from_summary(
    summary: &TreeSummary,
    w_op: &WeightVector,
    w_ft: &WeightVector,
    rule: &SplitRule,
) -> f64 {
    weighted_log_count(w_op.as_slice(), &summary.xi)
        + weighted_log_count(w_ft.as_slice(), &summary.rho)
        + rule.log_depth_factor(summary)
}

/// Log prior of `tree` with operator weights aligned to `ops`.
pub fn log_tree_prior(
    tree: &SymbolicTree,
    ops: &OperatorSet,
    w_op: &WeightVector,
    w_ft: &WeightVector,
    rule: &SplitRule,
) -> Result<f64> {
    check_alignment(ops, w_op)?;
    let summary = tree.summarize(ops, w_ft.len())?;
    Ok(log_tree_prior_from_summary(&summary, w_op, w_ft, rule))
}

fn check_alignment(ops: &OperatorSet, w_op: &WeightVector) -> Result<()> {
    if ops.len() != w_op.len() {
        return Err(Error::Config(format!(
            "{} operator weights for {} operators",
            w_op.len(),
            ops.len()
        )));
    }
    Ok(())
}

/// Generative tree prior truncated at `max_depth`.
#[derive(Debug, Clone, Copy)]
pub struct TreeGenerator<'a> {
    pub ops: &'a OperatorSet,
    pub w_op: &'a WeightVector,
    pub w_ft: &'a WeightVector,
    pub rule: &'a SplitRule,
    pub max_depth: usize,
}

impl TreeGenerator<'_> {
    /// Draws a subtree whose root sits at `depth`. Nodes below `max_depth`
    /// split with probability `p_m`; nodes at `max_depth` are terminal.
    pub fn sample_at<R: Rng + ?Sized>(&self, rng: &mut R, depth: usize) -> SymbolicTree {
        let split = depth < self.max_depth && rng.random::<f64>() < self.rule.split_probability(depth);
        if !split {
            return SymbolicTree::Terminal(self.w_ft.sample_index(rng));
        }
        let op = self.ops.ops()[self.w_op.sample_index(rng)];
        match op.arity() {
            Arity::Unary => SymbolicTree::unary(op, self.sample_at(rng, depth + 1)),
            Arity::Binary => {
                let left = self.sample_at(rng, depth + 1);
                let right = self.sample_at(rng, depth + 1);
                SymbolicTree::binary(op, left, right)
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> SymbolicTree {
        self.sample_at(rng, 0)
    }

    /// Exact log probability that [`TreeGenerator::sample_at`] returns
    /// `tree` when started at `depth`.
    pub fn log_probability_at(&self, tree: &SymbolicTree, depth: usize) -> f64 {
        match tree {
            SymbolicTree::Terminal(h) => {
                let w = self.w_ft.as_slice().get(*h).copied().unwrap_or(0.0);
                let stop = if depth < self.max_depth {
                    1.0 - self.rule.split_probability(depth)
                } else {
                    1.0
                };
                stop.ln() + w.ln()
            }
            SymbolicTree::Unary(op, child) | SymbolicTree::Binary(op, child, _) => {
                if depth >= self.max_depth {
                    return f64::NEG_INFINITY;
                }
                let w = match self.ops.index_of(*op) {
                    Some(i) => self.w_op.as_slice()[i],
                    None => return f64::NEG_INFINITY,
                };
                let mut total = self.rule.split_probability(depth).ln() + w.ln();
                total += self.log_probability_at(child, depth + 1);
                if let SymbolicTree::Binary(_, _, right) = tree {
                    total += self.log_probability_at(right, depth + 1);
                }
                total
            }
        }
    }
}

/// Draws a tree from the truncated prior starting at the root.
pub fn sample_tree_from_prior<R: Rng + ?Sized>(
    rng: &mut R,
    ops: &OperatorSet,
    w_op: &WeightVector,
    w_ft: &WeightVector,
    rule: &SplitRule,
    max_depth: usize,
) -> SymbolicTree {
    TreeGenerator {
        ops,
        w_op,
        w_ft,
        rule,
        max_depth,
    }
    .sample(rng)
}
