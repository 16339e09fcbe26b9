//! GROW and PRUNE proposals with forward and reverse log-kernels.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::SymbolicTree;
use crate::hyper::{HyperParams, KernelForm};
use crate::priors::{log_tree_prior, TreeGenerator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MoveType {
    Grow,
    Prune,
}

impl MoveType {
    pub fn name(self) -> &'static str {
        match self {
            MoveType::Grow => "grow",
            MoveType::Prune => "prune",
        }
    }
}

/// Probability of choosing GROW from a tree with `size` nonterminals. Bare
/// terminals always grow.
pub fn grow_choice_probability(size: usize, p_grow: f64) -> f64 {
    if size == 0 {
        1.0
    } else {
        p_grow
    }
}

pub fn prune_choice_probability(size: usize, p_grow: f64) -> f64 {
    if size == 0 {
        0.0
    } else {
        1.0 - p_grow
    }
}

/// Generator used by GROW: proposal operators and weights, the prior split
/// rule, and the depth cap.
pub fn proposal_generator(hyper: &HyperParams) -> TreeGenerator<'_> {
    TreeGenerator {
        ops: &hyper.proposal_ops,
        w_op: &hyper.proposal_w_op,
        w_ft: &hyper.proposal_w_ft,
        rule: &hyper.rule,
        max_depth: hyper.max_depth,
    }
}

fn proposal_log_prior(tree: &SymbolicTree, hyper: &HyperParams) -> f64 {
    log_tree_prior(
        tree,
        &hyper.proposal_ops,
        &hyper.proposal_w_op,
        &hyper.proposal_w_ft,
        &hyper.rule,
    )
    .unwrap_or(f64::NEG_INFINITY)
}

/// Log density of growing `from` into `to` by replacing a terminal at
/// `depth` with `subtree`.
pub fn grow_log_kernel(
    hyper: &HyperParams,
    from: &SymbolicTree,
    to: &SymbolicTree,
    depth: usize,
    subtree: &SymbolicTree,
) -> f64 {
    let choice = grow_choice_probability(from.size(), hyper.p_grow).ln();
    let select = -(from.terminal_count() as f64).ln();
    match hyper.kernel {
        KernelForm::Exact => choice + select + proposal_generator(hyper).log_probability_at(subtree, depth),
        KernelForm::Published => {
            choice + select - hyper.rule.split_probability(depth).ln() + proposal_log_prior(to, hyper)
                - proposal_log_prior(from, hyper)
        }
    }
}

/// Log density of pruning a nonterminal of `from` to feature `feature`.
pub fn prune_log_kernel(hyper: &HyperParams, from: &SymbolicTree, feature: usize) -> f64 {
    let choice = prune_choice_probability(from.size(), hyper.p_grow).ln();
    let select = -(from.size() as f64).ln();
    let w = hyper.proposal_w_ft.as_slice().get(feature).copied().unwrap_or(0.0);
    choice + select + w.ln()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrowProposal {
    pub candidate: SymbolicTree,
    pub log_forward: f64,
    /// Depth of the replaced terminal.
    pub depth: usize,
    pub site: usize,
    pub replaced_feature: usize,
    pub subtree: SymbolicTree,
}

impl GrowProposal {
    /// Log density of the move taking the candidate back to `original`.
    /// A nonterminal subtree is undone by PRUNE; a relabelled terminal by
    /// another GROW.
    pub fn log_reverse(&self, hyper: &HyperParams, original: &SymbolicTree) -> f64 {
        if self.subtree.is_terminal() {
            let back = SymbolicTree::Terminal(self.replaced_feature);
            grow_log_kernel(hyper, &self.candidate, original, self.depth, &back)
        } else {
            prune_log_kernel(hyper, &self.candidate, self.replaced_feature)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PruneProposal {
    pub candidate: SymbolicTree,
    pub log_forward: f64,
    pub feature: usize,
    pub depth: usize,
    pub site: usize,
    pub removed: SymbolicTree,
}

impl PruneProposal {
    /// GROW that regrows the removed subtree.
    pub fn log_reverse(&self, hyper: &HyperParams, original: &SymbolicTree) -> f64 {
        grow_log_kernel(hyper, &self.candidate, original, self.depth, &self.removed)
    }
}

/// Replaces a uniformly chosen terminal with a subtree drawn from the
/// proposal prior at that terminal's depth.
pub fn propose_grow<R: Rng + ?Sized>(rng: &mut R, tree: &SymbolicTree, hyper: &HyperParams) -> Result<GrowProposal> {
    let sites = tree.terminal_sites();
    let site = sites[rng.random_range(0..sites.len())];
    let replaced_feature = match tree.subtree(site.index) {
        Some(SymbolicTree::Terminal(h)) => *h,
        _ => unreachable!("terminal site"),
    };
    let subtree = proposal_generator(hyper).sample_at(rng, site.depth);
    let candidate = tree
        .replace_subtree(site.index, subtree.clone())
        .expect("site index is in range");
    let log_forward = grow_log_kernel(hyper, tree, &candidate, site.depth, &subtree);
    Ok(GrowProposal {
        candidate,
        log_forward,
        depth: site.depth,
        site: site.index,
        replaced_feature,
        subtree,
    })
}

/// Collapses a uniformly chosen nonterminal to a terminal drawn from the
/// proposal feature weights.
pub fn propose_prune<R: Rng + ?Sized>(rng: &mut R, tree: &SymbolicTree, hyper: &HyperParams) -> Result<PruneProposal> {
    let sites = tree.nonterminal_sites();
    if sites.is_empty() {
        return Err(Error::NotApplicable("cannot prune a bare terminal".into()));
    }
    let site = sites[rng.random_range(0..sites.len())];
    let removed = tree.subtree(site.index).expect("site index is in range").clone();
    let feature = hyper.proposal_w_ft.sample_index(rng);
    let candidate = tree
        .replace_subtree(site.index, SymbolicTree::Terminal(feature))
        .expect("site index is in range");
    let log_forward = prune_log_kernel(hyper, tree, feature);
    Ok(PruneProposal {
        candidate,
        log_forward,
        feature,
        depth: site.depth,
        site: site.index,
        removed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{Operator, OperatorSet};
    use crate::priors::WeightVector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn x(i: usize) -> SymbolicTree {
        SymbolicTree::x(i)
    }

    #[test]
    fn prune_kernel_hand_sum() {
        let hyper = HyperParams::with_default_ops(3, 1);
        let tree = SymbolicTree::add(x(1), x(2));
        let got = prune_log_kernel(&hyper, &tree, 2);
        let want = (1.0 - hyper.p_grow).ln() - 1f64.ln() + (1.0f64 / 3.0).ln();
        assert!((got - want).abs() < 1e-14);
    }

    #[test]
    fn published_grow_kernel_four_terms() {
        let mut hyper = HyperParams::with_default_ops(3, 1);
        hyper.kernel = KernelForm::Published;
        let from = x(1);
        let sub = SymbolicTree::add(x(2), x(3));
        let to = sub.clone();
        let prior = |t: &SymbolicTree| {
            log_tree_prior(t, &hyper.proposal_ops, &hyper.proposal_w_op, &hyper.proposal_w_ft, &hyper.rule).unwrap()
        };
        // forced grow: move-choice term is log 1
        let want = 0.0 - 1f64.ln() - hyper.rule.split_probability(0).ln() + prior(&to) - prior(&from);
        let got = grow_log_kernel(&hyper, &from, &to, 0, &sub);
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn exact_grow_kernel_is_generation_probability() {
        let hyper = HyperParams::with_default_ops(3, 1);
        let from = SymbolicTree::mul(x(1), x(2));
        let sub = SymbolicTree::unary(Operator::Exp, x(3));
        let to = SymbolicTree::mul(sub.clone(), x(2));
        let gen = proposal_generator(&hyper).log_probability_at(&sub, 1);
        let want = hyper.p_grow.ln() - 2f64.ln() + gen;
        assert!((grow_log_kernel(&hyper, &from, &to, 1, &sub) - want).abs() < 1e-14);
    }

    #[test]
    fn prune_requires_nonterminal() {
        let hyper = HyperParams::with_default_ops(2, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            propose_prune(&mut rng, &x(1), &hyper),
            Err(Error::NotApplicable(_))
        ));
    }

    #[test]
    fn grow_then_prune_restores_tree() {
        let hyper = HyperParams::with_default_ops(3, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let tree = SymbolicTree::add(x(1), SymbolicTree::unary(Operator::Sin, x(2)));
        for _ in 0..200 {
            let g = propose_grow(&mut rng, &tree, &hyper).unwrap();
            assert!(g.log_forward.is_finite());
            if !g.subtree.is_terminal() {
                let back = g
                    .candidate
                    .replace_subtree(g.site, SymbolicTree::Terminal(g.replaced_feature))
                    .unwrap();
                assert_eq!(back, tree);
            }
            assert!(g.log_reverse(&hyper, &tree).is_finite());
        }
    }

    #[test]
    fn identity_grow_at_single_terminal() {
        let mut hyper = HyperParams::new(OperatorSet::from_names("add").unwrap(), 1, 1);
        hyper.max_depth = 0;
        hyper.proposal_w_ft = WeightVector::uniform(1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = propose_grow(&mut rng, &x(1), &hyper).unwrap();
        assert_eq!(g.candidate, x(1));
        // |I(T)| = 1 and the only outcome has probability one
        assert_eq!(g.log_forward, 0.0);
        assert_eq!(g.log_reverse(&hyper, &x(1)), g.log_forward);
    }
}
