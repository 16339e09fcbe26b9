//! Metropolis-within-partially-collapsed Gibbs sampler over symbolic forests.

pub mod moves;
pub mod trace;

use std::sync::Arc;

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::conjugate::{
    sample_model_params_full_conditional, sample_weights_full_conditional, score_design, ConjugateSummary,
    Dataset, DesignMatrix, NigParams,
};
use crate::error::{Error, Result};
use crate::expr::{SymbolicTree, TreeSummary};
use crate::hyper::{HyperParams, ScanOrder};
use crate::par::Execution;
use crate::priors::WeightVector;

pub use moves::{propose_grow, propose_prune, GrowProposal, MoveType, PruneProposal};
pub use trace::{read_raw_jsonl, AcceptanceCounts, ChainTrace, MoveRecord, RawRecord, TraceRecord};

const MAX_INIT_ATTEMPTS: usize = 10_000;

/// Independent per-purpose streams derived from one seed, so that extra draws
/// in one stage never shift another.
#[derive(Debug, Clone)]
pub struct ChainRng {
    pub init: ChaCha8Rng,
    pub moves: ChaCha8Rng,
    pub weights: ChaCha8Rng,
    pub params: ChaCha8Rng,
}

impl ChainRng {
    pub fn new(seed: u64) -> Self {
        let stream = |s: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(s);
            rng
        };
        ChainRng {
            init: stream(0),
            moves: stream(1),
            weights: stream(2),
            params: stream(3),
        }
    }
}

/// Current forest with cached columns, summaries and conjugate update.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub trees: Vec<Arc<SymbolicTree>>,
    pub weights: Vec<(WeightVector, WeightVector)>,
    pub beta: DVector<f64>,
    pub sigma2: f64,
    pub log_jmp: f64,
    pub summary: ConjugateSummary,
    columns: Vec<Vec<f64>>,
    tree_summaries: Vec<TreeSummary>,
    prior: NigParams,
}

impl ChainState {
    /// Builds a state around `trees`, drawing weights and parameters from
    /// their full conditionals. Degenerate forests are an error.
    pub fn from_trees(trees: Vec<SymbolicTree>, data: &Dataset, hyper: &HyperParams, rng: &mut ChainRng) -> Result<Self> {
        hyper.validate(data.p())?;
        if trees.len() != hyper.n_trees {
            return Err(Error::Config(format!("{} trees for K = {}", trees.len(), hyper.n_trees)));
        }
        let prior = hyper.nig_params()?;
        let mut columns = Vec::with_capacity(trees.len());
        let mut tree_summaries = Vec::with_capacity(trees.len());
        for t in &trees {
            t.validate(data.p(), &hyper.ops)?;
            columns.push(t.evaluate_columns(data.columns())?.values);
            tree_summaries.push(t.summarize(&hyper.ops, data.p())?);
        }
        let design = DesignMatrix::from_columns(data.n(), columns.iter().map(Vec::as_slice));
        let summary = score_design(&design, &tree_summaries, data, hyper, &prior)?;
        let weights = tree_summaries
            .iter()
            .map(|s| sample_weights_full_conditional(&mut rng.weights, s, &hyper.op_concentrations, &hyper.ft_concentrations))
            .collect::<Result<Vec<_>>>()?;
        let (beta, sigma2) = sample_model_params_full_conditional(&mut rng.params, &summary.posterior);
        Ok(ChainState {
            trees: trees.into_iter().map(Arc::new).collect(),
            weights,
            beta,
            sigma2,
            log_jmp: summary.log_jmp,
            summary,
            columns,
            tree_summaries,
            prior,
        })
    }

    /// Starts from bare terminals drawn from the proposal feature weights and
    /// applies one Metropolis-Hastings GROW move to each tree. Feature draws
    /// are repeated until the starting forest is non-degenerate.
    pub fn initialize(data: &Dataset, hyper: &HyperParams, rng: &mut ChainRng) -> Result<Self> {
        hyper.validate(data.p())?;
        for _ in 0..MAX_INIT_ATTEMPTS {
            let trees = (0..hyper.n_trees)
                .map(|_| SymbolicTree::Terminal(hyper.proposal_w_ft.sample_index(&mut rng.init)))
                .collect();
            match ChainState::from_trees(trees, data, hyper, rng) {
                Ok(mut state) => {
                    for j in 0..state.n_trees() {
                        mh_tree_step(&mut rng.init, &mut state, j, data, hyper)?;
                    }
                    return Ok(state);
                }
                Err(Error::Degenerate(_)) => continue,
                Err(e) => return Err(e),
            }
        }
        Err(Error::Degenerate(format!(
            "no non-degenerate initial forest after {MAX_INIT_ATTEMPTS} attempts"
        )))
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn prior(&self) -> &NigParams {
        &self.prior
    }

    fn score_with(
        &self,
        j: usize,
        column: &[f64],
        summary: &TreeSummary,
        data: &Dataset,
        hyper: &HyperParams,
    ) -> Result<Option<ConjugateSummary>> {
        let cols = self
            .columns
            .iter()
            .enumerate()
            .map(|(i, c)| if i == j { column } else { c.as_slice() });
        let design = DesignMatrix::from_columns(data.n(), cols);
        let mut sums = self.tree_summaries.clone();
        sums[j] = summary.clone();
        match score_design(&design, &sums, data, hyper, &self.prior) {
            Ok(s) => Ok(Some(s)),
            Err(Error::Degenerate(_)) => Ok(None),
            Err(e) => Err(e),
        }
    }
}

/// Result of one MH tree update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub kind: MoveType,
    pub accepted: bool,
    pub log_ratio: f64,
}

/// Metropolis-Hastings update of tree `j` against the collapsed target.
pub fn mh_tree_step<R: Rng + ?Sized>(
    rng: &mut R,
    state: &mut ChainState,
    j: usize,
    data: &Dataset,
    hyper: &HyperParams,
) -> Result<StepOutcome> {
    let current = Arc::clone(&state.trees[j]);
    let grow = current.size() == 0 || rng.random::<f64>() < hyper.p_grow;
    let (kind, candidate, log_fwd, log_rev) = if grow {
        let g = propose_grow(rng, &current, hyper)?;
        let rev = g.log_reverse(hyper, &current);
        (MoveType::Grow, g.candidate, g.log_forward, rev)
    } else {
        let p = propose_prune(rng, &current, hyper)?;
        let rev = p.log_reverse(hyper, &current);
        (MoveType::Prune, p.candidate, p.log_forward, rev)
    };

    let eval = candidate.evaluate_columns(data.columns())?;
    let cand_summary = candidate.summarize(&hyper.ops, data.p())?;
    let scored = if eval.finite {
        state.score_with(j, &eval.values, &cand_summary, data, hyper)?
    } else {
        None
    };
    let Some(scored) = scored else {
        return Ok(StepOutcome {
            kind,
            accepted: false,
            log_ratio: f64::NEG_INFINITY,
        });
    };

    let log_ratio = if state.log_jmp == f64::NEG_INFINITY {
        f64::INFINITY
    } else {
        scored.log_jmp - state.log_jmp + log_rev - log_fwd
    };
    let accepted = log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio;
    if accepted {
        state.trees[j] = Arc::new(candidate);
        state.columns[j] = eval.values;
        state.tree_summaries[j] = cand_summary;
        state.log_jmp = scored.log_jmp;
        state.summary = scored;
        debug_assert!({
            let trees: Vec<SymbolicTree> = state.trees.iter().map(|t| (**t).clone()).collect();
            let fresh = crate::conjugate::log_jmp_ensemble(&trees, data, hyper).unwrap();
            (fresh - state.log_jmp).abs() <= 1e-8 * (1.0 + fresh.abs())
        });
    }
    Ok(StepOutcome {
        kind,
        accepted,
        log_ratio,
    })
}

/// One sweep: MH update of every tree, then weights and `(beta, sigma2)`
/// from their full conditionals given the updated forest.
pub fn gibbs_sweep(rng: &mut ChainRng, state: &mut ChainState, data: &Dataset, hyper: &HyperParams) -> Result<Vec<MoveRecord>> {
    let mut order: Vec<usize> = (0..state.n_trees()).collect();
    if hyper.scan == ScanOrder::Random {
        order.shuffle(&mut rng.moves);
    }
    let mut moves = Vec::with_capacity(order.len());
    for j in order {
        let out = mh_tree_step(&mut rng.moves, state, j, data, hyper)?;
        moves.push(MoveRecord {
            tree: j,
            kind: out.kind,
            accepted: out.accepted,
        });
    }
    for (w, s) in state.weights.iter_mut().zip(&state.tree_summaries) {
        *w = sample_weights_full_conditional(&mut rng.weights, s, &hyper.op_concentrations, &hyper.ft_concentrations)?;
    }
    let (beta, sigma2) = sample_model_params_full_conditional(&mut rng.params, &state.summary.posterior);
    state.beta = beta;
    state.sigma2 = sigma2;
    Ok(moves)
}

/// Runs `hyper.niter` sweeps from a fresh initialization seeded by
/// `hyper.seed`.
pub fn run_chain(data: &Dataset, hyper: &HyperParams) -> Result<ChainTrace> {
    let mut rng = ChainRng::new(hyper.seed);
    let mut state = ChainState::initialize(data, hyper, &mut rng)?;
    let mut trace = ChainTrace {
        seed: hyper.seed,
        records: Vec::with_capacity(hyper.niter),
        counts: AcceptanceCounts::default(),
    };
    for iter in 1..=hyper.niter {
        let moves = gibbs_sweep(&mut rng, &mut state, data, hyper)?;
        trace.push(TraceRecord {
            iter,
            log_jmp: state.log_jmp,
            trees: state.trees.clone(),
            beta: state.beta.iter().copied().collect(),
            sigma2: state.sigma2,
            moves,
        });
    }
    Ok(trace)
}

/// Runs one chain per seed. Chains share the dataset read-only.
pub fn run_chains(data: &Dataset, hyper: &HyperParams, seeds: &[u64], exec: Execution) -> Vec<Result<ChainTrace>> {
    exec.map(seeds, |&seed| {
        let mut h = hyper.clone();
        h.seed = seed;
        run_chain(data, &h)
    })
}
