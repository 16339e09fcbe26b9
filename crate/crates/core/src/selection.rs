//! Top-r ranking of visited forests by log-JMP and point estimates for the
//! retained models.

use std::collections::hash_map::Entry;
use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::conjugate::{design_matrix, summarize_forest, Dataset};
use crate::error::{Error, Result};
use crate::expr::SymbolicTree;
use crate::hyper::HyperParams;
use crate::metrics::{mged, rmse};
use crate::par::Execution;
use crate::sampler::ChainTrace;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub rank: usize,
    pub expressions: Vec<String>,
    pub log_jmp: f64,
    /// Posterior-mean coefficients of the trees, intercept excluded.
    pub beta_hat: Vec<f64>,
    pub intercept: f64,
    pub rmse: f64,
    pub mged: Option<usize>,
    #[serde(skip)]
    pub trees: Vec<SymbolicTree>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedModels {
    pub entries: Vec<RankedEntry>,
    pub r: usize,
}

impl RankedModels {
    /// Fills in `mged` for every entry.
    pub fn attach_mged(&mut self, truth: &SymbolicTree) {
        for e in &mut self.entries {
            e.mged = Some(mged(&e.trees, truth));
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(&self.entries).expect("entries serialize")
    }
}

/// `yhat = T(X) mu*` together with `mu*` (intercept first).
pub fn fitted_values(forest: &[SymbolicTree], data: &Dataset, hyper: &HyperParams) -> Result<(Vec<f64>, DVector<f64>)> {
    let mut h = hyper.clone();
    h.n_trees = forest.len();
    let summary = summarize_forest(forest, data, &h)?;
    let design = design_matrix(forest, data)?;
    let mu = summary.posterior.mu_star;
    let y_hat = (&design.matrix * &mu).iter().copied().collect();
    Ok((y_hat, mu))
}

struct Candidate {
    trees: Vec<Arc<SymbolicTree>>,
    log_jmp: f64,
    order: (usize, usize),
}

/// Ranks the distinct forests visited by the chain.
pub fn rank_models(trace: &ChainTrace, data: &Dataset, hyper: &HyperParams, r: usize) -> Result<RankedModels> {
    rank_models_pooled(std::slice::from_ref(trace), data, hyper, r, Execution::Sequential)
}

/// Ranks the distinct forests visited by any of the chains. Forests are
/// keyed by the ordered tuple of per-tree canonical strings; ties in log-JMP
/// go to the earliest visit (chain order, then iteration).
pub fn rank_models_pooled(
    traces: &[ChainTrace],
    data: &Dataset,
    hyper: &HyperParams,
    r: usize,
    exec: Execution,
) -> Result<RankedModels> {
    if r == 0 {
        return Err(Error::Config("r must be at least 1".into()));
    }
    if traces.iter().all(ChainTrace::is_empty) {
        return Err(Error::Config("trace is empty".into()));
    }
    let mut seen: HashMap<Vec<String>, usize> = HashMap::new();
    let mut candidates: Vec<Candidate> = Vec::new();
    for (c, trace) in traces.iter().enumerate() {
        let mut last: Option<&[Arc<SymbolicTree>]> = None;
        for rec in &trace.records {
            // consecutive repeats share their Arcs; skip without re-keying
            if let Some(prev) = last {
                if prev.iter().zip(&rec.trees).all(|(a, b)| Arc::ptr_eq(a, b)) {
                    continue;
                }
            }
            last = Some(&rec.trees);
            if let Entry::Vacant(slot) = seen.entry(rec.expressions()) {
                slot.insert(candidates.len());
                candidates.push(Candidate {
                    trees: rec.trees.clone(),
                    log_jmp: rec.log_jmp,
                    order: (c, rec.iter),
                });
            }
        }
    }
    candidates.sort_by(|a, b| b.log_jmp.total_cmp(&a.log_jmp).then(a.order.cmp(&b.order)));
    candidates.truncate(r);

    let entries = exec.map(&candidates, |cand| -> Result<RankedEntry> {
        let trees: Vec<SymbolicTree> = cand.trees.iter().map(|t| (**t).clone()).collect();
        let summary = summarize_forest(&trees, data, hyper)?;
        let design = design_matrix(&trees, data)?;
        let mu = &summary.posterior.mu_star;
        let y_hat: Vec<f64> = (&design.matrix * mu).iter().copied().collect();
        Ok(RankedEntry {
            rank: 0,
            expressions: trees.iter().map(SymbolicTree::canonical_string).collect(),
            log_jmp: summary.log_jmp,
            beta_hat: mu.iter().skip(1).copied().collect(),
            intercept: mu[0],
            rmse: rmse(data.y(), &y_hat)?,
            mged: None,
            trees,
        })
    });
    let mut entries = entries.into_iter().collect::<Result<Vec<_>>>()?;
    for (i, e) in entries.iter_mut().enumerate() {
        e.rank = i + 1;
    }
    Ok(RankedModels { entries, r })
}
