//! Sampler and prior configuration.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::conjugate::NigParams;
use crate::error::{Error, Result};
use crate::expr::OperatorSet;
use crate::priors::{Concentrations, SplitRule, WeightVector};

/// Diagonal Normal-Inverse-Gamma prior, expanded to `K + 1` dimensions
/// (intercept first) once the tree count is known.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NigPrior {
    pub nu: f64,
    pub lambda: f64,
    pub intercept_mean: f64,
    pub coefficient_mean: f64,
    pub intercept_variance: f64,
    pub coefficient_variance: f64,
}

impl Default for NigPrior {
    fn default() -> Self {
        NigPrior {
            nu: 1.0,
            lambda: 1.0,
            intercept_mean: 0.0,
            coefficient_mean: 1.0,
            intercept_variance: 1.0,
            coefficient_variance: 1.0,
        }
    }
}

impl NigPrior {
    pub fn params(&self, k: usize) -> Result<NigParams> {
        let mut mu = DVector::from_element(k + 1, self.coefficient_mean);
        mu[0] = self.intercept_mean;
        let mut diag = DVector::from_element(k + 1, self.coefficient_variance);
        diag[0] = self.intercept_variance;
        NigParams::new(self.nu, self.lambda, mu, DMatrix::from_diagonal(&diag))
    }
}

/// How the MH step scores GROW proposals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelForm {
    /// Proposal densities are the probabilities with which the proposal
    /// mechanism actually generates each candidate.
    #[default]
    Exact,
    /// The GROW density written as
    /// `log p_grow - log|I(T)| - log p_m + log Pi(T*) - log Pi(T)`.
    Published,
}

/// Order in which trees are visited within a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanOrder {
    #[default]
    Fixed,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub ops: OperatorSet,
    pub rule: SplitRule,
    pub op_concentrations: Concentrations,
    pub ft_concentrations: Concentrations,
    pub nig: NigPrior,
    pub proposal_ops: OperatorSet,
    pub proposal_w_op: WeightVector,
    pub proposal_w_ft: WeightVector,
    pub p_grow: f64,
    pub max_depth: usize,
    pub n_trees: usize,
    pub niter: usize,
    pub seed: u64,
    #[serde(default)]
    pub kernel: KernelForm,
    #[serde(default)]
    pub scan: ScanOrder,
}

impl HyperParams {
    /// Uniform weights and concentrations, `(alpha, delta0) = (0.95, 1.2)`,
    /// `p_grow = 0.5`, depth cap 6 and proposals equal to the prior.
    pub fn new(ops: OperatorSet, p: usize, n_trees: usize) -> Self {
        let n_ops = ops.len();
        HyperParams {
            proposal_ops: ops.clone(),
            ops,
            rule: SplitRule::default(),
            op_concentrations: Concentrations::uniform(n_ops),
            ft_concentrations: Concentrations::uniform(p),
            nig: NigPrior::default(),
            proposal_w_op: WeightVector::uniform(n_ops),
            proposal_w_ft: WeightVector::uniform(p),
            p_grow: 0.5,
            max_depth: 6,
            n_trees,
            niter: 1000,
            seed: 0,
            kernel: KernelForm::Exact,
            scan: ScanOrder::Fixed,
        }
    }

    pub fn with_default_ops(p: usize, n_trees: usize) -> Self {
        HyperParams::new(OperatorSet::default(), p, n_trees)
    }

    pub fn n_features(&self) -> usize {
        self.ft_concentrations.len()
    }

    pub fn nig_params(&self) -> Result<NigParams> {
        self.nig.params(self.n_trees)
    }

    /// Checks internal consistency and agreement with a dataset of `p`
    /// features.
    pub fn validate(&self, p: usize) -> Result<()> {
        self.rule.validate()?;
        if self.n_trees < 1 {
            return Err(Error::Config("at least one tree is required".into()));
        }
        if self.niter < 1 {
            return Err(Error::Config("niter must be at least 1".into()));
        }
        if !(self.p_grow > 0.0 && self.p_grow <= 1.0) {
            return Err(Error::Config(format!("p_grow must lie in (0,1], got {}", self.p_grow)));
        }
        if self.op_concentrations.len() != self.ops.len() {
            return Err(Error::Config(format!(
                "{} operator concentrations for {} operators",
                self.op_concentrations.len(),
                self.ops.len()
            )));
        }
        if self.ft_concentrations.len() != p || self.proposal_w_ft.len() != p {
            return Err(Error::Config(format!(
                "feature hyperparameters sized for p = {} but the data has p = {p}",
                self.ft_concentrations.len()
            )));
        }
        if self.proposal_w_op.len() != self.proposal_ops.len() {
            return Err(Error::Config("proposal operator weights do not match the proposal set".into()));
        }
        if let Some(op) = self.proposal_ops.ops().iter().find(|op| !self.ops.contains(**op)) {
            return Err(Error::Config(format!(
                "proposal operator `{op}` is not in the model operator set"
            )));
        }
        if !(self.nig.nu > 0.0 && self.nig.lambda > 0.0) {
            return Err(Error::Config("nu and lambda must be positive".into()));
        }
        self.nig_params().map(|_| ())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let h = HyperParams::with_default_ops(3, 2);
        h.validate(3).unwrap();
        assert!(h.validate(4).is_err());
        let nig = h.nig_params().unwrap();
        assert_eq!(nig.mu.as_slice(), &[0.0, 1.0, 1.0]);
    }

    #[test]
    fn rejects_bad_settings() {
        let mut h = HyperParams::with_default_ops(2, 1);
        h.p_grow = 0.0;
        assert!(h.validate(2).is_err());
        let mut h = HyperParams::with_default_ops(2, 1);
        h.n_trees = 0;
        assert!(h.validate(2).is_err());
        let mut h = HyperParams::with_default_ops(2, 1);
        h.proposal_ops = OperatorSet::from_names("add").unwrap();
        assert!(h.validate(2).is_err());
        h.proposal_w_op = WeightVector::uniform(1);
        h.validate(2).unwrap();
    }
}
