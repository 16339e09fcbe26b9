//! Bayesian symbolic regression over forests of expression trees.

pub mod conjugate;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod expr;
pub mod hyper;
pub mod metrics;
pub mod par;
pub mod priors;
pub mod sampler;
pub mod selection;

pub use conjugate::{design_matrix, log_jmp_ensemble, nig_update, Dataset, NigParams};
pub use error::{Error, Result};
pub use expr::{parse_expression, Operator, OperatorSet, SymbolicTree};
pub use hyper::{HyperParams, KernelForm, NigPrior, ScanOrder};
pub use par::Execution;
pub use sampler::{run_chain, run_chains, ChainTrace};
pub use selection::{rank_models, RankedModels};
