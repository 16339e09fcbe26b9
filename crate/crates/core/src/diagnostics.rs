//! Geweke and Gelman-Rubin convergence diagnostics for scalar chain
//! functionals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampler::{ChainTrace, RawRecord};

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var)
}

/// Geweke Z comparing the first `first_frac` and last `last_frac` of the
/// chain with plain sample variances.
pub fn geweke_z(chain: &[f64], first_frac: f64, last_frac: f64) -> Result<f64> {
    if chain.len() < 20 {
        return Err(Error::Diagnostic(format!("chain of length {} is shorter than 20", chain.len())));
    }
    if !(first_frac > 0.0 && last_frac > 0.0 && first_frac + last_frac <= 1.0) {
        return Err(Error::Config(format!("invalid Geweke windows ({first_frac}, {last_frac})")));
    }
    let n = chain.len();
    let na = ((first_frac * n as f64).floor() as usize).max(2);
    let nb = ((last_frac * n as f64).floor() as usize).max(2);
    let (ma, va) = mean_var(&chain[..na]);
    let (mb, vb) = mean_var(&chain[n - nb..]);
    let se2 = va / na as f64 + vb / nb as f64;
    if !(se2 > 0.0) {
        return Err(Error::Diagnostic("both Geweke windows have zero variance".into()));
    }
    Ok((ma - mb) / se2.sqrt())
}

/// Potential scale reduction factor over `m >= 2` equal-length chains.
pub fn gelman_rubin(chains: &[Vec<f64>]) -> Result<f64> {
    if chains.len() < 2 {
        return Err(Error::Diagnostic("at least two chains are required".into()));
    }
    let n = chains[0].len();
    if chains.iter().any(|c| c.len() != n) {
        return Err(Error::Diagnostic("chains differ in length".into()));
    }
    if n < 10 {
        return Err(Error::Diagnostic(format!("chain length {n} is shorter than 10")));
    }
    let stats: Vec<(f64, f64)> = chains.iter().map(|c| mean_var(c)).collect();
    let m = chains.len() as f64;
    let nf = n as f64;
    let w = stats.iter().map(|s| s.1).sum::<f64>() / m;
    if !(w > 0.0) {
        return Err(Error::Diagnostic("within-chain variance is zero".into()));
    }
    let grand = stats.iter().map(|s| s.0).sum::<f64>() / m;
    let b = nf / (m - 1.0) * stats.iter().map(|s| (s.0 - grand).powi(2)).sum::<f64>();
    let var_plus = (nf - 1.0) / nf * w + b / nf;
    Ok((var_plus / w).sqrt())
}

/// Scalar chain functional extracted per iteration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Functional {
    LogJmp,
    Sigma2,
    /// `beta[i]`, with index 0 the intercept.
    Beta(usize),
}

impl Functional {
    /// Parses `log_jmp`, `sigma2` or `beta<i>` / `beta[i]`.
    pub fn parse(name: &str) -> Result<Functional> {
        match name {
            "log_jmp" => Ok(Functional::LogJmp),
            "sigma2" => Ok(Functional::Sigma2),
            _ => {
                let idx = name
                    .strip_prefix("beta")
                    .map(|s| s.trim_start_matches('[').trim_end_matches(']'))
                    .and_then(|s| s.parse::<usize>().ok());
                idx.map(Functional::Beta)
                    .ok_or_else(|| Error::Config(format!("unknown chain functional `{name}`")))
            }
        }
    }

    pub fn name(&self) -> String {
        match self {
            Functional::LogJmp => "log_jmp".into(),
            Functional::Sigma2 => "sigma2".into(),
            Functional::Beta(i) => format!("beta{i}"),
        }
    }

    fn pick(&self, log_jmp: f64, sigma2: f64, beta: &[f64]) -> Result<f64> {
        match self {
            Functional::LogJmp => Ok(log_jmp),
            Functional::Sigma2 => Ok(sigma2),
            Functional::Beta(i) => beta
                .get(*i)
                .copied()
                .ok_or_else(|| Error::Config(format!("beta index {i} out of range"))),
        }
    }

    pub fn extract(&self, trace: &ChainTrace) -> Result<Vec<f64>> {
        trace
            .records
            .iter()
            .map(|r| self.pick(r.log_jmp, r.sigma2, &r.beta))
            .collect()
    }

    pub fn extract_raw(&self, records: &[RawRecord]) -> Result<Vec<f64>> {
        records
            .iter()
            .map(|r| self.pick(r.log_jmp, r.sigma2, &r.beta))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticEntry {
    pub statistic: String,
    pub value: f64,
    pub chain_functional: String,
    pub threshold: f64,
    pub pass: bool,
}

pub const GEWEKE_THRESHOLD: f64 = 2.0;
pub const RHAT_THRESHOLD: f64 = 1.1;

pub fn geweke_entry(chain: &[f64], functional: &str, threshold: f64) -> Result<DiagnosticEntry> {
    let z = geweke_z(chain, 0.1, 0.5)?;
    Ok(DiagnosticEntry {
        statistic: "geweke_z".into(),
        value: z,
        chain_functional: functional.into(),
        threshold,
        pass: z.abs() <= threshold,
    })
}

pub fn gelman_rubin_entry(chains: &[Vec<f64>], functional: &str, threshold: f64) -> Result<DiagnosticEntry> {
    let r = gelman_rubin(chains)?;
    Ok(DiagnosticEntry {
        statistic: "gelman_rubin".into(),
        value: r,
        chain_functional: functional.into(),
        threshold,
        pass: r <= threshold,
    })
}
