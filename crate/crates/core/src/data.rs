//! Benchmark generators and CSV input/output.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::conjugate::Dataset;
use crate::error::{Error, Result};
use crate::expr::{parse_expression, OperatorSet};
use crate::par::Execution;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FeatureDist {
    Normal { mean: f64, sd: f64 },
    Uniform { lo: f64, hi: f64 },
}

impl FeatureDist {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            FeatureDist::Normal { mean, sd } => mean.is_finite() && sd.is_finite() && sd >= 0.0,
            FeatureDist::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && lo <= hi,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid feature distribution {self:?}")))
        }
    }

    fn strictly_positive(&self) -> bool {
        matches!(*self, FeatureDist::Uniform { lo, .. } if lo > 0.0)
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            FeatureDist::Normal { mean, sd } => mean + sd * rng.sample::<f64, _>(rand_distr::StandardNormal),
            FeatureDist::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeynmanLaw {
    Gpe,
    Coulomb,
    Lorentz,
}

impl FeynmanLaw {
    pub fn feature_names(self) -> &'static [&'static str] {
        match self {
            FeynmanLaw::Gpe => &["m1", "m2", "r1", "r2"],
            FeynmanLaw::Coulomb => &["q1", "q2", "r"],
            FeynmanLaw::Lorentz => &["q", "Ef", "B", "v", "theta"],
        }
    }

    /// Ground truth over `x1..xp` in the order of [`FeynmanLaw::feature_names`].
    pub fn truth(self) -> &'static str {
        match self {
            FeynmanLaw::Gpe => "((x1*x2)*(inv(x4)+neg(inv(x3))))",
            FeynmanLaw::Coulomb => "((x1*x2)*pow2(inv(x3)))",
            FeynmanLaw::Lorentz => "((x1*x2)+((x1*(x3*x4))*sin(x5)))",
        }
    }

    /// Features that appear under `inv`.
    fn inverted(self) -> &'static [usize] {
        match self {
            FeynmanLaw::Gpe => &[2, 3],
            FeynmanLaw::Coulomb => &[2],
            FeynmanLaw::Lorentz => &[],
        }
    }

    pub fn default_ranges(self) -> Vec<FeatureDist> {
        let u = FeatureDist::Uniform { lo: 1.0, hi: 5.0 };
        let mut out = vec![u; self.feature_names().len()];
        if self == FeynmanLaw::Lorentz {
            out[4] = FeatureDist::Uniform {
                lo: 0.0,
                hi: std::f64::consts::PI,
            };
        }
        out
    }

    pub fn evaluate(self, x: &[f64]) -> f64 {
        match self {
            FeynmanLaw::Gpe => x[0] * x[1] * (1.0 / x[3] - 1.0 / x[2]),
            FeynmanLaw::Coulomb => x[0] * x[1] / (x[2] * x[2]),
            FeynmanLaw::Lorentz => x[0] * (x[1] + x[2] * x[3] * x[4].sin()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Benchmark {
    Sim5x,
    Gpe,
    Coulomb,
    Lorentz,
    Custom,
}

impl Benchmark {
    pub fn law(self) -> Option<FeynmanLaw> {
        match self {
            Benchmark::Gpe => Some(FeynmanLaw::Gpe),
            Benchmark::Coulomb => Some(FeynmanLaw::Coulomb),
            Benchmark::Lorentz => Some(FeynmanLaw::Lorentz),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSpec {
    pub benchmark: Benchmark,
    pub n: usize,
    pub sigma2: f64,
    pub seed: u64,
    /// Per-feature distributions; benchmark defaults when absent.
    #[serde(default)]
    pub features: Option<Vec<FeatureDist>>,
    /// Generating expression for `custom`.
    #[serde(default)]
    pub expression: Option<String>,
}

/// A generated dataset and its ground truth as grammar text.
#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub dataset: Dataset,
    pub truth: String,
}

pub const SIMULATED_TRUTH: &str = "((x1+x2)*x3)";

fn check_common(n: usize, sigma2: f64) -> Result<()> {
    if n < 1 {
        return Err(Error::Config("n must be at least 1".into()));
    }
    if !(sigma2 >= 0.0 && sigma2.is_finite()) {
        return Err(Error::Config(format!("sigma2 must be >= 0, got {sigma2}")));
    }
    Ok(())
}

/// Row-wise generation: features from `dists`, then `f(x) + N(0, sigma2)`.
fn generate_rows<F>(n: usize, sigma2: f64, seed: u64, dists: &[FeatureDist], names: Vec<String>, f: F) -> Result<Dataset>
where
    F: Fn(&[f64]) -> f64,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma2.sqrt()).map_err(|e| Error::Config(e.to_string()))?;
    let mut columns = vec![Vec::with_capacity(n); dists.len()];
    let mut y = Vec::with_capacity(n);
    let mut row = vec![0.0; dists.len()];
    for _ in 0..n {
        for (j, d) in dists.iter().enumerate() {
            row[j] = d.sample(&mut rng);
            columns[j].push(row[j]);
        }
        let signal = f(&row);
        if !signal.is_finite() {
            return Err(Error::Config("generating law produced a non-finite response".into()));
        }
        let eps = if sigma2 > 0.0 { noise.sample(&mut rng) } else { 0.0 };
        y.push(signal + eps);
    }
    Dataset::new(columns, y, Some(names))
}

/// `y = 5 (x1 + x2) x3 + eps` with `x_j ~ N(2j + 2, 1)`.
pub fn generate_simulated(n: usize, sigma2: f64, seed: u64) -> Result<Dataset> {
    check_common(n, sigma2)?;
    let dists: Vec<FeatureDist> = (1..=3)
        .map(|j| FeatureDist::Normal {
            mean: 2.0 * j as f64 + 2.0,
            sd: 1.0,
        })
        .collect();
    let names = vec!["x1".into(), "x2".into(), "x3".into()];
    generate_rows(n, sigma2, seed, &dists, names, |x| 5.0 * (x[0] + x[1]) * x[2])
}

pub fn generate_feynman(
    law: FeynmanLaw,
    n: usize,
    sigma2: f64,
    seed: u64,
    ranges: Option<&[FeatureDist]>,
) -> Result<Generated> {
    check_common(n, sigma2)?;
    let dists = match ranges {
        Some(r) => r.to_vec(),
        None => law.default_ranges(),
    };
    let names = law.feature_names();
    if dists.len() != names.len() {
        return Err(Error::Config(format!(
            "{} feature ranges for {} features",
            dists.len(),
            names.len()
        )));
    }
    for d in &dists {
        d.validate()?;
    }
    for &j in law.inverted() {
        if !dists[j].strictly_positive() {
            return Err(Error::Config(format!(
                "feature `{}` is inverted and needs a strictly positive range",
                names[j]
            )));
        }
    }
    let dataset = generate_rows(
        n,
        sigma2,
        seed,
        &dists,
        names.iter().map(|s| s.to_string()).collect(),
        |x| law.evaluate(x),
    )?;
    Ok(Generated {
        dataset,
        truth: law.truth().to_string(),
    })
}

pub fn generate(spec: &BenchmarkSpec) -> Result<Generated> {
    check_common(spec.n, spec.sigma2)?;
    match spec.benchmark {
        Benchmark::Sim5x => {
            if spec.features.is_some() {
                return Err(Error::Config("sim5x uses fixed feature distributions".into()));
            }
            Ok(Generated {
                dataset: generate_simulated(spec.n, spec.sigma2, spec.seed)?,
                truth: SIMULATED_TRUTH.to_string(),
            })
        }
        Benchmark::Custom => {
            let text = spec
                .expression
                .as_deref()
                .ok_or_else(|| Error::Config("custom benchmark needs an expression".into()))?;
            let dists = spec
                .features
                .as_deref()
                .ok_or_else(|| Error::Config("custom benchmark needs feature distributions".into()))?;
            if dists.is_empty() {
                return Err(Error::Config("custom benchmark needs at least one feature".into()));
            }
            for d in dists {
                d.validate()?;
            }
            let tree = parse_expression(text, dists.len(), &OperatorSet::default())?;
            let names = (1..=dists.len()).map(|j| format!("x{j}")).collect();
            let dataset = generate_rows(spec.n, spec.sigma2, spec.seed, dists, names, |x| {
                tree.evaluate(x).unwrap_or(f64::NAN)
            })?;
            Ok(Generated {
                dataset,
                truth: tree.canonical_string(),
            })
        }
        b => generate_feynman(b.law().expect("Feynman benchmark"), spec.n, spec.sigma2, spec.seed, spec.features.as_deref()),
    }
}

/// One dataset per seed, otherwise following `spec`.
pub fn generate_replicates(spec: &BenchmarkSpec, seeds: &[u64], exec: Execution) -> Vec<Result<Generated>> {
    exec.map(seeds, |&seed| {
        let mut s = spec.clone();
        s.seed = seed;
        generate(&s)
    })
}

fn csv_error(e: csv::Error) -> Error {
    match e.kind() {
        csv::ErrorKind::Io(_) => Error::Io(e.to_string()),
        _ => {
            let row = e.position().map_or(0, |p| p.line() as usize);
            Error::Parse {
                row,
                column: 0,
                message: e.to_string(),
            }
        }
    }
}

/// Reads a CSV with a header row. The target is the named column, or the
/// last column when `target` is `None`.
pub fn read_csv(path: &Path, target: Option<&str>) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => Error::Io(format!("{}: {e}", path.display())),
            _ => csv_error(e),
        })?;
    let header: Vec<String> = reader.headers().map_err(csv_error)?.iter().map(str::to_string).collect();
    if header.len() < 2 {
        return Err(Error::Parse {
            row: 1,
            column: header.len(),
            message: "need at least one feature column and a target column".into(),
        });
    }
    let t = match target {
        Some(name) => header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Config(format!("target column `{name}` not found")))?,
        None => header.len() - 1,
    };
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); header.len() - 1];
    let mut y = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(csv_error)?;
        let row = i + 2;
        if rec.len() != header.len() {
            return Err(Error::Parse {
                row,
                column: rec.len().min(header.len()) + 1,
                message: format!("expected {} fields, found {}", header.len(), rec.len()),
            });
        }
        for (c, cell) in rec.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row,
                column: c + 1,
                message: format!("`{cell}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    column: c + 1,
                    message: format!("`{cell}` is not finite"),
                });
            }
            match c.cmp(&t) {
                std::cmp::Ordering::Equal => y.push(v),
                std::cmp::Ordering::Less => columns[c].push(v),
                std::cmp::Ordering::Greater => columns[c - 1].push(v),
            }
        }
    }
    if y.is_empty() {
        return Err(Error::Parse {
            row: 2,
            column: 1,
            message: "no data rows".into(),
        });
    }
    let names = header
        .iter()
        .enumerate()
        .filter(|(c, _)| *c != t)
        .map(|(_, h)| h.clone())
        .collect();
    Dataset::new(columns, y, Some(names))
}

/// Writes features then the response (`y`) with shortest round-trip floats.
pub fn write_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    let mut header: Vec<&str> = dataset.feature_names().iter().map(String::as_str).collect();
    header.push("y");
    w.write_record(&header).map_err(csv_error)?;
    let mut row = Vec::with_capacity(header.len());
    for i in 0..dataset.n() {
        row.clear();
        row.extend(dataset.columns().iter().map(|c| c[i].to_string()));
        row.push(dataset.y()[i].to_string());
        w.write_record(&row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}
