//! Expression design matrix, Normal-Inverse-Gamma updates, the collapsed
//! joint marginal posterior of a forest (log-JMP), and conjugate draws.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::expr::{SymbolicTree, TreeSummary};
use crate::hyper::HyperParams;
use crate::par::Execution;
use crate::priors::{log_dirichlet_multinomial, Concentrations, WeightVector};

/// Response vector and primary features, stored column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    columns: Vec<Vec<f64>>,
    y: Vec<f64>,
    feature_names: Vec<String>,
}

impl Dataset {
    /// Builds a dataset from feature columns. Names default to `x1..xp`.
    pub fn new(columns: Vec<Vec<f64>>, y: Vec<f64>, feature_names: Option<Vec<String>>) -> Result<Self> {
        let n = y.len();
        if n == 0 {
            return Err(Error::Config("dataset has no rows".into()));
        }
        if columns.is_empty() {
            return Err(Error::Config("dataset has no features".into()));
        }
        if let Some((j, c)) = columns.iter().enumerate().find(|(_, c)| c.len() != n) {
            return Err(Error::Config(format!(
                "feature column {} has {} rows, expected {n}",
                j + 1,
                c.len()
            )));
        }
        if y.iter().chain(columns.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::Config("dataset contains non-finite values".into()));
        }
        let p = columns.len();
        let feature_names = match feature_names {
            Some(names) if names.len() == p => names,
            Some(names) => {
                return Err(Error::Config(format!("{} feature names for {p} features", names.len())))
            }
            None => (1..=p).map(|j| format!("x{j}")).collect(),
        };
        Ok(Dataset {
            columns,
            y,
            feature_names,
        })
    }

    /// Builds a dataset from row-major features.
    pub fn from_rows(rows: &[Vec<f64>], y: Vec<f64>) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::Config("ragged feature rows".into()));
        }
        let columns = (0..p).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
        Dataset::new(columns, y, None)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[i]).collect()
    }
}

/// Normal-Inverse-Gamma hyperparameters `(nu, lambda, mu, Sigma)` with the
/// prior precision cached.
#[derive(Debug, Clone, PartialEq)]
pub struct NigParams {
    pub nu: f64,
    pub lambda: f64,
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
    precision: DMatrix<f64>,
    precision_mu: DVector<f64>,
}

impl NigParams {
    pub fn new(nu: f64, lambda: f64, mu: DVector<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        if !(nu > 0.0 && lambda > 0.0) {
            return Err(Error::Domain("nu and lambda must be positive".into()));
        }
        if sigma.nrows() != mu.len() || sigma.ncols() != mu.len() {
            return Err(Error::Domain("Sigma must be square and match mu".into()));
        }
        let chol = Cholesky::new(sigma.clone())
            .ok_or_else(|| Error::Domain("Sigma is not positive definite".into()))?;
        let precision = symmetrize(chol.inverse());
        let precision_mu = &precision * &mu;
        Ok(NigParams {
            nu,
            lambda,
            mu,
            sigma,
            precision,
            precision_mu,
        })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// `Sigma^{-1}`.
    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }
}

/// Posterior NIG quantities `(nu*, lambda*, mu*, Sigma*)`.
#[derive(Debug, Clone)]
pub struct NigPosterior {
    pub nu_star: f64,
    pub lambda_star: f64,
    pub mu_star: DVector<f64>,
    pub sigma_star: DMatrix<f64>,
    pub log_det_sigma_star: f64,
    /// Cholesky factor of `Sigma*^{-1} = Sigma^{-1} + T'T`.
    posterior_precision: Cholesky<f64, Dyn>,
}

/// A forest's posterior NIG quantities plus its log-JMP value.
#[derive(Debug, Clone)]
pub struct ConjugateSummary {
    pub posterior: NigPosterior,
    pub log_jmp: f64,
}

/// `n x (K+1)` expression design matrix with an intercept column first.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub matrix: DMatrix<f64>,
    pub finite: bool,
}

impl DesignMatrix {
    /// Assembles the matrix from an intercept and precomputed tree columns.
    pub fn from_columns<'a, I>(n: usize, columns: I) -> DesignMatrix
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut data = vec![1.0; n];
        let mut k1 = 1;
        for col in columns {
            debug_assert_eq!(col.len(), n);
            data.extend_from_slice(col);
            k1 += 1;
        }
        let finite = data.iter().all(|v| v.is_finite());
        DesignMatrix {
            matrix: DMatrix::from_vec(n, k1, data),
            finite,
        }
    }
}

/// Evaluates each tree over the dataset into the design matrix.
pub fn design_matrix(trees: &[SymbolicTree], data: &Dataset) -> Result<DesignMatrix> {
    let cols = trees
        .iter()
        .map(|t| t.evaluate_columns(data.columns()).map(|c| c.values))
        .collect::<Result<Vec<_>>>()?;
    Ok(DesignMatrix::from_columns(data.n(), cols.iter().map(Vec::as_slice)))
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}

fn cholesky_with_jitter(a: DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    let dim = a.nrows();
    let trace = a.trace();
    if let Some(chol) = Cholesky::new(a.clone()) {
        return Some(chol);
    }
    let jitter = 1e-10 * trace / dim as f64;
    if !(jitter.is_finite() && jitter > 0.0) {
        return None;
    }
    let mut a = a;
    for i in 0..dim {
        a[(i, i)] += jitter;
    }
    Cholesky::new(a)
}

/// Conjugate NIG update of `prior` against design `t` and response `y`.
///
/// `lambda*` is evaluated as `lambda + |y - T mu*|^2 + (mu* - mu)' Sigma^{-1} (mu* - mu)`,
/// algebraically equal to `lambda + y'y + mu' Sigma^{-1} mu - mu*' Sigma*^{-1} mu*`.
pub fn nig_update(prior: &NigParams, t: &DMatrix<f64>, y: &[f64]) -> Result<NigPosterior> {
    if t.ncols() != prior.dim() {
        return Err(Error::Config(format!(
            "design has {} columns but the prior has dimension {}",
            t.ncols(),
            prior.dim()
        )));
    }
    if t.nrows() != y.len() {
        return Err(Error::Config("design and response lengths differ".into()));
    }
    if t.iter().any(|v| !v.is_finite()) {
        return Err(Error::Degenerate("design matrix has non-finite entries".into()));
    }
    let y = DVector::from_column_slice(y);
    let gram = t.tr_mul(t);
    let a = symmetrize(prior.precision() + gram);
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Degenerate("T'T overflowed".into()));
    }
    let chol = cholesky_with_jitter(a)
        .ok_or_else(|| Error::Degenerate("Sigma^{-1} + T'T is not positive definite".into()))?;
    let rhs = &prior.precision_mu + t.tr_mul(&y);
    let mu_star = chol.solve(&rhs);
    let sigma_star = symmetrize(chol.inverse());
    let log_det_sigma_star = -2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();

    let resid = &y - t * &mu_star;
    let shift = &mu_star - &prior.mu;
    let lambda_star = prior.lambda + resid.norm_squared() + shift.dot(&(prior.precision() * &shift));
    if !(lambda_star.is_finite() && lambda_star > 0.0) {
        return Err(Error::Degenerate(format!("lambda* = {lambda_star}")));
    }
    if !mu_star.iter().all(|v| v.is_finite()) || !log_det_sigma_star.is_finite() {
        return Err(Error::Degenerate("posterior moments are not finite".into()));
    }
    Ok(NigPosterior {
        nu_star: prior.nu + y.len() as f64,
        lambda_star,
        mu_star,
        sigma_star,
        log_det_sigma_star,
        posterior_precision: chol,
    })
}

/// Log of `det(Sigma*)^{1/2} Gamma(nu*/2) (lambda*/2)^{-nu*/2}`.
pub fn log_marginal_likelihood_term(post: &NigPosterior) -> f64 {
    0.5 * post.log_det_sigma_star + ln_gamma(0.5 * post.nu_star)
        - 0.5 * post.nu_star * (0.5 * post.lambda_star).ln()
}

/// Collapsed per-tree term: both Dirichlet-multinomial factors and the depth
/// product.
pub fn log_tree_term(summary: &TreeSummary, hyper: &HyperParams) -> Result<f64> {
    Ok(
        log_dirichlet_multinomial(hyper.op_concentrations.as_slice(), &summary.xi)?
            + log_dirichlet_multinomial(hyper.ft_concentrations.as_slice(), &summary.rho)?
            + hyper.rule.log_depth_factor(summary),
    )
}

/// Scores a forest whose design matrix and tree summaries are already known.
/// Degenerate designs yield `Err(Error::Degenerate)`.
pub fn score_design(
    design: &DesignMatrix,
    summaries: &[TreeSummary],
    data: &Dataset,
    hyper: &HyperParams,
    prior: &NigParams,
) -> Result<ConjugateSummary> {
    if !design.finite {
        return Err(Error::Degenerate("design matrix has non-finite entries".into()));
    }
    let posterior = nig_update(prior, &design.matrix, data.y())?;
    let mut log_jmp = log_marginal_likelihood_term(&posterior);
    for s in summaries {
        log_jmp += log_tree_term(s, hyper)?;
    }
    Ok(ConjugateSummary { posterior, log_jmp })
}

/// Full conjugate summary of a forest.
pub fn summarize_forest(trees: &[SymbolicTree], data: &Dataset, hyper: &HyperParams) -> Result<ConjugateSummary> {
    if trees.len() != hyper.n_trees {
        return Err(Error::Config(format!(
            "forest has {} trees but K = {}",
            trees.len(),
            hyper.n_trees
        )));
    }
    let summaries = trees
        .iter()
        .map(|t| t.summarize(&hyper.ops, data.p()))
        .collect::<Result<Vec<_>>>()?;
    let design = design_matrix(trees, data)?;
    score_design(&design, &summaries, data, hyper, &hyper.nig_params()?)
}

/// Log joint marginal posterior of the forest (up to a forest-independent
/// constant). Degenerate forests score `-inf`; structural problems are errors.
pub fn log_jmp_ensemble(trees: &[SymbolicTree], data: &Dataset, hyper: &HyperParams) -> Result<f64> {
    match summarize_forest(trees, data, hyper) {
        Ok(s) => Ok(s.log_jmp),
        Err(Error::Degenerate(_)) => Ok(f64::NEG_INFINITY),
        Err(e) => Err(e),
    }
}

/// Log-JMP of many forests of the same size `hyper.n_trees`. Degenerate
/// forests score `-inf`; other errors are returned per forest.
pub fn log_jmp_batch(forests: &[Vec<SymbolicTree>], data: &Dataset, hyper: &HyperParams, exec: Execution) -> Vec<Result<f64>> {
    exec.map(forests, |f| log_jmp_ensemble(f, data, hyper))
}

/// Draws from `Dir(concentrations + counts)` by normalizing Gamma variates.
pub fn sample_dirichlet<R: Rng + ?Sized>(rng: &mut R, concentrations: &[f64], counts: &[usize]) -> Result<WeightVector> {
    if concentrations.len() != counts.len() {
        return Err(Error::Domain("concentrations and counts differ in length".into()));
    }
    let gammas = concentrations
        .iter()
        .zip(counts)
        .map(|(a, &c)| {
            Gamma::new(a + c as f64, 1.0)
                .map_err(|_| Error::Domain(format!("concentration {a} is not positive")))
        })
        .collect::<Result<Vec<_>>>()?;
    // tiny shapes can underflow every draw to zero; redraw in that case
    for _ in 0..64 {
        let draws: Vec<f64> = gammas.iter().map(|g| g.sample(rng)).collect();
        if draws.iter().sum::<f64>() > 0.0 {
            return WeightVector::from_unnormalized(draws);
        }
    }
    Err(Error::Domain("Dirichlet draw underflowed".into()))
}

/// Draws `w_op ~ Dir(alpha_op + xi)` and `w_ft ~ Dir(alpha_ft + rho)`.
pub fn sample_weights_full_conditional<R: Rng + ?Sized>(
    rng: &mut R,
    summary: &TreeSummary,
    op_concentrations: &Concentrations,
    ft_concentrations: &Concentrations,
) -> Result<(WeightVector, WeightVector)> {
    let w_op = sample_dirichlet(rng, op_concentrations.as_slice(), &summary.xi)?;
    let w_ft = sample_dirichlet(rng, ft_concentrations.as_slice(), &summary.rho)?;
    Ok((w_op, w_ft))
}

/// Draws `sigma2 ~ IG(nu*/2, lambda*/2)` then `beta ~ N(mu*, sigma2 Sigma*)`.
pub fn sample_model_params_full_conditional<R: Rng + ?Sized>(
    rng: &mut R,
    post: &NigPosterior,
) -> (DVector<f64>, f64) {
    let gamma = Gamma::new(0.5 * post.nu_star, 2.0 / post.lambda_star)
        .expect("posterior shape and scale are positive");
    let sigma2 = 1.0 / gamma.sample(rng);
    let dim = post.mu_star.len();
    let z = DVector::from_iterator(dim, (0..dim).map(|_| StandardNormal.sample(rng)));
    // Sigma* = L^{-T} L^{-1} with L the factor of the posterior precision
    let l = post.posterior_precision.l();
    let noise = l
        .transpose()
        .solve_upper_triangular(&z)
        .expect("Cholesky factor has a positive diagonal");
    let beta = &post.mu_star + noise * sigma2.sqrt();
    (beta, sigma2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar_prior() -> NigParams {
        NigParams::new(1.0, 1.0, DVector::from_element(1, 0.0), DMatrix::identity(1, 1)).unwrap()
    }

    #[test]
    fn empty_data_is_identity_update() {
        let prior = NigParams::new(
            2.0,
            3.0,
            DVector::from_vec(vec![0.5, -1.0]),
            DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]),
        )
        .unwrap();
        let post = nig_update(&prior, &DMatrix::zeros(0, 2), &[]).unwrap();
        assert_eq!(post.nu_star, 2.0);
        assert!((post.lambda_star - 3.0).abs() < 1e-12);
        assert!((&post.mu_star - &prior.mu).amax() < 1e-12);
        assert!((&post.sigma_star - &prior.sigma).amax() < 1e-12);
    }

    #[test]
    fn scalar_hand_case() {
        let t = DMatrix::from_element(2, 1, 1.0);
        let post = nig_update(&scalar_prior(), &t, &[1.0, 1.0]).unwrap();
        assert_eq!(post.nu_star, 3.0);
        assert!((post.sigma_star[(0, 0)] - 1.0 / 3.0).abs() < 1e-14);
        assert!((post.mu_star[0] - 2.0 / 3.0).abs() < 1e-14);
        assert!((post.lambda_star - 5.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn design_matrix_examples() {
        let data = Dataset::new(vec![vec![1.0, 0.0, 2.0]], vec![0.0; 3], None).unwrap();
        let d = design_matrix(&[], &data).unwrap();
        assert_eq!(d.matrix.shape(), (3, 1));
        assert!(d.matrix.iter().all(|v| *v == 1.0));
        let d = design_matrix(&[SymbolicTree::x(1)], &data).unwrap();
        assert_eq!(d.matrix.column(1).as_slice(), &[1.0, 0.0, 2.0]);
        let inv = SymbolicTree::unary(crate::expr::Operator::Inv, SymbolicTree::x(1));
        assert!(!design_matrix(&[inv], &data).unwrap().finite);
    }

    #[test]
    fn duplicated_columns_stay_finite() {
        let data = Dataset::new(vec![vec![1.0, 2.0, 3.0, 4.0]], vec![1.0, 2.0, 2.5, 4.2], None).unwrap();
        let hyper = HyperParams::with_default_ops(1, 2);
        let trees = [SymbolicTree::x(1), SymbolicTree::x(1)];
        let v = log_jmp_ensemble(&trees, &data, &hyper).unwrap();
        assert!(v.is_finite());
    }

    #[test]
    fn non_finite_design_scores_negative_infinity() {
        let data = Dataset::new(vec![vec![0.0, 1.0]], vec![1.0, 2.0], None).unwrap();
        let hyper = HyperParams::with_default_ops(1, 1);
        let inv = SymbolicTree::unary(crate::expr::Operator::Inv, SymbolicTree::x(1));
        assert_eq!(log_jmp_ensemble(&[inv], &data, &hyper).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn dirichlet_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = sample_dirichlet(&mut rng, &[0.5, 0.5, 0.5], &[0, 0, 0]).unwrap();
        assert!((w.as_slice().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        assert!(sample_dirichlet(&mut rng, &[0.0, 1.0], &[0, 0]).is_err());
    }

    #[test]
    fn dataset_validation() {
        assert!(Dataset::new(vec![], vec![1.0], None).is_err());
        assert!(Dataset::new(vec![vec![1.0]], vec![], None).is_err());
        assert!(Dataset::new(vec![vec![1.0, 2.0]], vec![1.0], None).is_err());
        assert!(Dataset::new(vec![vec![f64::NAN]], vec![1.0], None).is_err());
        let d = Dataset::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]], vec![0.0, 1.0]).unwrap();
        assert_eq!(d.column(1), &[2.0, 4.0]);
        assert_eq!(d.row(1), vec![3.0, 4.0]);
        assert_eq!(d.feature_names(), &["x1".to_string(), "x2".to_string()]);
    }
}
