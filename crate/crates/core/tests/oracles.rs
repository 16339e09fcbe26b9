use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use symforest::conjugate::{log_jmp_batch, sample_dirichlet, sample_model_params_full_conditional};
use symforest::data::{generate_replicates, generate_simulated, read_csv, write_csv, Benchmark, BenchmarkSpec};
use symforest::diagnostics::{gelman_rubin, geweke_z};
use symforest::selection::rank_models_pooled;
use symforest::{
    log_jmp_ensemble, nig_update, parse_expression, run_chains, ChainTrace, Dataset, Error, Execution, HyperParams,
    NigParams, OperatorSet, SymbolicTree,
};

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * (1.0 + a.abs().max(b.abs()))
}

fn random_spd(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(d, d) * 0.5
}

fn forest(texts: &[&str], p: usize) -> Vec<SymbolicTree> {
    texts.iter().map(|t| parse_expression(t, p, &OperatorSet::default()).unwrap()).collect()
}

#[test]
fn nig_update_matches_dense_inverse_formulas() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let (n, d) = (20, 4);
        let t = DMatrix::from_fn(n, d, |_, j| if j == 0 { 1.0 } else { rng.random_range(-2.0..2.0) });
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let mu = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
        let sigma = random_spd(&mut rng, d);
        let (nu, lambda) = (rng.random_range(0.5..3.0), rng.random_range(0.5..3.0));
        let prior = NigParams::new(nu, lambda, mu.clone(), sigma.clone()).unwrap();
        let post = nig_update(&prior, &t, &y).unwrap();

        let yv = DVector::from_column_slice(&y);
        let prec = sigma.clone().try_inverse().unwrap();
        let post_prec = &prec + t.transpose() * &t;
        let sigma_star = post_prec.clone().try_inverse().unwrap();
        let mu_star = &sigma_star * (&prec * &mu + t.transpose() * &yv);
        let lambda_star = lambda + yv.dot(&yv) + mu.dot(&(&prec * &mu)) - mu_star.dot(&(&post_prec * &mu_star));

        assert_eq!(post.nu_star, nu + n as f64);
        assert!(close(post.lambda_star, lambda_star, 1e-10), "{} vs {lambda_star}", post.lambda_star);
        assert!(close(post.log_det_sigma_star, sigma_star.determinant().ln(), 1e-10));
        for (a, b) in post.mu_star.iter().zip(mu_star.iter()) {
            assert!(close(*a, *b, 1e-10));
        }
        for (a, b) in post.sigma_star.iter().zip(sigma_star.iter()) {
            assert!(close(*a, *b, 1e-10));
        }
        assert_eq!(post.sigma_star, post.sigma_star.transpose());
    }
}

#[test]
fn full_conditional_draws_have_the_posterior_moments() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 12;
    let t = DMatrix::from_fn(n, 2, |_, j| if j == 0 { 1.0 } else { rng.random_range(0.0..3.0) });
    let y: Vec<f64> = (0..n).map(|i| 1.0 + 2.0 * t[(i, 1)] + rng.random_range(-1.0..1.0)).collect();
    let prior = NigParams::new(1.0, 1.0, DVector::zeros(2), DMatrix::identity(2, 2)).unwrap();
    let post = nig_update(&prior, &t, &y).unwrap();

    let draws = 200_000;
    let (mut s_sum, mut s_sq) = (0.0, 0.0);
    let mut b_sum = DVector::zeros(2);
    let mut bb = DMatrix::zeros(2, 2);
    for _ in 0..draws {
        let (beta, s2) = sample_model_params_full_conditional(&mut rng, &post);
        s_sum += s2;
        s_sq += s2 * s2;
        b_sum += &beta;
        bb += &beta * beta.transpose();
    }
    let m = draws as f64;
    let s_mean = s_sum / m;
    let s_se = ((s_sq / m - s_mean * s_mean) / m).sqrt();
    let expected_s = post.lambda_star / (post.nu_star - 2.0);
    assert!((s_mean - expected_s).abs() < 5.0 * s_se, "{s_mean} vs {expected_s}");

    let b_mean = b_sum / m;
    let cov = bb / m - &b_mean * b_mean.transpose();
    let expected_cov = &post.sigma_star * expected_s;
    for i in 0..2 {
        let se = (expected_cov[(i, i)] / m).sqrt();
        assert!((b_mean[i] - post.mu_star[i]).abs() < 5.0 * se);
    }
    for (a, b) in cov.iter().zip(expected_cov.iter()) {
        assert!((a - b).abs() < 0.03 * expected_cov[(0, 0)].max(expected_cov[(1, 1)]));
    }
}

#[test]
fn dirichlet_draws_have_the_posterior_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let (alpha, counts) = ([0.5, 1.0, 2.0], [3usize, 0, 1]);
    let total: f64 = alpha.iter().sum::<f64>() + counts.iter().sum::<usize>() as f64;
    let draws = 100_000;
    let mut sum = [0.0; 3];
    for _ in 0..draws {
        let w = sample_dirichlet(&mut rng, &alpha, &counts).unwrap();
        for (s, v) in sum.iter_mut().zip(w.as_slice()) {
            *s += v;
        }
    }
    for i in 0..3 {
        let mean = (alpha[i] + counts[i] as f64) / total;
        let sd = (mean * (1.0 - mean) / (total + 1.0)).sqrt();
        assert!((sum[i] / draws as f64 - mean).abs() < 5.0 * sd / (draws as f64).sqrt());
    }
}

#[test]
fn csv_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    let data = generate_simulated(200, 1.5, 4).unwrap();
    write_csv(&data, &path).unwrap();
    let back = read_csv(&path, None).unwrap();
    assert_eq!(back.columns(), data.columns());
    assert_eq!(back.y(), data.y());

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "x1,x2,y\n1,2,3\n4,oops,6\n").unwrap();
    match read_csv(&bad, None) {
        Err(Error::Parse { row, column, .. }) => assert_eq!((row, column), (3, 2)),
        other => panic!("expected a parse error, got {other:?}"),
    }
}

#[test]
fn log_jmp_ignores_row_order() {
    let data = generate_simulated(60, 1.5, 9).unwrap();
    let hyper = HyperParams::with_default_ops(3, 2);
    let trees = forest(&["(x1+x2)", "(x3*exp(neg(x1)))"], 3);
    let mut order: Vec<usize> = (0..data.n()).collect();
    order.reverse();
    order.rotate_left(17);
    let columns = data.columns().iter().map(|c| order.iter().map(|&i| c[i]).collect()).collect();
    let y = order.iter().map(|&i| data.y()[i]).collect();
    let shuffled = Dataset::new(columns, y, None).unwrap();
    let a = log_jmp_ensemble(&trees, &data, &hyper).unwrap();
    let b = log_jmp_ensemble(&trees, &shuffled, &hyper).unwrap();
    assert!(close(a, b, 1e-10), "{a} vs {b}");
}

#[test]
fn convergence_statistics_are_affine_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let chains: Vec<Vec<f64>> = (0..3)
        .map(|c| (0..500).map(|i| (i as f64 * 0.01).sin() + c as f64 * 0.1 + rng.random_range(-1.0..1.0)).collect())
        .collect();
    let z = geweke_z(&chains[0], 0.1, 0.5).unwrap();
    let r = gelman_rubin(&chains).unwrap();
    for (a, b) in [(3.0, -7.0), (-0.5, 2.0)] {
        let moved: Vec<Vec<f64>> = chains.iter().map(|c| c.iter().map(|v| a * v + b).collect()).collect();
        let zz = geweke_z(&moved[0], 0.1, 0.5).unwrap();
        assert!(close(zz, z * a.signum(), 1e-9));
        assert!(close(gelman_rubin(&moved).unwrap(), r, 1e-9));
    }
}

fn jsonl(trace: &ChainTrace) -> Vec<u8> {
    let mut out = Vec::new();
    trace.write_jsonl(&mut out).unwrap();
    out
}

#[test]
fn execution_modes_agree() {
    let data = generate_simulated(150, 1.5, 2).unwrap();
    let mut hyper = HyperParams::with_default_ops(3, 2);
    hyper.niter = 200;
    let seeds = [40, 41, 42, 43];
    let seq: Vec<ChainTrace> = run_chains(&data, &hyper, &seeds, Execution::Sequential)
        .into_iter()
        .map(Result::unwrap)
        .collect();
    let par: Vec<ChainTrace> = run_chains(&data, &hyper, &seeds, Execution::Parallel)
        .into_iter()
        .map(Result::unwrap)
        .collect();
    for (a, b) in seq.iter().zip(&par) {
        assert_eq!(a.seed, b.seed);
        assert_eq!(jsonl(a), jsonl(b));
    }

    let rs = rank_models_pooled(&seq, &data, &hyper, 5, Execution::Sequential).unwrap();
    let rp = rank_models_pooled(&par, &data, &hyper, 5, Execution::Parallel).unwrap();
    assert_eq!(rs.to_json(), rp.to_json());

    let forests: Vec<Vec<SymbolicTree>> = seq[0].records.iter().take(50).map(|r| r.trees.iter().map(|t| (**t).clone()).collect()).collect();
    let bs = log_jmp_batch(&forests, &data, &hyper, Execution::Sequential);
    let bp = log_jmp_batch(&forests, &data, &hyper, Execution::Parallel);
    for (a, b) in bs.iter().zip(&bp) {
        assert_eq!(a.as_ref().unwrap().to_bits(), b.as_ref().unwrap().to_bits());
    }

    let spec = BenchmarkSpec {
        benchmark: Benchmark::Coulomb,
        n: 100,
        sigma2: 0.25,
        seed: 0,
        features: None,
        expression: None,
    };
    let reps: Vec<u64> = (1..=6).collect();
    let gs = generate_replicates(&spec, &reps, Execution::Sequential);
    let gp = generate_replicates(&spec, &reps, Execution::Parallel);
    for (a, b) in gs.into_iter().zip(gp) {
        assert_eq!(a.unwrap(), b.unwrap());
    }
}
