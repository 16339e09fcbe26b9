use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn symforest(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_symforest"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn stderr_error(out: &Output) -> Value {
    assert!(!out.status.success());
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().expect("an error line");
    serde_json::from_str(line).expect("stderr is single-line JSON")
}

fn simulate(dir: &Path, bench: &str, sigma2: &str, seed: &str, out: &str) {
    let o = symforest(
        dir,
        &["simulate", "--benchmark", bench, "--n", "1000", "--sigma2", sigma2, "--seed", seed, "--out", out],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn simulate_writes_data_and_truth() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "sim5x", "1.5", "7", "d.csv");
    let csv = std::fs::read_to_string(dir.path().join("d.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1001);
    assert_eq!(csv.lines().next().unwrap(), "x1,x2,x3,y");
    let truth = std::fs::read_to_string(dir.path().join("d.csv.truth.txt")).unwrap();
    assert_eq!(truth.trim(), "((x1+x2)*x3)");
}

#[test]
fn negative_noise_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = symforest(dir.path(), &["simulate", "--benchmark", "sim5x", "--sigma2", "-1", "--out", "d.csv"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_error(&o)["error"], "usage");
    assert!(!dir.path().join("d.csv").exists());
}

#[test]
fn fit_recovers_the_simulated_truth() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "sim5x", "1.5", "7", "d.csv");
    let o = symforest(
        dir.path(),
        &[
            "fit", "--data", "d.csv", "--k", "2", "--niter", "10000", "--seed", "7", "--chains", "4", "--truth",
            "(x1+x2)*x3", "--report-out", "report.json",
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    let entries = report.as_array().unwrap();
    assert_eq!(entries.len(), 3);
    for key in ["rank", "expressions", "log_jmp", "beta_hat", "intercept", "rmse", "mged"] {
        assert!(entries[0].get(key).is_some(), "missing {key}");
    }
    assert_eq!(entries[0]["rank"], 1);
    assert_eq!(entries[0]["mged"], 0);
}

#[test]
fn chains_write_seed_suffixed_traces_and_series() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "sim5x", "1.5", "3", "d.csv");
    let o = symforest(
        dir.path(),
        &[
            "fit", "--data", "d.csv", "--k", "2", "--niter", "50", "--seed", "10", "--chains", "4", "--trace-out",
            "t.jsonl", "--series-out", "s.csv",
        ],
    );
    let report = stdout_json(&o);
    assert!(report[0]["mged"].is_null());
    for seed in 10..14 {
        let text = std::fs::read_to_string(dir.path().join(format!("t.seed{seed}.jsonl"))).unwrap();
        assert_eq!(text.lines().count(), 50);
        let first: Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        for key in ["iter", "log_jmp", "trees", "beta", "sigma2", "moves"] {
            assert!(first.get(key).is_some(), "missing {key}");
        }
    }
    let series = std::fs::read_to_string(dir.path().join("s.csv")).unwrap();
    assert_eq!(series.lines().next().unwrap(), "chain,iter,log_jmp");
    assert_eq!(series.lines().count(), 1 + 4 * 50);
}

#[test]
fn identical_invocations_are_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "coulomb", "0.25", "1", "d.csv");
    let run = |name: &str| {
        let o = symforest(
            dir.path(),
            &["fit", "--data", "d.csv", "--k", "2", "--niter", "100", "--seed", "5", "--trace-out", name],
        );
        assert!(o.status.success());
        (o.stdout, std::fs::read(dir.path().join(name)).unwrap())
    };
    assert_eq!(run("a.jsonl"), run("b.jsonl"));
}

#[test]
fn fit_config_errors_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "sim5x", "1.5", "1", "d.csv");
    for args in [
        vec!["fit", "--data", "d.csv", "--k", "0"],
        vec!["fit", "--data", "d.csv", "--k", "2", "--ops", "add,tan"],
        vec!["fit", "--data", "d.csv", "--k", "2", "--p-grow", "0"],
        vec!["fit", "--data", "d.csv"],
    ] {
        let o = symforest(dir.path(), &args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert_eq!(stderr_error(&o)["error"], "usage");
    }
}

#[test]
fn config_file_fills_unset_flags() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "sim5x", "1.5", "1", "d.csv");
    std::fs::write(
        dir.path().join("cfg.json"),
        r#"{"data": "d.csv", "k": 2, "niter": 30, "seed": 4, "ops": "exp,inv,neg,pow2,pow3,add,mul", "r": 1}"#,
    )
    .unwrap();
    let o = symforest(dir.path(), &["fit", "--config", "cfg.json", "--niter", "20", "--trace-out", "t.jsonl"]);
    let report = stdout_json(&o);
    assert_eq!(report.as_array().unwrap().len(), 1);
    let trace = std::fs::read_to_string(dir.path().join("t.jsonl")).unwrap();
    assert_eq!(trace.lines().count(), 20);
    assert!(!trace.contains("sin(") && !trace.contains("cos("));

    std::fs::write(dir.path().join("bad.json"), r#"{"kk": 2}"#).unwrap();
    let o = symforest(dir.path(), &["fit", "--config", "bad.json"]);
    assert_eq!(stderr_error(&o)["error"], "usage");
}

#[test]
fn ged_of_commutative_rearrangement_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let o = symforest(dir.path(), &["ged", "--a", "(x1*x3)", "--b", "(x3*x1)"]);
    assert_eq!(stdout_json(&o)["distance"], 0);
    let o = symforest(dir.path(), &["ged", "--a", "x1", "--b", "x2", "--pretty"]);
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), "1");
    let o = symforest(dir.path(), &["ged", "--a", "(x1*", "--b", "x2"]);
    assert_eq!(stderr_error(&o)["error"], "parse");
}

#[test]
fn eval_of_truth_on_noiseless_data_interpolates() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "coulomb", "0", "2", "d.csv");
    let o = symforest(
        dir.path(),
        &["eval", "--data", "d.csv", "--expr-list", "(x1*x2)*pow2(inv(x3)); x1, x2*x3"],
    );
    let out = stdout_json(&o);
    let rows = out.as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows[0]["rmse"].as_f64().unwrap() <= 1e-8);
    assert_eq!(rows[1]["expressions"].as_array().unwrap().len(), 2);
    assert!(rows[1]["rmse"].as_f64().unwrap() > 1e-3);
}

#[test]
fn diagnose_reports_rhat_only_for_several_chains() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "sim5x", "1.5", "2", "d.csv");
    let o = symforest(
        dir.path(),
        &["fit", "--data", "d.csv", "--k", "2", "--niter", "60", "--seed", "1", "--chains", "2", "--trace-out", "t.jsonl"],
    );
    assert!(o.status.success());

    let o = symforest(dir.path(), &["diagnose", "--trace", "t.seed1.jsonl", "--functional", "log_jmp"]);
    let single = stdout_json(&o);
    assert_eq!(single.as_array().unwrap().len(), 1);
    assert_eq!(single[0]["statistic"], "geweke_z");
    assert!(String::from_utf8_lossy(&o.stderr).contains("notice"));

    let o = symforest(dir.path(), &["diagnose", "--trace", "t.seed1.jsonl,t.seed2.jsonl", "--functional", "sigma2"]);
    let both = stdout_json(&o);
    let stats: Vec<&str> = both.as_array().unwrap().iter().map(|e| e["statistic"].as_str().unwrap()).collect();
    assert_eq!(stats, ["geweke_z", "geweke_z", "gelman_rubin"]);
    for e in both.as_array().unwrap() {
        for key in ["statistic", "value", "chain_functional", "threshold", "pass"] {
            assert!(e.get(key).is_some());
        }
    }

    std::fs::write(dir.path().join("broken.jsonl"), "{\"iter\": 1}\nnot json\n").unwrap();
    let o = symforest(dir.path(), &["diagnose", "--trace", "broken.jsonl"]);
    assert_eq!(stderr_error(&o)["error"], "parse");
}
