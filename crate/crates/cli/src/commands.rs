use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::json;
use symforest::data::{generate, read_csv, write_csv, Benchmark, BenchmarkSpec};
use symforest::diagnostics::{gelman_rubin_entry, geweke_entry, Functional, GEWEKE_THRESHOLD, RHAT_THRESHOLD};
use symforest::metrics::{rmse, tree_edit_distance};
use symforest::sampler::read_raw_jsonl;
use symforest::selection::{fitted_values, rank_models_pooled};
use symforest::{
    parse_expression, run_chains, ChainTrace, Dataset, Execution, HyperParams, KernelForm, OperatorSet, SymbolicTree,
};

use crate::pretty::table;
use crate::{CliError, CliResult, DiagnoseArgs, EvalArgs, FitArgs, GedArgs, SimulateArgs};

/// Feature bound for expressions parsed without a dataset.
const FREE_FEATURE_LIMIT: usize = 10_000;

fn required<T>(value: Option<T>, flag: &str) -> CliResult<T> {
    value.ok_or_else(|| CliError::Usage(format!("missing required flag --{flag}")))
}

fn usage_on_config(err: symforest::Error) -> CliError {
    match err {
        symforest::Error::Config(m) => CliError::Usage(m),
        symforest::Error::UnknownOperator(op) => CliError::Usage(format!("unknown operator `{op}`")),
        e => CliError::Engine(e),
    }
}

fn emit(json: &serde_json::Value, out: Option<&Path>, pretty: Option<String>) -> CliResult<()> {
    if let Some(path) = out {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, json).map_err(std::io::Error::from)?;
        writeln!(w)?;
        w.flush()?;
    }
    match pretty {
        Some(text) => print!("{text}"),
        None if out.is_none() => println!("{json}"),
        None => {}
    }
    Ok(())
}

fn load_data(path: &Path, target: Option<&str>) -> CliResult<Dataset> {
    Ok(read_csv(path, target)?)
}

pub fn simulate(a: SimulateArgs) -> CliResult<()> {
    let benchmark = match required(a.benchmark, "benchmark")?.as_str() {
        "sim5x" => Benchmark::Sim5x,
        "gpe" => Benchmark::Gpe,
        "coulomb" => Benchmark::Coulomb,
        "lorentz" => Benchmark::Lorentz,
        other => return Err(CliError::Usage(format!("unknown benchmark `{other}`"))),
    };
    let sigma2 = required(a.sigma2, "sigma2")?;
    if !(sigma2 >= 0.0 && sigma2.is_finite()) {
        return Err(CliError::Usage(format!("--sigma2 must be >= 0, got {sigma2}")));
    }
    let n = a.n.unwrap_or(1000);
    if n == 0 {
        return Err(CliError::Usage("--n must be at least 1".into()));
    }
    let out = required(a.out, "out")?;
    let spec = BenchmarkSpec {
        benchmark,
        n,
        sigma2,
        seed: a.seed.unwrap_or(0),
        features: None,
        expression: None,
    };
    let generated = generate(&spec).map_err(usage_on_config)?;
    write_csv(&generated.dataset, &out)?;
    let mut truth_path = out.clone().into_os_string();
    truth_path.push(".truth.txt");
    let truth_path = PathBuf::from(truth_path);
    std::fs::write(&truth_path, format!("{}\n", generated.truth))?;
    println!(
        "{}",
        json!({ "data": out, "truth_file": truth_path, "n": n, "truth": generated.truth })
    );
    Ok(())
}

/// `dir/name.jsonl` -> `dir/name.seed<seed>.jsonl`.
fn seeded_path(path: &Path, seed: u64) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}.seed{seed}.{}", ext.to_string_lossy()),
        None => format!("{stem}.seed{seed}"),
    };
    path.with_file_name(name)
}

fn fit_hyper(a: &FitArgs, p: usize) -> CliResult<HyperParams> {
    let k = required(a.k, "k")?;
    if k < 1 {
        return Err(CliError::Usage(format!("--k must be at least 1, got {k}")));
    }
    let ops = match &a.ops {
        Some(list) => OperatorSet::from_names(list).map_err(usage_on_config)?,
        None => OperatorSet::default(),
    };
    let mut hyper = HyperParams::new(ops, p, k as usize);
    if let Some(alpha) = a.alpha {
        hyper.rule.alpha = alpha;
    }
    if let Some(delta0) = a.delta0 {
        hyper.rule.delta0 = delta0;
    }
    if let Some(pg) = a.p_grow {
        hyper.p_grow = pg;
    }
    if let Some(d) = a.max_depth {
        hyper.max_depth = d;
    }
    if let Some(n) = a.niter {
        hyper.niter = n;
    }
    hyper.seed = a.seed.unwrap_or(0);
    hyper.kernel = match a.kernel.as_deref() {
        None | Some("exact") => KernelForm::Exact,
        Some("published") => KernelForm::Published,
        Some(other) => return Err(CliError::Usage(format!("unknown kernel `{other}`"))),
    };
    hyper.validate(p).map_err(usage_on_config)?;
    Ok(hyper)
}

pub fn fit(a: FitArgs) -> CliResult<()> {
    let data = load_data(&required(a.data.clone(), "data")?, a.target.as_deref())?;
    let hyper = fit_hyper(&a, data.p())?;
    let chains = a.chains.unwrap_or(1);
    if chains == 0 {
        return Err(CliError::Usage("--chains must be at least 1".into()));
    }
    let r = a.r.unwrap_or(3);
    if r == 0 {
        return Err(CliError::Usage("--r must be at least 1".into()));
    }
    let truth = a
        .truth
        .as_deref()
        .map(|t| parse_expression(t, data.p(), &OperatorSet::default()))
        .transpose()?;

    let seeds: Vec<u64> = (0..chains as u64).map(|i| hyper.seed + i).collect();
    let traces = run_chains(&data, &hyper, &seeds, Execution::default())
        .into_iter()
        .collect::<symforest::Result<Vec<ChainTrace>>>()?;

    if let Some(path) = &a.trace_out {
        for t in &traces {
            let target = if chains == 1 { path.clone() } else { seeded_path(path, t.seed) };
            t.save_jsonl(&target)?;
        }
    }
    if let Some(path) = &a.series_out {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "chain,iter,log_jmp")?;
        for t in &traces {
            for rec in &t.records {
                writeln!(w, "{},{},{}", t.seed, rec.iter, rec.log_jmp)?;
            }
        }
        w.flush()?;
    }

    let mut ranked = rank_models_pooled(&traces, &data, &hyper, r, Execution::Sequential)?;
    if let Some(t) = &truth {
        ranked.attach_mged(t);
    }
    let pretty = a.pretty.unwrap_or(false).then(|| {
        let rows = ranked
            .entries
            .iter()
            .map(|e| {
                vec![
                    e.rank.to_string(),
                    e.expressions.join(", "),
                    format!("{:.4}", e.log_jmp),
                    e.beta_hat.iter().map(|b| format!("{b:.4}")).collect::<Vec<_>>().join(", "),
                    format!("{:.4}", e.intercept),
                    format!("{:.4}", e.rmse),
                    e.mged.map_or("-".into(), |m| m.to_string()),
                ]
            })
            .collect();
        table(&["rank", "expressions", "log_jmp", "beta_hat", "intercept", "rmse", "mged"], rows)
    });
    emit(&ranked.to_json(), a.report_out.as_deref(), pretty)
}

pub fn eval(a: EvalArgs) -> CliResult<()> {
    let data = load_data(&required(a.data, "data")?, a.target.as_deref())?;
    let list = required(a.expr_list, "expr-list")?;
    let ops = OperatorSet::default();
    let hyper = HyperParams::new(ops.clone(), data.p(), 1);
    let mut out = Vec::new();
    for forest_text in list.split(';').map(str::trim).filter(|s| !s.is_empty()) {
        let forest = forest_text
            .split(',')
            .map(|t| parse_expression(t.trim(), data.p(), &ops))
            .collect::<symforest::Result<Vec<SymbolicTree>>>()?;
        let (y_hat, _) = fitted_values(&forest, &data, &hyper)?;
        out.push(json!({
            "expressions": forest.iter().map(SymbolicTree::canonical_string).collect::<Vec<_>>(),
            "rmse": rmse(data.y(), &y_hat)?,
        }));
    }
    if out.is_empty() {
        return Err(CliError::Usage("--expr-list holds no expressions".into()));
    }
    let pretty = a.pretty.unwrap_or(false).then(|| {
        let rows = out
            .iter()
            .map(|v| {
                let exprs: Vec<&str> = v["expressions"].as_array().unwrap().iter().filter_map(|e| e.as_str()).collect();
                vec![exprs.join(", "), format!("{:.6}", v["rmse"].as_f64().unwrap())]
            })
            .collect();
        table(&["expressions", "rmse"], rows)
    });
    emit(&serde_json::Value::Array(out), None, pretty)
}

pub fn ged(a: GedArgs) -> CliResult<()> {
    let ops = OperatorSet::default();
    let ta = parse_expression(&required(a.a, "a")?, FREE_FEATURE_LIMIT, &ops)?;
    let tb = parse_expression(&required(a.b, "b")?, FREE_FEATURE_LIMIT, &ops)?;
    let d = tree_edit_distance(&ta, &tb);
    if a.pretty.unwrap_or(false) {
        println!("{d}");
    } else {
        println!(
            "{}",
            json!({ "a": ta.canonical_string(), "b": tb.canonical_string(), "distance": d })
        );
    }
    Ok(())
}

pub fn diagnose(a: DiagnoseArgs) -> CliResult<()> {
    let list = required(a.trace, "trace")?;
    let paths: Vec<&str> = list.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if paths.is_empty() {
        return Err(CliError::Usage("--trace holds no files".into()));
    }
    let functional = Functional::parse(a.functional.as_deref().unwrap_or("log_jmp")).map_err(usage_on_config)?;
    let fname = functional.name();
    let mut chains = Vec::with_capacity(paths.len());
    let mut entries = Vec::new();
    for path in &paths {
        let records = read_raw_jsonl(Path::new(path))?;
        let chain = functional.extract_raw(&records)?;
        entries.push(geweke_entry(
            &chain,
            &format!("{path}:{fname}"),
            a.geweke_threshold.unwrap_or(GEWEKE_THRESHOLD),
        )?);
        chains.push(chain);
    }
    if chains.len() >= 2 {
        entries.push(gelman_rubin_entry(
            &chains,
            &format!("all:{fname}"),
            a.rhat_threshold.unwrap_or(RHAT_THRESHOLD),
        )?);
    } else {
        eprintln!("{}", json!({ "notice": "gelman_rubin omitted: it needs at least two chains" }));
    }
    let pretty = a.pretty.unwrap_or(false).then(|| {
        let rows = entries
            .iter()
            .map(|e| {
                vec![
                    e.statistic.clone(),
                    e.chain_functional.clone(),
                    format!("{:.4}", e.value),
                    format!("{}", e.threshold),
                    e.pass.to_string(),
                ]
            })
            .collect();
        table(&["statistic", "chain_functional", "value", "threshold", "pass"], rows)
    });
    let json = serde_json::to_value(&entries).map_err(std::io::Error::from)?;
    emit(&json, None, pretty)
}
