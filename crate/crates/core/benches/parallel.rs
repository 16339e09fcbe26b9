use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use symforest::conjugate::log_jmp_batch;
use symforest::data::{generate_replicates, generate_simulated, Benchmark, BenchmarkSpec};
use symforest::selection::rank_models_pooled;
use symforest::{run_chains, ChainTrace, Execution, HyperParams, SymbolicTree};

const MODES: [Execution; 2] = [Execution::Sequential, Execution::Parallel];

fn label(exec: Execution) -> &'static str {
    match exec {
        Execution::Sequential => "sequential",
        Execution::Parallel => "parallel",
    }
}

fn chains(c: &mut Criterion) {
    let data = generate_simulated(500, 1.5, 1).unwrap();
    let mut hyper = HyperParams::with_default_ops(3, 2);
    hyper.niter = 300;
    let seeds: Vec<u64> = (0..8).collect();
    let mut group = c.benchmark_group("run_chains");
    group.sample_size(10);
    for exec in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(label(exec)), &exec, |b, &exec| {
            b.iter(|| run_chains(black_box(&data), &hyper, &seeds, exec))
        });
    }
    group.finish();
}

fn batch_and_ranking(c: &mut Criterion) {
    let data = generate_simulated(1000, 1.5, 2).unwrap();
    let mut hyper = HyperParams::with_default_ops(3, 2);
    hyper.niter = 500;
    let traces: Vec<ChainTrace> = run_chains(&data, &hyper, &[1, 2, 3, 4], Execution::Parallel)
        .into_iter()
        .map(Result::unwrap)
        .collect();
    let forests: Vec<Vec<SymbolicTree>> = traces
        .iter()
        .flat_map(|t| t.records.iter().map(|r| r.trees.iter().map(|x| (**x).clone()).collect()))
        .collect();

    let mut group = c.benchmark_group("log_jmp_batch");
    group.sample_size(10);
    for exec in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(label(exec)), &exec, |b, &exec| {
            b.iter(|| log_jmp_batch(black_box(&forests), &data, &hyper, exec))
        });
    }
    group.finish();

    let mut group = c.benchmark_group("rank_models_pooled");
    group.sample_size(10);
    for exec in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(label(exec)), &exec, |b, &exec| {
            b.iter(|| rank_models_pooled(black_box(&traces), &data, &hyper, 3, exec).unwrap())
        });
    }
    group.finish();
}

fn replicates(c: &mut Criterion) {
    let spec = BenchmarkSpec {
        benchmark: Benchmark::Lorentz,
        n: 20_000,
        sigma2: 0.25,
        seed: 0,
        features: None,
        expression: None,
    };
    let seeds: Vec<u64> = (1..=25).collect();
    let mut group = c.benchmark_group("generate_replicates");
    group.sample_size(10);
    for exec in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(label(exec)), &exec, |b, &exec| {
            b.iter(|| generate_replicates(black_box(&spec), &seeds, exec))
        });
    }
    group.finish();
}

criterion_group!(benches, chains, batch_and_ranking, replicates);
criterion_main!(benches);
