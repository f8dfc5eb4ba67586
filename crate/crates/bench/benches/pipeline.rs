//! Benchmarks for every stage of the pipeline, separately and end to end:
//! parsing, both projections, the three execution modes, and a full
//! cross-mode equivalence run.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use std::hint::black_box;

use chorcc_bench::{corpus_program, corpus_source, params_n};
use chorcc_core::chor_projection::project_chor;
use chorcc_core::ep_projection::project_ep_all;
use chorcc_core::frontend::parse;
use chorcc_core::{
    drive, run_choreography, run_endpoints, run_verification_ir, Mode, RunConfig, Schedule,
};

fn bench_frontend(c: &mut Criterion) {
    let mut g = c.benchmark_group("frontend");
    for name in ["two_party", "ring", "broadcast"] {
        let src = corpus_source(name);
        g.throughput(Throughput::Bytes(src.len() as u64));
        g.bench_with_input(BenchmarkId::new("parse", name), &src, |b, src| {
            b.iter(|| parse(black_box(src)).expect("parse"));
        });
    }
    g.finish();
}

fn bench_projection(c: &mut Criterion) {
    let mut g = c.benchmark_group("projection");
    for name in ["ring", "broadcast", "loop_sum"] {
        let program = corpus_program(name);
        g.bench_with_input(BenchmarkId::new("verification", name), &program, |b, p| {
            b.iter(|| project_chor(black_box(p)).expect("project"));
        });
        g.bench_with_input(BenchmarkId::new("endpoints", name), &program, |b, p| {
            b.iter(|| project_ep_all(black_box(p)).expect("project"));
        });
    }
    g.finish();
}

fn bench_execution(c: &mut Criterion) {
    let mut g = c.benchmark_group("execution");
    let program = corpus_program("ring");
    let (vp, _) = project_chor(&program).expect("verification projection");
    let (eps, _, _) = project_ep_all(&program).expect("endpoint projection");
    for n in [2i64, 8] {
        let params = params_n(&program, n);
        g.bench_with_input(BenchmarkId::new("reference", n), &params, |b, params| {
            b.iter(|| run_choreography(black_box(&program), params).expect("run"));
        });
        g.bench_with_input(BenchmarkId::new("checked-ir", n), &params, |b, params| {
            b.iter(|| run_verification_ir(black_box(&program), &vp, params).expect("run"));
        });
        g.bench_with_input(BenchmarkId::new("simulator", n), &params, |b, params| {
            b.iter(|| {
                run_endpoints(black_box(&program), &eps, params, Schedule::RoundRobin)
                    .expect("run")
            });
        });
    }
    g.finish();
}

fn bench_end_to_end(c: &mut Criterion) {
    let mut g = c.benchmark_group("end-to-end");
    let src = corpus_source("ring");
    g.bench_function("equivalence/ring/4", |b| {
        b.iter(|| {
            let program = parse(black_box(&src)).expect("parse");
            let mut cfg = RunConfig::new(params_n(&program, 4));
            cfg.schedules = vec![Schedule::RoundRobin, Schedule::Random(7)];
            drive(&program, Mode::Equiv, &cfg).expect("drive")
        });
    });
    g.finish();
}

criterion_group!(benches, bench_frontend, bench_projection, bench_execution, bench_end_to_end);
criterion_main!(benches);
