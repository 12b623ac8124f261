use std::hint::black_box;

use coflow_core::bound::{mc_gap, BoundParams, McConfig};
use coflow_core::trace::synth::{fb_like, random_trace, RandomTraceConfig};
use coflow_core::trace::{filter_low_skew, parse_trace};
use coflow_core::{run_simulation, SchedulerKind, SimConfig};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

fn schedulers(c: &mut Criterion) {
    let mut group = c.benchmark_group("simulate/random");
    for n in [100, 400] {
        let cfg = RandomTraceConfig { num_coflows: n, arrival_span_ms: 100 * n as u64, ..Default::default() };
        let trace = random_trace(&cfg, 42);
        group.throughput(Throughput::Elements(trace.num_flows() as u64));
        for kind in SchedulerKind::ALL {
            let sim = SimConfig::new(trace.num_ports, kind);
            group.bench_with_input(BenchmarkId::new(kind.name(), n), &trace, |b, t| {
                b.iter(|| run_simulation(black_box(t), &sim).unwrap())
            });
        }
    }
    group.finish();
}

fn skewed_subset(c: &mut Criterion) {
    // the most skewed slice of the surrogate production trace
    let trace = filter_low_skew(&fb_like(1), 5.0).unwrap();
    let mut group = c.benchmark_group("simulate/fb-like-skew5");
    group.sample_size(10);
    for kind in [SchedulerKind::Sampling, SchedulerKind::Aalo, SchedulerKind::Sebf] {
        let sim = SimConfig::new(trace.num_ports, kind);
        group.bench_function(kind.name(), |b| b.iter(|| run_simulation(black_box(&trace), &sim).unwrap()));
    }
    group.finish();
}

fn trace_text(c: &mut Criterion) {
    let text = fb_like(1).to_text();
    let mut group = c.benchmark_group("trace");
    group.throughput(Throughput::Bytes(text.len() as u64));
    group.bench_function("parse fb-like", |b| b.iter(|| parse_trace(black_box(&text)).unwrap()));
    group.finish();
}

fn bound(c: &mut Criterion) {
    let p = BoundParams::symmetric(4, 0.0, 1.0, 0.4, 0.6);
    let mut group = c.benchmark_group("bound");
    group.sample_size(10);
    for trials in [10_000u64, 100_000] {
        let cfg = McConfig { trials, ..Default::default() };
        group.throughput(Throughput::Elements(trials));
        group.bench_with_input(BenchmarkId::new("mc_gap", trials), &cfg, |b, cfg| {
            b.iter(|| mc_gap(black_box(&p), cfg).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, schedulers, skewed_subset, trace_text, bound);
criterion_main!(benches);
