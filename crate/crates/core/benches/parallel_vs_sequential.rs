//! Parallel vs single-threaded execution of the two hot paths: the oracle
//! suite and instance scoring. Build with `--no-default-features` to time the
//! sequential fallback itself; both groups then run the same code.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use iclslope::backend::{ReferenceLm, TemplateSpec, VocabMode};
use iclslope::oracle::{run_suite, SuiteConfig};
use iclslope::types::{Demonstration, Origin, TaskInstance};
use iclslope::{score_instances, ScoringSetup};
use rayon::ThreadPoolBuilder;

fn pools() -> Vec<(&'static str, rayon::ThreadPool)> {
    vec![
        ("parallel", ThreadPoolBuilder::new().build().unwrap()),
        ("sequential", ThreadPoolBuilder::new().num_threads(1).build().unwrap()),
    ]
}

fn bench_suite(c: &mut Criterion) {
    let config =
        SuiteConfig { worlds: 200, ratio_worlds: 50, min_bound_checks: 50, ..SuiteConfig::default() };
    let mut group = c.benchmark_group("oracle_suite");
    group.sample_size(10);
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| pool.install(|| run_suite(&config).unwrap()))
        });
    }
    group.finish();
}

fn corpus() -> String {
    (0..400)
        .map(|i| format!("question {} asks w{} about w{} answer w{}", i, i % 37, i % 11, (i * 7) % 23))
        .collect::<Vec<_>>()
        .join("\n")
}

fn bench_scoring(c: &mut Criterion) {
    let lm = ReferenceLm::from_corpus(&corpus(), 0.5, VocabMode::Open).unwrap();
    let setup = ScoringSetup::new(TemplateSpec::plain(" "));
    let work: Vec<(TaskInstance, Vec<Demonstration>)> = (0..64)
        .map(|i| {
            let inst = TaskInstance::new(
                format!("i{i}"),
                format!("question {i} asks w{}", i % 37),
                format!("answer w{}", i % 23),
            )
            .unwrap();
            let demos = (0..8)
                .map(|j| {
                    Demonstration::new(
                        format!("d{j}"),
                        format!("about w{}", (i + j) % 11),
                        format!("answer w{}", j),
                        Origin::Labeled,
                    )
                    .unwrap()
                })
                .collect();
            (inst, demos)
        })
        .collect();
    let mut group = c.benchmark_group("score_instances");
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| pool.install(|| score_instances(&work, &lm, &setup).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_suite, bench_scoring);
criterion_main!(benches);
