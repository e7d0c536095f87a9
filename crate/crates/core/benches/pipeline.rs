use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fairknn::experiment::answer_query;
use fairknn::generate::{gen_queries, gen_synthetic, QueryGenConfig, SyntheticConfig};
use fairknn::index::FairIndex;
use fairknn::lsh::LshParams;
use fairknn::retrieval::RetrievalOptions;
use fairknn::select::SelectOptions;
use fairknn::Exec;

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn dataset() -> fairknn::Dataset {
    gen_synthetic(&SyntheticConfig {
        n_total: 20_000,
        dim: 32,
        tight_size: 0,
        domain_sizes: vec![4, 4, 3],
        seed: 1,
        ..SyntheticConfig::default()
    })
    .unwrap()
}

fn params() -> LshParams {
    LshParams {
        w: 8.0,
        ..LshParams::default()
    }
}

fn build(c: &mut Criterion) {
    let ds = dataset();
    let mut g = c.benchmark_group("index_build");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| FairIndex::build(&ds, &params(), exec).unwrap())
        });
    }
    g.finish();
}

fn queries(c: &mut Criterion) {
    let ds = dataset();
    let index = FairIndex::build(&ds, &params(), Exec::Parallel).unwrap();
    let mut g = c.benchmark_group("query_batch");
    g.sample_size(10);
    for m in [2usize, 3] {
        let qs = gen_queries(
            &ds,
            &QueryGenConfig {
                num_queries: 32,
                k: 20,
                constrained: (0..m).collect(),
                seed: 2,
                ..QueryGenConfig::default()
            },
        )
        .unwrap();
        let ret = RetrievalOptions::default();
        let sel = SelectOptions::default();
        for (name, exec) in MODES {
            g.bench_function(BenchmarkId::new(name, format!("m={m}")), |b| {
                b.iter(|| exec.map(&qs, |q| answer_query(q, &index, &ds, &ret, &sel, Exec::Sequential).unwrap()))
            });
        }
    }
    g.finish();
}

criterion_group!(benches, build, queries);
criterion_main!(benches);
