use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ldp_audit::io::synthetic_embeddings;
use ldp_audit::{
    clopper_pearson_lower, derive_trial_rng, run_audit, sample_candidate_set, AdversarySpec, AuditConfig,
    AuditData, Corpus, EngineOptions, GrrParams, MechanismParams, MechanismSpec, Substream, TextRecord,
    TokenEmParams,
};

fn data(n: usize, dim: usize) -> AuditData {
    let records = (0..n)
        .map(|i| TextRecord::new(i as u64, vec![i as u32, ((i + 1) % n) as u32]))
        .collect();
    AuditData::new(
        Corpus::new(records, "bench").unwrap(),
        synthetic_embeddings(n, dim, 1).unwrap(),
    )
    .unwrap()
}

fn bench_clopper_pearson(c: &mut Criterion) {
    let mut group = c.benchmark_group("clopper_pearson_lower");
    for n in [100u64, 10_000, 1_000_000] {
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, &n| {
            b.iter(|| clopper_pearson_lower(black_box(n * 7 / 10), n, 0.005))
        });
    }
    group.finish();
}

fn bench_sampling(c: &mut Criterion) {
    let mut group = c.benchmark_group("sample_candidate_set");
    for n in [64usize, 1024] {
        let d = data(n, 32);
        group.bench_with_input(BenchmarkId::from_parameter(n), &d, |b, d| {
            let mut i = 0u64;
            b.iter(|| {
                i += 1;
                let mut s = derive_trial_rng(1, i, Substream::Sampling).rng();
                let mut t = derive_trial_rng(1, i, Substream::Target).rng();
                sample_candidate_set(n, 4, -1e4, &d.distances, &mut s, &mut t).unwrap()
            })
        });
    }
    group.finish();
}

fn bench_audit(c: &mut Criterion) {
    let d = data(256, 32);
    let options = EngineOptions::default().with_workers(1);
    let mut grr = AuditConfig::new(
        MechanismSpec::new(1.0, MechanismParams::Grr(GrrParams { domain_size: 256 })),
        AdversarySpec::ValueMap,
    );
    grr.trials = 1000;
    let mut em = AuditConfig::new(
        MechanismSpec::new(2.0, MechanismParams::TokenEm(TokenEmParams::default())),
        AdversarySpec::EmbeddingNn,
    );
    em.trials = 1000;

    let mut group = c.benchmark_group("audit_1000_trials");
    group.sample_size(10);
    group.bench_function("grr_value_map", |b| b.iter(|| run_audit(&grr, &d, &options).unwrap()));
    group.bench_function("token_em_embedding", |b| b.iter(|| run_audit(&em, &d, &options).unwrap()));
    group.finish();
}

criterion_group!(benches, bench_clopper_pearson, bench_sampling, bench_audit);
criterion_main!(benches);
