//! Sequential vs rayon execution for the data-parallel loops. Build without
//! default features to confirm the sequential fallback compiles; the
//! `Parallel` rows then match the `Sequential` ones.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use uos_core::par::Execution;
use uos_core::sequence::{self, AssignmentVector, LeafSet, SequenceSample};
use uos_core::spectral::{self, KMeansOptions};
use uos_core::synth::{self, SequenceSynthConfig};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn sequences() -> (Vec<SequenceSample>, LeafSet) {
    let cfg = SequenceSynthConfig { train_per_class: 15, test_per_class: 1, ..SequenceSynthConfig::default() };
    let mut d = synth::generate_synthetic_sequences(&cfg).expect("synthetic sequences");
    let leaves = LeafSet::new(d.leaf_bases.clone()).expect("leaf set");
    sequence::assign_all(&mut d.train, &leaves, Execution::Parallel).expect("assignment");
    (d.train, leaves)
}

fn distance_tables(c: &mut Criterion) {
    let (train, leaves) = sequences();
    let psis: Vec<AssignmentVector> = train.iter().map(|s| s.assignment.clone().expect("assigned")).collect();
    let mut g = c.benchmark_group("dtw_kernel_matrix");
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &e| {
            b.iter(|| sequence::dtw_distance_matrix(black_box(&psis), &leaves, e).expect("distances"))
        });
    }
    g.finish();
    let mut g = c.benchmark_group("feature_distance_table");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &e| {
            b.iter(|| sequence::training_distances(black_box(&train), &leaves, e).expect("distances"))
        });
    }
    g.finish();
}

fn kmeans_restarts(c: &mut Criterion) {
    let cfg = synth::SynthConfig {
        m: 20,
        subspaces: 5,
        dim: 4,
        points_per_subspace: 80,
        noise: 0.05,
        geometry: synth::Geometry::Independent,
        seed: 0,
    };
    // one point per row
    let points = synth::generate_synthetic_uos(&cfg).expect("synthetic data").x.into_inner().transpose();
    let mut g = c.benchmark_group("kmeans_restarts");
    for (name, exec) in MODES {
        let opts = KMeansOptions { restarts: 16, exec, ..KMeansOptions::default() };
        g.bench_with_input(BenchmarkId::from_parameter(name), &opts, |b, o| {
            b.iter(|| spectral::kmeans_with(black_box(&points), 5, 0, *o).expect("kmeans"))
        });
    }
    g.finish();
}

criterion_group!(benches, distance_tables, kmeans_restarts);
criterion_main!(benches);
