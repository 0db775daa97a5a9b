use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use gtrident::assembly::{build_tree, distances_from_joint};
use gtrident::forward::{joint3_exact, joint_n_spectral, joint_quadrature_oracle, LabeledTree};
use gtrident::identify::{recover_all, solve_beta};
use gtrident::model::{GammaRates, TripleTree};
use gtrident::presets::{self, ParameterSampler};

fn forward(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let model = ParameterSampler::default().model(&mut rng, 4).unwrap();
    let rates = GammaRates::new(0.8).unwrap();
    let triple = TripleTree::new(0.1, 0.4, 0.7).unwrap();
    let quartet = LabeledTree::from_newick("((a:0.1,b:0.2):0.15,c:0.3,d:0.25);").unwrap();
    c.bench_function("joint3_exact kappa4", |b| b.iter(|| joint3_exact(black_box(&model), &rates, &triple).unwrap()));
    c.bench_function("joint_n_spectral quartet", |b| {
        b.iter(|| joint_n_spectral(black_box(&quartet), &model, &rates).unwrap())
    });
    let star = LabeledTree::star3(&triple).unwrap();
    c.bench_function("quadrature oracle 64 nodes", |b| {
        b.iter(|| joint_quadrature_oracle(black_box(&star), &model, &rates, 64).unwrap())
    });
}

fn inverse(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let model = ParameterSampler::default().model(&mut rng, 4).unwrap();
    let rates = GammaRates::new(1.3).unwrap();
    let triple = TripleTree::new(0.2, 0.5, 0.9).unwrap();
    let generic = joint3_exact(&model, &rates, &triple).unwrap();
    let jc = joint3_exact(&presets::jukes_cantor(), &rates, &triple).unwrap();
    c.bench_function("recover_all generic", |b| b.iter(|| recover_all(black_box(&generic)).unwrap()));
    c.bench_function("recover_all jukes-cantor", |b| b.iter(|| recover_all(black_box(&jc)).unwrap()));
    c.bench_function("solve_beta", |b| {
        b.iter(|| solve_beta(black_box(0.5), black_box(7f64.powf(-0.5)), 0.5, 0.5, 0.5).unwrap())
    });

    let tree = presets::random_binary_tree(&mut rng, 5, (0.02, 1.0), (0.05, 0.5)).unwrap();
    let joint = joint_n_spectral(&tree, &model, &rates).unwrap();
    c.bench_function("assemble 5 taxa", |b| {
        b.iter(|| build_tree(&distances_from_joint(black_box(&joint)).unwrap().distances).unwrap())
    });
}

criterion_group!(benches, forward, inverse);
criterion_main!(benches);
