use gtrident::forward::{joint3_exact, marginalize, JointTensor};
use gtrident::identify::{recover_all, RecoveredModel, RegimeKind};
use gtrident::model::{GammaRates, GtrModel, TripleTree};
use gtrident::presets::{self, ParameterSampler};
use gtrident::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

struct Errors {
    alpha: f64,
    q: f64,
    pi: f64,
    t: f64,
}

fn compare(model: &GtrModel, rates: &GammaRates, tree: &TripleTree, r: &RecoveredModel) -> Errors {
    let q = model.q.matrix();
    let rq = r.q.matrix();
    Errors {
        alpha: (r.alpha / rates.alpha() - 1.0).abs(),
        q: q.iter().zip(rq.iter()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())),
        pi: model.pi.as_slice().iter().zip(r.pi.as_slice()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())),
        t: tree.lengths().iter().zip(r.edge_lengths()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())),
    }
}

fn round_trip(model: &GtrModel, rates: &GammaRates, tree: &TripleTree) -> (RecoveredModel, Errors) {
    let p = joint3_exact(model, rates, tree).unwrap();
    let r = recover_all(&p).unwrap_or_else(|e| panic!("{e}; alpha {}, t {:?}", rates.alpha(), tree.lengths()));
    let e = compare(model, rates, tree, &r);
    (r, e)
}

fn assert_close(e: &Errors, ctx: &str) {
    assert!(e.alpha < 1e-6, "{ctx}: alpha rel err {}", e.alpha);
    assert!(e.q < 1e-7, "{ctx}: Q err {}", e.q);
    assert!(e.pi < 1e-7, "{ctx}: pi err {}", e.pi);
    assert!(e.t < 1e-7, "{ctx}: t err {}", e.t);
}

#[test]
fn generic_random_models() {
    let s = ParameterSampler::default();
    for kappa in [2, 3, 4, 5] {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + kappa as u64);
        for trial in 0..60 {
            let model = s.model(&mut rng, kappa).unwrap();
            let rates = s.rates(&mut rng);
            let tree = s.triple(&mut rng);
            let (r, e) = round_trip(&model, &rates, &tree);
            assert!(matches!(r.regime.kind, RegimeKind::Generic { .. }));
            assert!(r.residual < 1e-9, "residual {}", r.residual);
            assert_close(&e, &format!("kappa {kappa} trial {trial}"));
        }
    }
}

#[test]
fn exceptional_models_take_their_paths() {
    let cases: Vec<(&str, GtrModel, &str)> = vec![
        ("jc", presets::jukes_cantor(), "case_a1"),
        ("k2p", presets::kimura2(4.0).unwrap(), "case_a1"),
        ("k3p", presets::kimura3(3.0, 0.6, 1.5).unwrap(), "case_a1"),
        ("case a2", presets::case_a2(), "case_a2"),
        ("case b", presets::case_b_default(), "case_b"),
    ];
    let trees = [(0.1, 0.2, 0.3), (0.7, 0.05, 0.3), (0.0, 0.4, 0.9), (1.5, 1.2, 0.2)];
    for (name, model, want) in &cases {
        for alpha in [0.3, 1.0, 4.0] {
            let rates = GammaRates::new(alpha).unwrap();
            for &(a, b, c) in &trees {
                let tree = TripleTree::new(a, b, c).unwrap();
                let (r, e) = round_trip(model, &rates, &tree);
                assert_eq!(r.regime.kind.name(), *want, "{name}");
                assert_close(&e, name);
                let v = r.equation.values;
                // inequalities behind the uniqueness argument, in the sorted frame
                match r.regime.kind {
                    RegimeKind::CaseA1 { .. } => {
                        let (d342, d423, a2, b3, c4) = (v[0], v[1], v[2], v[3], v[4]);
                        assert!(d342 <= a2 + 1e-12 && d423 < b3 && d342 < c4 && d423 < c4, "{name}: {v:?}");
                    }
                    RegimeKind::CaseA2 { .. } | RegimeKind::CaseB => {
                        let (d422, d242, c4, a2, b2) = (v[0], v[1], v[2], v[3], v[4]);
                        assert!(a2 <= b2 + 1e-12 && d422 <= a2 + 1e-12 && d242 < b2 && d242 < c4, "{name}: {v:?}");
                    }
                    RegimeKind::Generic { .. } => unreachable!(),
                }
            }
        }
    }
}

#[test]
fn jukes_cantor_single_eigenvalue() {
    let rates = GammaRates::new(1.0).unwrap();
    let tree = TripleTree::new(0.1, 0.2, 0.3).unwrap();
    let (r, _) = round_trip(&presets::jukes_cantor(), &rates, &tree);
    for l in &r.lambdas[1..] {
        assert!((l + 4.0 / 3.0).abs() < 1e-9);
    }
    match r.regime.kind {
        RegimeKind::CaseA1 { b, c } => assert!((b - 1.0).abs() < 1e-9 && (c - 1.0).abs() < 1e-9),
        other => panic!("{other:?}"),
    }
}

#[test]
fn taxon_permutation_moves_edge_lengths() {
    let s = ParameterSampler::default();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let model = s.model(&mut rng, 4).unwrap();
    let rates = GammaRates::new(0.8).unwrap();
    let p = joint3_exact(&model, &rates, &TripleTree::new(0.3, 0.2, 0.1).unwrap()).unwrap();
    let base = recover_all(&p).unwrap();
    assert_eq!(base.edge_order, [2, 1, 0]);
    for perm in [[1, 0, 2], [2, 0, 1], [0, 2, 1]] {
        let q = marginalize(&p, &perm).unwrap();
        let r = recover_all(&q).unwrap();
        for (pos, &taxon) in perm.iter().enumerate() {
            assert!((r.edge_lengths()[pos] - base.edge_lengths()[taxon]).abs() < 1e-9);
        }
        assert!((r.alpha - base.alpha).abs() < 1e-9 * base.alpha);
    }
}

#[test]
fn state_relabelling_keeps_regime() {
    let rates = GammaRates::new(1.4).unwrap();
    let tree = TripleTree::new(0.2, 0.3, 0.5).unwrap();
    for model in [presets::case_b_default(), presets::case_a2(), presets::kimura3(2.0, 0.7, 1.3).unwrap()] {
        let base = recover_all(&joint3_exact(&model, &rates, &tree).unwrap()).unwrap();
        let relabelled = model.permuted_states(&[3, 1, 0, 2]).unwrap();
        let r = recover_all(&joint3_exact(&relabelled, &rates, &tree).unwrap()).unwrap();
        assert_eq!(r.regime.kind.name(), base.regime.kind.name());
        assert!((r.alpha - 1.4).abs() < 1e-7);
    }
}

#[test]
fn binary_symmetric_is_refused() {
    let s = nalgebra::DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
    let model = GtrModel::from_exchangeabilities(&s, gtrident::model::StateDistribution::uniform(2)).unwrap();
    let p = joint3_exact(&model, &GammaRates::new(1.0).unwrap(), &TripleTree::new(0.1, 0.2, 0.3).unwrap()).unwrap();
    let err = recover_all(&p).unwrap_err();
    assert!(matches!(err, Error::NonIdentifiableBinary(_)));
    assert!(err.to_string().contains("non-identifiable (kappa=2 symmetric)"));
}

#[test]
fn malformed_tensors_are_rejected() {
    let model = presets::jukes_cantor();
    let p = joint3_exact(&model, &GammaRates::new(1.0).unwrap(), &TripleTree::new(0.1, 0.2, 0.3).unwrap()).unwrap();
    // a product of unequal marginals is not stationary
    let mut q = p.probabilities().to_vec();
    let shift = 0.01;
    for (idx, x) in q.iter_mut().enumerate() {
        if idx / 16 == 0 {
            *x += shift / 16.0;
        } else if idx / 16 == 1 {
            *x -= shift / 16.0;
        }
    }
    let bad = JointTensor::new(4, p.taxa().to_vec(), q).unwrap();
    assert!(matches!(recover_all(&bad), Err(Error::NotStationary(_))));
    let pair = marginalize(&p, &[0, 1]).unwrap();
    assert!(recover_all(&pair).unwrap_err().is_validation());
}
