use nalgebra::DMatrix;
use posi::design::DEFAULT_RANK_TOLERANCE;
use posi::{
    orth_k, posi_k, scheffe_k, CanonicalDesign, CanonicalForm, ErrorModel, McConfig, ModelUniverse,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};

fn random_design(p: usize, seed: u64) -> CanonicalDesign {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let m = DMatrix::from_fn(p, p, |_, _| rng.random_range(-1.0..1.0));
    CanonicalDesign::from_values(m, CanonicalForm::Unspecified, DEFAULT_RANK_TOLERANCE).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn smaller_alpha_gives_larger_constant(seed in 0u64..1000, a1 in 0.01f64..0.2, a2 in 0.01f64..0.2) {
        let x = random_design(3, seed);
        let u = ModelUniverse::all();
        let k1 = posi_k(&x, &u, &McConfig::new(a1.min(a2), ErrorModel::Known, 4000, seed)).unwrap();
        let k2 = posi_k(&x, &u, &McConfig::new(a1.max(a2), ErrorModel::Known, 4000, seed)).unwrap();
        prop_assert!(k1.k >= k2.k);
    }

    #[test]
    fn larger_universe_gives_larger_constant(seed in 0u64..1000, cap in 1usize..4) {
        let x = random_design(4, seed);
        let cfg = McConfig::new(0.05, ErrorModel::Known, 4000, seed);
        let small = posi_k(&x, &ModelUniverse::max_size(cap), &cfg).unwrap();
        let large = posi_k(&x, &ModelUniverse::max_size(cap + 1), &cfg).unwrap();
        prop_assert!(small.k <= large.k);
        prop_assert!(small.direction_count <= large.direction_count);
    }
}

#[test]
fn constant_is_sandwiched_between_orthogonal_and_scheffe() {
    for seed in 0..6 {
        let p = 2 + seed as usize % 4;
        let x = random_design(p, seed);
        for model in [ErrorModel::Known, ErrorModel::estimated(12).unwrap()] {
            let k = posi_k(&x, &ModelUniverse::all(), &McConfig::new(0.05, model, 20_000, seed)).unwrap();
            let lo = orth_k(0.05, p, model).unwrap().k;
            let hi = scheffe_k(0.05, p, model).unwrap().k;
            let slack = 3.0 * k.mc_standard_error;
            assert!(lo - slack <= k.k && k.k <= hi + slack, "p={p} {model}: {lo} <= {} <= {hi}", k.k);
        }
    }
}

#[test]
fn identical_seed_gives_identical_bits_across_thread_counts() {
    let x = random_design(5, 7);
    let cfg = McConfig::new(0.05, ErrorModel::estimated(20).unwrap(), 10_000, 99);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| posi_k(&x, &ModelUniverse::all(), &cfg).unwrap())
    };
    let a = run(1);
    for threads in [2, 3, 8] {
        let b = run(threads);
        assert_eq!(a.k.to_bits(), b.k.to_bits());
        assert_eq!(a.mc_standard_error.to_bits(), b.mc_standard_error.to_bits());
    }
}

#[test]
fn marginal_quantile_is_calibrated_across_seeds() {
    // p = 1: the constant is the two-sided normal quantile 1.959964.
    let x = CanonicalDesign::from_values(DMatrix::from_element(1, 1, 2.0), CanonicalForm::Unspecified, 1e-10).unwrap();
    let truth = 1.959_963_984_540_054;
    let ks: Vec<_> = (0..20)
        .map(|seed| posi_k(&x, &ModelUniverse::all(), &McConfig::new(0.05, ErrorModel::Known, 20_000, seed)).unwrap())
        .collect();
    let mean = ks.iter().map(|k| k.k).sum::<f64>() / 20.0;
    let se = ks.iter().map(|k| k.mc_standard_error).sum::<f64>() / 20.0;
    // The average of 20 independent estimates has standard error se/√20.
    assert!((mean - truth).abs() < 4.0 * se / 20f64.sqrt(), "mean {mean} se {se}");
    let within = ks.iter().filter(|k| (k.k - truth).abs() < 3.0 * k.mc_standard_error).count();
    assert!(within >= 18, "{within} of 20 within 3 se");
}
