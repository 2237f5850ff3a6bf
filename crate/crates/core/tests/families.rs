use posi::special::{exchangeable_design, exchangeable_inverse_parameter, exchangeable_ratio_table, worst_posi1_design};
use posi::{orth_k, posi1_k, posi_k, ErrorModel, McConfig, ModelUniverse};

#[test]
fn exchangeable_constant_is_invariant_under_the_inverse_parameter() {
    let u = ModelUniverse::all();
    for (p, a) in [(4, 0.5), (5, 3.0), (6, 0.1)] {
        let c = exchangeable_inverse_parameter(p, a).unwrap();
        let k = posi_k(&exchangeable_design(p, a).unwrap(), &u, &McConfig::new(0.05, ErrorModel::Known, 40_000, 1)).unwrap();
        let kc = posi_k(&exchangeable_design(p, c).unwrap(), &u, &McConfig::new(0.05, ErrorModel::Known, 40_000, 2)).unwrap();
        let se = k.mc_standard_error.hypot(kc.mc_standard_error);
        assert!((k.k - kc.k).abs() <= 3.0 * se, "p={p} a={a}: {} vs {}", k.k, kc.k);
    }
}

#[test]
fn ratio_table_includes_the_orthogonal_member() {
    let table = exchangeable_ratio_table(&[3, 4], &[0.0, 1.0], 0.05, 20_000, 3).unwrap();
    for row in &table {
        let scale = (2.0 * (row.p as f64).ln()).sqrt();
        assert!(row.orth_ratio < 2.0);
        let at_zero = &row.cells[0];
        assert_eq!(at_zero.a, 0.0);
        let orth = orth_k(0.05, row.p, ErrorModel::Known).unwrap().k;
        assert!((at_zero.k - orth).abs() <= 3.0 * at_zero.mc_standard_error);
        assert!((row.orth_ratio - orth / scale).abs() < 1e-15);
        assert!(row.k_max >= at_zero.k);
    }
}

#[test]
fn single_predictor_constant_is_dominated() {
    for (p, c) in [(4usize, 0.5f64), (6, 0.4), (8, 0.35)] {
        let x = worst_posi1_design(p, c).unwrap();
        let u = ModelUniverse::all();
        let k1 = posi1_k(&x, &u, p - 1, &McConfig::new(0.05, ErrorModel::Known, 40_000, 5)).unwrap();
        let k = posi_k(&x, &u, &McConfig::new(0.05, ErrorModel::Known, 40_000, 6)).unwrap();
        let se = k1.mc_standard_error.hypot(k.mc_standard_error);
        assert!(k1.k <= k.k + 3.0 * se, "p={p}: K1 {} vs K {}", k1.k, k.k);
    }
}
