use nalgebra::DMatrix;
use posi::design::{adjusted_predictor, CanonicalDesign, DEFAULT_RANK_TOLERANCE};
use posi::inference::fit_submodel;
use posi::numeric::dot;
use posi::{canonicalize, direction_stream, CanonicalForm, DedupMode, DesignMatrix, ErrorModel, ModelId, ModelUniverse};
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-1.0f64..1.0, rows * cols).prop_map(move |v| DMatrix::from_vec(rows, cols, v))
}

fn well_conditioned(rows: usize, cols: usize) -> impl Strategy<Value = DMatrix<f64>> {
    matrix(rows, cols).prop_filter("well conditioned", |m| {
        let s = m.clone().svd(false, false).singular_values;
        s.min() > 0.05 * s.max()
    })
}

fn canon(m: DMatrix<f64>) -> CanonicalDesign {
    let x = DesignMatrix::new(m, None, DEFAULT_RANK_TOLERANCE).unwrap();
    canonicalize(&x, CanonicalForm::UpperTriangular).unwrap()
}

type Key = (usize, ModelId);

/// `|⟨ℓ_a, ℓ_b⟩|` for every pair, keyed by `(j, M)`; invariant under rotations
/// and column rescaling.
fn abs_inner_products(x: &CanonicalDesign) -> Vec<(Key, Key, f64)> {
    let set = direction_stream(x, &ModelUniverse::all()).collect(DedupMode::None).unwrap();
    let mut dirs: Vec<_> = set.directions().iter().collect();
    dirs.sort_by_key(|d| (d.model, d.predictor));
    let mut out = Vec::new();
    for a in &dirs {
        for b in &dirs {
            out.push(((a.predictor, a.model), (b.predictor, b.model), dot(&a.vector, &b.vector).abs()));
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn column_rescaling_leaves_directions_unchanged(
        m in well_conditioned(5, 3),
        scales in prop::collection::vec(prop_oneof![0.1f64..10.0, -10.0f64..-0.1], 3),
    ) {
        let mut scaled = m.clone();
        for (j, s) in scales.iter().enumerate() {
            scaled.column_mut(j).scale_mut(*s);
        }
        let a = abs_inner_products(&canon(m));
        let b = abs_inner_products(&canon(scaled));
        for (u, v) in a.iter().zip(&b) {
            prop_assert_eq!((u.0, u.1), (v.0, v.1));
            prop_assert!((u.2 - v.2).abs() < 1e-9);
        }
    }

    #[test]
    fn row_rotation_leaves_directions_unchanged(m in well_conditioned(6, 3), q in matrix(6, 6)) {
        let q = q.qr().q();
        let a = abs_inner_products(&canon(m.clone()));
        let b = abs_inner_products(&canon(&q * m));
        for (u, v) in a.iter().zip(&b) {
            prop_assert!((u.2 - v.2).abs() < 1e-9);
        }
    }

    #[test]
    fn gram_schmidt_chain_is_orthonormal(m in well_conditioned(4, 4), order in Just((0..4).collect::<Vec<usize>>()).prop_shuffle()) {
        let x = canon(m);
        let mut model = ModelId::EMPTY;
        let mut chain = Vec::new();
        for &j in &order {
            model = model.with(j);
            let (r, n) = adjusted_predictor(&x, model, j).unwrap();
            chain.push(r.iter().map(|v| v / n).collect::<Vec<_>>());
        }
        for a in 0..4 {
            for b in 0..4 {
                let want = if a == b { 1.0 } else { 0.0 };
                prop_assert!((dot(&chain[a], &chain[b]) - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn stream_matches_brute_force_enumeration(m in well_conditioned(3, 3)) {
        let x = canon(m);
        let set = direction_stream(&x, &ModelUniverse::all()).collect(DedupMode::None).unwrap();
        let mut seen: Vec<(ModelId, usize)> = set.directions().iter().map(|d| (d.model, d.predictor)).collect();
        seen.sort();
        let mut want = Vec::new();
        for mask in 1u64..8 {
            let model = ModelId::from_mask(mask);
            for j in model.indices() {
                want.push((model, j));
            }
        }
        want.sort();
        prop_assert_eq!(seen, want);
        for d in set.directions() {
            let (r, n) = adjusted_predictor(&x, d.model, d.predictor).unwrap();
            prop_assert!((d.raw_norm - n).abs() < 1e-10 * n.max(1.0));
            for (u, v) in d.vector.iter().zip(&r) {
                prop_assert!((u - v / n).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn fits_agree_in_original_and_canonical_coordinates(
        m in well_conditioned(7, 3),
        y in prop::collection::vec(-3.0f64..3.0, 7),
        mask in 1u64..8,
    ) {
        let model = ModelId::from_mask(mask);
        let x = DesignMatrix::new(m.clone(), None, DEFAULT_RANK_TOLERANCE).unwrap();
        let cols: Vec<_> = model.indices().map(|j| m.column(j).clone_owned()).collect();
        let xm = DMatrix::from_columns(&cols);
        let beta = (xm.transpose() * &xm).try_inverse().unwrap() * xm.transpose() * nalgebra::DVector::from_column_slice(&y);
        for form in [CanonicalForm::UpperTriangular, CanonicalForm::Symmetric] {
            let c = canonicalize(&x, form).unwrap();
            let fit = fit_submodel(&c, &c.reduce_response(&y).unwrap(), model, 1.0, ErrorModel::Known).unwrap();
            for (a, b) in fit.estimates.iter().zip(beta.iter()) {
                prop_assert!((a - b).abs() < 1e-9 * b.abs().max(1.0));
            }
        }
    }
}
