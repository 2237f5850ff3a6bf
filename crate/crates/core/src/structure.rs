//! Geometry of direction sets: dual designs, orthogonality census and the
//! PoSI polytope `Π_K = { z : |ℓᵀz| ≤ K for all ℓ ∈ L }`.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::Serialize;

use crate::design::{
    direction_stream, CanonicalDesign, CanonicalForm, DedupIndex, DedupMode, DirectionSet, ModelId, ModelUniverse,
};
use crate::error::{PosiError, Result};
use crate::numeric::dot;

fn require_classical(x: &CanonicalDesign) -> Result<()> {
    if !x.is_classical() {
        return Err(PosiError::NotClassical { rank: x.rank(), cols: x.cols() });
    }
    Ok(())
}

/// `X̃* = X̃ (X̃ᵀX̃)⁻¹`, whose columns are the full-model coefficient vectors.
/// For square `X̃` this is `X̃⁻ᵀ`.
pub fn dual_design(x: &CanonicalDesign) -> Result<CanonicalDesign> {
    require_classical(x)?;
    let lu = x.values().transpose().lu();
    let p = x.cols();
    let mut dual = lu
        .solve(&nalgebra::DMatrix::identity(p, p))
        .ok_or(PosiError::RankDeficient(ModelId::full(p)))?;
    let form = if x.form() == CanonicalForm::Symmetric {
        dual = (&dual + dual.transpose()) * 0.5;
        CanonicalForm::Symmetric
    } else {
        CanonicalForm::Unspecified
    };
    Ok(CanonicalDesign::from_values(dual, form, x.rank_tolerance())?.with_column_names(x.column_names().to_vec()))
}

#[derive(Clone, Debug, Serialize)]
pub struct DualityReport {
    pub matched_pairs: usize,
    /// Largest `min(‖ℓ*_{j·M} − ℓ*'_{j·M*}‖, ‖ℓ*_{j·M} + ℓ*'_{j·M*}‖)`.
    pub max_mismatch: f64,
    /// Largest `|‖ℓ_{j·M}‖ ‖ℓ'_{j·M*}‖ − 1|` for the unnormalized vectors.
    pub norm_product_check: f64,
    /// Whether both sets agree as sets of sign classes.
    pub sign_classes_equal: bool,
    pub distinct_directions: usize,
    pub distinct_dual_directions: usize,
}

/// Pairs each `(j, M)` with `(j, M*)`, `M* = (M_F ∖ M) ∪ {j}`, in the dual
/// design and compares directions and norms. Set equality is checked up to
/// sign with slack `10 · tolerance`.
pub fn verify_duality(x: &CanonicalDesign, tolerance: f64) -> Result<DualityReport> {
    require_classical(x)?;
    let dual = dual_design(x)?;
    let u = ModelUniverse::all();
    let primal = direction_stream(x, &u).collect(DedupMode::None)?;
    let other = direction_stream(&dual, &u).collect(DedupMode::None)?;
    let lookup: HashMap<(usize, ModelId), usize> = other
        .directions()
        .iter()
        .enumerate()
        .map(|(i, d)| ((d.predictor, d.model), i))
        .collect();
    let full = ModelId::full(x.cols());
    let mut max_mismatch = 0.0f64;
    let mut norm_check = 0.0f64;
    let mut matched = 0;
    for dir in primal.directions() {
        let partner = full.intersection(ModelId::from_mask(!dir.model.mask())).with(dir.predictor);
        let Some(&i) = lookup.get(&(dir.predictor, partner)) else { continue };
        let w = &other.directions()[i];
        let (mut plus, mut minus) = (0.0, 0.0);
        for (a, b) in dir.vector.iter().zip(&w.vector) {
            plus += (a - b) * (a - b);
            minus += (a + b) * (a + b);
        }
        max_mismatch = max_mismatch.max(plus.min(minus).sqrt());
        // ‖ℓ_{j·M}‖ = 1 / ‖X̃_{j·M}‖
        norm_check = norm_check.max((1.0 / (dir.raw_norm * w.raw_norm) - 1.0).abs());
        matched += 1;
    }
    let slack = 10.0 * tolerance;
    let classes = |set: &DirectionSet| {
        let mut ix = DedupIndex::new(set.dim(), slack);
        let mut kept = Vec::new();
        for v in set.vectors() {
            if ix.insert(v) {
                kept.push(v.to_vec());
            }
        }
        (ix, kept)
    };
    let (pi, pk) = classes(&primal);
    let (di, dk) = classes(&other);
    let equal = pk.iter().all(|v| di.contains(v)) && dk.iter().all(|v| pi.contains(v));
    Ok(DualityReport {
        matched_pairs: matched,
        max_mismatch,
        norm_product_check: norm_check,
        sign_classes_equal: equal && matched == primal.len(),
        distinct_directions: pk.len(),
        distinct_dual_directions: dk.len(),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct OrthogonalityCensus {
    /// Number of other directions `w` with `|⟨v, w⟩| < tolerance`, per direction.
    pub partner_counts: Vec<usize>,
    /// Partner count → number of directions with that count.
    pub histogram: BTreeMap<usize, usize>,
    /// Unordered orthogonal pairs.
    pub orthogonal_pairs: usize,
}

/// Counts orthogonal pairs. Duplicates are counted with multiplicity when the
/// set was not deduplicated.
pub fn orthogonality_census(set: &DirectionSet, tolerance: f64) -> OrthogonalityCensus {
    let vs: Vec<&[f64]> = set.vectors().collect();
    let partner_counts: Vec<usize> = (0..vs.len())
        .into_par_iter()
        .map(|i| (0..vs.len()).filter(|&k| k != i && dot(vs[i], vs[k]).abs() < tolerance).count())
        .collect();
    let mut histogram = BTreeMap::new();
    for &c in &partner_counts {
        *histogram.entry(c).or_insert(0) += 1;
    }
    let orthogonal_pairs = partner_counts.iter().sum::<usize>() / 2;
    OrthogonalityCensus { partner_counts, histogram, orthogonal_pairs }
}

/// `Π_K` for a direction set.
#[derive(Clone, Debug)]
pub struct PolytopeSpec {
    directions: DirectionSet,
    k: f64,
}

impl PolytopeSpec {
    pub fn new(directions: DirectionSet, k: f64) -> Result<Self> {
        if directions.is_empty() {
            return Err(PosiError::EmptyDirectionSet);
        }
        if !(k > 0.0 && k.is_finite()) {
            return Err(PosiError::InvalidArgument(format!("K = {k} must be positive")));
        }
        Ok(Self { directions, k })
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn directions(&self) -> &DirectionSet {
        &self.directions
    }

    /// Whether `|ℓᵀz| ≤ K` for every `ℓ`; stops at the first violated face.
    /// Faces carry a relative slack of a few ulps so that the tangent points
    /// `K ℓ` count as inside.
    pub fn contains(&self, z: &[f64]) -> bool {
        let bound = self.k * (1.0 + 8.0 * f64::EPSILON);
        self.directions.vectors().all(|v| dot(v, z).abs() <= bound)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::DEFAULT_RANK_TOLERANCE;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};

    fn random(p: usize, seed: u64) -> CanonicalDesign {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let m = DMatrix::from_fn(p, p, |_, _| rng.random_range(-1.0..1.0));
        CanonicalDesign::from_values(m, CanonicalForm::Unspecified, DEFAULT_RANK_TOLERANCE).unwrap()
    }

    #[test]
    fn identity_is_self_dual() {
        let eye = CanonicalDesign::from_values(DMatrix::identity(3, 3), CanonicalForm::Symmetric, 1e-10).unwrap();
        assert_abs_diff_eq!(dual_design(&eye).unwrap().values().clone(), DMatrix::identity(3, 3), epsilon = 1e-15);
        let rep = verify_duality(&eye, 1e-8).unwrap();
        assert!(rep.sign_classes_equal);
        assert!(rep.max_mismatch < 1e-14);
        assert_eq!(rep.distinct_directions, 3);
    }

    #[test]
    fn double_dual_and_biorthogonality() {
        let x = random(3, 1);
        let dual = dual_design(&x).unwrap();
        assert_abs_diff_eq!(x.values().transpose() * dual.values(), DMatrix::identity(3, 3), epsilon = 1e-10);
        let back = dual_design(&dual).unwrap();
        assert_abs_diff_eq!(back.values().clone(), x.values().clone(), epsilon = 1e-10);
    }

    #[test]
    fn duality_holds_on_random_designs() {
        for seed in 0..5 {
            let x = random(4, 10 + seed);
            let rep = verify_duality(&x, 1e-8).unwrap();
            assert_eq!(rep.matched_pairs, 32);
            assert!(rep.max_mismatch < 1e-8, "{rep:?}");
            assert!(rep.norm_product_check < 1e-8, "{rep:?}");
            assert!(rep.sign_classes_equal);
        }
    }

    #[test]
    fn duality_needs_the_classical_case() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, 1.0]);
        let x = CanonicalDesign::from_values(m, CanonicalForm::Unspecified, 1e-10).unwrap();
        assert!(matches!(dual_design(&x), Err(PosiError::NotClassical { .. })));
    }

    /// Partners of `ℓ_{j·M}` forced by nesting: `ℓ_{j·M} ⟂ ℓ_{j'·M'}` whenever
    /// `M ⊂ M'`, `j ∈ M` and `j' ∈ M' ∖ M`, counted from either side.
    fn nested_partner_count(p: usize, m: ModelId, j: usize) -> usize {
        let mut count = 0;
        for mask in 1u64..(1 << p) {
            let other = ModelId::from_mask(mask);
            if other != m && m.is_subset_of(other) {
                count += other.len() - m.len();
            }
            if other != m && other.is_subset_of(m) && !other.contains(j) {
                count += other.len();
            }
        }
        count
    }

    #[test]
    fn census_on_generic_three_columns() {
        let x = random(3, 3);
        let set = direction_stream(&x, &ModelUniverse::all()).collect(DedupMode::None).unwrap();
        let census = orthogonality_census(&set, 1e-10);
        assert_eq!(census.partner_counts.len(), 12);
        for (dir, &c) in set.directions().iter().zip(&census.partner_counts) {
            assert_eq!(c, nested_partner_count(3, dir.model, dir.predictor), "{dir:?}");
        }
        // Singletons and full-model directions have (p − 1)·2^{p−2} = 4
        // partners; the middle layer has 2.
        let total: usize = census.partner_counts.iter().sum();
        assert_eq!(total, 36);
    }

    #[test]
    fn census_matches_brute_force_table_for_two_columns() {
        let x = random(2, 4);
        let set = direction_stream(&x, &ModelUniverse::all()).collect(DedupMode::None).unwrap();
        let census = orthogonality_census(&set, 1e-10);
        let vs: Vec<&[f64]> = set.vectors().collect();
        for i in 0..vs.len() {
            let mut c = 0;
            for k in 0..vs.len() {
                if i != k && (vs[i][0] * vs[k][0] + vs[i][1] * vs[k][1]).abs() < 1e-10 {
                    c += 1;
                }
            }
            assert_eq!(census.partner_counts[i], c);
        }
        // ℓ_{1·{1}} ⟂ ℓ_{2·{1,2}} and ℓ_{2·{2}} ⟂ ℓ_{1·{1,2}}.
        assert_eq!(census.orthogonal_pairs, 2);
    }

    #[test]
    fn orthogonal_design_census_is_complete() {
        let eye = CanonicalDesign::from_values(DMatrix::identity(4, 4), CanonicalForm::Symmetric, 1e-10).unwrap();
        let set = direction_stream(&eye, &ModelUniverse::all()).collect(DedupMode::default()).unwrap();
        let census = orthogonality_census(&set, 1e-12);
        assert_eq!(census.partner_counts, vec![3; 4]);
    }

    #[test]
    fn polytope_faces_ball_and_scaling() {
        let x = random(3, 5);
        let set = direction_stream(&x, &ModelUniverse::all()).collect(DedupMode::default()).unwrap();
        let k = 2.5;
        let poly = PolytopeSpec::new(set.clone(), k).unwrap();
        for v in set.vectors() {
            let tangent: Vec<f64> = v.iter().map(|a| a * k).collect();
            assert!(poly.contains(&tangent));
            let out: Vec<f64> = v.iter().map(|a| a * (k + 1e-9)).collect();
            assert!(!poly.contains(&out));
        }
        let z = [1.0, -1.2, 0.9];
        let norm = dot(&z, &z).sqrt();
        let inside: Vec<f64> = z.iter().map(|a| a * k / norm).collect();
        assert!(poly.contains(&inside));
        let neg: Vec<f64> = inside.iter().map(|a| -a).collect();
        assert!(poly.contains(&neg));
        let scaled = PolytopeSpec::new(set, 3.0 * k).unwrap();
        let big: Vec<f64> = z.iter().map(|a| 3.0 * a).collect();
        assert_eq!(poly.contains(&z), scaled.contains(&big));
    }
}
