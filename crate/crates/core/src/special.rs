//! Two analyzed design families.
//!
//! Exchangeable designs `X_p(a) = I_p + aE` (all column pairs at the same
//! angle) and the upper-triangular PoSI1 design
//! `(e_1, …, e_{p−1}, (c, …, c, √(1 − (p−1)c²)))`, whose max-|t| for the last
//! predictor reduces to order statistics and is computable in `O(p log p)`.

use rayon::prelude::*;
use serde::Serialize;

use crate::design::{CanonicalDesign, CanonicalForm, Direction, ModelId, ModelUniverse, DEFAULT_RANK_TOLERANCE};
use crate::engine::{orth_k, posi_k, quantile_with_error, ErrorModel, McConfig};
use crate::error::{PosiError, Result};
use crate::numeric::{golden_max, norm_pdf, norm_quantile};
use crate::rng;

fn check_exchangeable(p: usize, a: f64) -> Result<()> {
    if p == 0 {
        return Err(PosiError::InvalidArgument("p must be at least 1".into()));
    }
    if !(a > -1.0 / p as f64) || !a.is_finite() {
        return Err(PosiError::InvalidArgument(format!("a = {a} outside (-1/{p}, inf)")));
    }
    Ok(())
}

/// `I_p + aE`, in symmetric canonical form.
pub fn exchangeable_design(p: usize, a: f64) -> Result<CanonicalDesign> {
    check_exchangeable(p, a)?;
    let m = nalgebra::DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 + a } else { a });
    CanonicalDesign::from_values(m, CanonicalForm::Symmetric, DEFAULT_RANK_TOLERANCE)
}

/// `c_p(a) = −a / (1 + pa)`, so that `X_p(a)⁻¹ ∝ X_p(c_p(a))`.
pub fn exchangeable_inverse_parameter(p: usize, a: f64) -> Result<f64> {
    check_exchangeable(p, a)?;
    Ok(-a / (1.0 + p as f64 * a))
}

/// Cosine between any two columns of `X_p(a)`: `a(2 + pa) / (pa² + 2a + 1)`,
/// tending to `−1/(p − 1)` as `a ↓ −1/p`.
pub fn exchangeable_cosine(p: usize, a: f64) -> Result<f64> {
    check_exchangeable(p, a)?;
    let pf = p as f64;
    Ok(a * (2.0 + pf * a) / (pf * a * a + 2.0 * a + 1.0))
}

/// `X_{j·M}` of `X_p(a)` from its closed form. For `|M| = m ≥ 2`, with
/// `δ = (1/(m−1)) / (pa² + 2a + 1/(m−1))`, the entries are `1 + δa` at `j`,
/// `−(1 − δ)/(m − 1) + δa` on `M ∖ {j}` and `δa` elsewhere.
pub fn exchangeable_direction_formula(p: usize, a: f64, m: ModelId, j: usize) -> Result<Direction> {
    check_exchangeable(p, a)?;
    if j >= p || !m.is_subset_of(ModelId::full(p)) {
        return Err(PosiError::ColumnOutOfRange { index: j, cols: p });
    }
    if !m.contains(j) {
        return Err(PosiError::PredictorNotInModel { predictor: j + 1, model: m });
    }
    let size = m.len();
    let mut v = vec![0.0; p];
    if size == 1 {
        v.iter_mut().for_each(|x| *x = a);
        v[j] += 1.0;
    } else {
        let inv = 1.0 / (size as f64 - 1.0);
        let delta = inv / (p as f64 * a * a + 2.0 * a + inv);
        let da = delta * a;
        for (k, x) in v.iter_mut().enumerate() {
            *x = if k == j {
                1.0 + da
            } else if m.contains(k) {
                -(1.0 - delta) * inv + da
            } else {
                da
            };
        }
    }
    let raw_norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= raw_norm);
    Ok(Direction { vector: v, predictor: j, model: m, raw_norm })
}

/// `δa` from the closed form, for `|M| = m ≥ 2`.
pub fn exchangeable_da(p: usize, a: f64, m: usize) -> f64 {
    let inv = 1.0 / (m as f64 - 1.0);
    inv / (p as f64 * a * a + 2.0 * a + inv) * a
}

/// `0` followed by a logarithmic grid on `[10⁻², 10²]`. Negative `a` are
/// covered through `a ↔ c_p(a)`, which leaves the constant unchanged.
pub fn default_a_grid(points: usize) -> Vec<f64> {
    let mut grid = vec![0.0];
    let n = points.max(2);
    grid.extend((0..n).map(|i| 10f64.powf(-2.0 + 4.0 * i as f64 / (n - 1) as f64)));
    grid
}

#[derive(Clone, Debug, Serialize)]
pub struct ExchangeableCell {
    pub a: f64,
    #[serde(rename = "K")]
    pub k: f64,
    pub mc_standard_error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExchangeableRow {
    pub p: usize,
    pub best_a: f64,
    pub k_max: f64,
    pub k_max_standard_error: f64,
    /// `sup_a K / √(2 log p)`.
    pub ratio: f64,
    /// Orthogonal member (`a = 0`), closed form.
    pub orth_ratio: f64,
    pub cells: Vec<ExchangeableCell>,
}

/// `sup_a K(X_p(a), α) / √(2 log p)` for each `p`, known σ. Cell `(p, a)`
/// uses the given seed for every cell (common random numbers across `a`).
pub fn exchangeable_ratio_table(
    p_list: &[usize],
    a_grid: &[f64],
    alpha: f64,
    samples: usize,
    seed: u64,
) -> Result<Vec<ExchangeableRow>> {
    let u = ModelUniverse::all();
    let cfg = McConfig::new(alpha, ErrorModel::Known, samples, seed);
    p_list
        .iter()
        .map(|&p| {
            if p < 2 {
                return Err(PosiError::InvalidArgument("ratio needs p >= 2".into()));
            }
            let cells = a_grid
                .iter()
                .map(|&a| {
                    let est = posi_k(&exchangeable_design(p, a)?, &u, &cfg)?;
                    Ok(ExchangeableCell { a, k: est.k, mc_standard_error: est.mc_standard_error })
                })
                .collect::<Result<Vec<_>>>()?;
            let best = cells
                .iter()
                .max_by(|x, y| x.k.total_cmp(&y.k))
                .ok_or_else(|| PosiError::InvalidArgument("empty a-grid".into()))?;
            let scale = (2.0 * (p as f64).ln()).sqrt();
            Ok(ExchangeableRow {
                p,
                best_a: best.a,
                k_max: best.k,
                k_max_standard_error: best.mc_standard_error,
                ratio: best.k / scale,
                orth_ratio: orth_k(alpha, p, ErrorModel::Known)?.k / scale,
                cells,
            })
        })
        .collect()
}

fn check_worst(p: usize, c: f64) -> Result<()> {
    if p < 2 {
        return Err(PosiError::InvalidArgument("p must be at least 2".into()));
    }
    if !(c * c < 1.0 / (p as f64 - 1.0)) {
        return Err(PosiError::InvalidArgument(format!("c = {c} needs c^2 < 1/(p-1) = {}", 1.0 / (p as f64 - 1.0))));
    }
    Ok(())
}

/// `(e_1, …, e_{p−1}, (c, …, c, √(1 − (p−1)c²)))`, upper triangular.
pub fn worst_posi1_design(p: usize, c: f64) -> Result<CanonicalDesign> {
    check_worst(p, c)?;
    let last = (1.0 - (p as f64 - 1.0) * c * c).sqrt();
    let m = nalgebra::DMatrix::from_fn(p, p, |i, j| {
        if j + 1 < p {
            if i == j { 1.0 } else { 0.0 }
        } else if i + 1 < p {
            c
        } else {
            last
        }
    });
    CanonicalDesign::from_values(m, CanonicalForm::UpperTriangular, DEFAULT_RANK_TOLERANCE)
}

/// `max_{M ∋ p} |ℓ*_{p·M}ᵀ z|` for the worst-case PoSI1 design, with the
/// maximizing model size.
///
/// For `|M| = m`, `ℓ*_{p·M}ᵀz = A_m z_p + B_m Σ_{k ∉ M} z_k` with
/// `A_m = √((1 − (p−1)c²)/(1 − (m−1)c²))` and `B_m = c/√(1 − (m−1)c²)`, so
/// the best `M` of each size leaves out the `p − m` largest or smallest of
/// `z_1, …, z_{p−1}`.
pub fn fast_worst_posi1_stat(p: usize, c: f64, z: &[f64]) -> Result<(f64, usize)> {
    check_worst(p, c)?;
    if z.len() != p {
        return Err(PosiError::DimensionMismatch { expected: p, found: z.len() });
    }
    let sums = TailSums::new(z);
    Ok(sums.best(c))
}

/// Same statistic for several `c` sharing one sort of `z`.
pub fn fast_worst_posi1_stat_grid(p: usize, cs: &[f64], z: &[f64]) -> Result<Vec<(f64, usize)>> {
    for &c in cs {
        check_worst(p, c)?;
    }
    if z.len() != p {
        return Err(PosiError::DimensionMismatch { expected: p, found: z.len() });
    }
    let sums = TailSums::new(z);
    Ok(cs.iter().map(|&c| sums.best(c)).collect())
}

/// Prefix sums of the sorted `z_1..z_{p−1}` from both ends.
struct TailSums {
    p: usize,
    zp: f64,
    /// `top[k]`: sum of the `k` largest; `bottom[k]`: sum of the `k` smallest.
    top: Vec<f64>,
    bottom: Vec<f64>,
}

impl TailSums {
    fn new(z: &[f64]) -> Self {
        let p = z.len();
        let mut rest = z[..p - 1].to_vec();
        rest.sort_by(f64::total_cmp);
        let mut bottom = Vec::with_capacity(p);
        let mut top = Vec::with_capacity(p);
        bottom.push(0.0);
        top.push(0.0);
        for k in 0..p - 1 {
            bottom.push(bottom[k] + rest[k]);
            top.push(top[k] + rest[p - 2 - k]);
        }
        Self { p, zp: z[p - 1], top, bottom }
    }

    fn best(&self, c: f64) -> (f64, usize) {
        let p = self.p;
        let c2 = c * c;
        let head = 1.0 - (p as f64 - 1.0) * c2;
        let mut best = (f64::NEG_INFINITY, 0);
        for m in 1..=p {
            let denom = 1.0 - (m as f64 - 1.0) * c2;
            let a = (head / denom).sqrt();
            let b = c / denom.sqrt();
            let k = p - m;
            let base = a * self.zp;
            let v = (base + b * self.top[k]).abs().max((base + b * self.bottom[k]).abs());
            if v > best.0 {
                best = (v, m);
            }
        }
        best
    }
}

/// `c² = (1 − 10^{−k}) / (p − 1)` for `k = 1..=levels`, approaching the
/// boundary geometrically.
pub fn default_c_grid(p: usize, levels: usize) -> Vec<f64> {
    (1..=levels)
        .map(|k| ((1.0 - 10f64.powi(-(k as i32))) / (p as f64 - 1.0)).sqrt())
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct WorstPosi1Cell {
    pub c: f64,
    /// Quantile of the fast statistic (known σ).
    pub k1: f64,
    pub k1_over_sqrt_p: f64,
    pub mc_standard_error: f64,
    /// Average maximizing `m / p` over the draws.
    pub mean_optimal_fraction: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct WorstPosi1Table {
    pub p: usize,
    pub alpha: f64,
    pub mc_samples: usize,
    pub seed: u64,
    pub cells: Vec<WorstPosi1Cell>,
    pub sup_k1_over_sqrt_p: f64,
}

/// Monte-Carlo PoSI1 constants of the worst-case design across a `c`-grid,
/// all cells sharing the same draws.
pub fn worst_posi1_table(p: usize, c_grid: &[f64], alpha: f64, samples: usize, seed: u64) -> Result<WorstPosi1Table> {
    if c_grid.is_empty() {
        return Err(PosiError::InvalidArgument("empty c-grid".into()));
    }
    for &c in c_grid {
        check_worst(p, c)?;
    }
    crate::engine::quantile_rank(alpha, samples)?;
    let per_draw: Vec<Vec<(f64, usize)>> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut z = vec![0.0; p];
            rng::draw(seed, i as u64, ErrorModel::Known, &mut z);
            fast_worst_posi1_stat_grid(p, c_grid, &z)
        })
        .collect::<Result<_>>()?;
    let sqrt_p = (p as f64).sqrt();
    let cells = c_grid
        .iter()
        .enumerate()
        .map(|(g, &c)| {
            let draws: Vec<f64> = per_draw.iter().map(|row| row[g].0).collect();
            let frac = per_draw.iter().map(|row| row[g].1 as f64).sum::<f64>() / (samples as f64 * p as f64);
            let (k1, se) = quantile_with_error(&draws, alpha)?;
            Ok(WorstPosi1Cell { c, k1, k1_over_sqrt_p: k1 / sqrt_p, mc_standard_error: se, mean_optimal_fraction: frac })
        })
        .collect::<Result<Vec<_>>>()?;
    let sup = cells.iter().map(|c| c.k1_over_sqrt_p).fold(f64::NEG_INFINITY, f64::max);
    Ok(WorstPosi1Table { p, alpha, mc_samples: samples, seed, cells, sup_k1_over_sqrt_p: sup })
}

/// `f(r) = φ(Φ⁻¹(r)) / √(1 − r)`.
pub fn rate_function_f(r: f64) -> Result<f64> {
    if !(r > 0.0 && r < 1.0) {
        return Err(PosiError::InvalidArgument(format!("r = {r} outside (0, 1)")));
    }
    Ok(norm_pdf(norm_quantile(r)) / (1.0 - r).sqrt())
}

/// `(r*, f(r*))` by golden-section search.
pub fn rate_function_max() -> (f64, f64) {
    golden_max(|r| rate_function_f(r).unwrap_or(0.0), 1e-6, 1.0 - 1e-6, 1e-9)
}
