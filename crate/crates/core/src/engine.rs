//! PoSI constants: Monte-Carlo estimation of the max-|t| quantile over a
//! direction set, and the closed-form reference constants.
//!
//! Draw `i` is `(Zᵢ, σ̂ᵢ)` with `Zᵢ ~ N(0, I_d)` and `σ̂ᵢ² ~ χ²_r / r`, generated
//! from the counter-based stream `(seed, i)`. The draw bank is held in
//! memory and directions are absorbed chunk by chunk, each chunk evaluated in
//! parallel over fixed blocks of draws. Block boundaries depend only on `N`,
//! so results are bit-identical for any thread count.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::design::{
    direction_stream, CanonicalDesign, DedupMode, DirectionSet, DirectionStream, ModelUniverse,
    DEFAULT_DEDUP_TOLERANCE,
};
use crate::error::{PosiError, Result};
use crate::numeric::{
    brent, chi_squared_quantile, f_quantile, integrate, norm_pdf, norm_quantile,
    two_sided_normal_coverage,
};
use crate::rng;

/// Distribution of the variance estimate: `σ̂ = σ` (known) or
/// `σ̂² ~ σ² χ²_r / r` independent of the response.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum ErrorModel {
    #[default]
    Known,
    Estimated { df: u32 },
}

impl ErrorModel {
    pub fn estimated(df: u32) -> Result<Self> {
        if df == 0 {
            return Err(PosiError::InvalidArgument("degrees of freedom must be at least 1".into()));
        }
        Ok(ErrorModel::Estimated { df })
    }

    pub fn df(self) -> Option<u32> {
        match self {
            ErrorModel::Known => None,
            ErrorModel::Estimated { df } => Some(df),
        }
    }

    pub fn sigma_known(self) -> bool {
        self == ErrorModel::Known
    }
}

impl fmt::Display for ErrorModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ErrorModel::Known => write!(f, "inf"),
            ErrorModel::Estimated { df } => write!(f, "{df}"),
        }
    }
}

impl FromStr for ErrorModel {
    type Err = PosiError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("inf") || s.eq_ignore_ascii_case("infinity") {
            return Ok(ErrorModel::Known);
        }
        let df: u32 = s
            .parse()
            .map_err(|_| PosiError::InvalidArgument(format!("degrees of freedom {s:?} is not a positive integer or \"inf\"")))?;
        ErrorModel::estimated(df)
    }
}

impl Serialize for ErrorModel {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ErrorModel::Known => s.serialize_str("inf"),
            ErrorModel::Estimated { df } => s.serialize_u32(*df),
        }
    }
}

impl Serialize for ModelUniverse {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    MonteCarlo,
    ClosedForm,
    Bound,
}

/// An estimated constant together with everything needed to reproduce it.
#[derive(Clone, Debug, Serialize)]
pub struct ConstantEstimate {
    #[serde(rename = "K")]
    pub k: f64,
    pub alpha: f64,
    pub df: ErrorModel,
    pub mc_samples: usize,
    pub mc_standard_error: f64,
    pub seed: Option<u64>,
    pub d: usize,
    pub direction_count: usize,
    pub method: Method,
    /// Universe the constant is valid for; `None` means any universe
    /// (closed forms that depend only on `d`).
    pub universe: Option<ModelUniverse>,
    /// 1-based predictor for PoSI1 constants.
    pub predictor: Option<usize>,
}

impl ConstantEstimate {
    fn closed_form(k: f64, alpha: f64, df: ErrorModel, d: usize, method: Method) -> Self {
        Self {
            k,
            alpha,
            df,
            mc_samples: 0,
            mc_standard_error: 0.0,
            seed: None,
            d,
            direction_count: 0,
            method,
            universe: None,
            predictor: None,
        }
    }

    /// A user-supplied constant, e.g. the naive `z_{1−α/2}`, valid for any
    /// universe as far as bookkeeping goes.
    pub fn fixed(k: f64, alpha: f64, df: ErrorModel, d: usize) -> Self {
        Self::closed_form(k, alpha, df, d, Method::ClosedForm)
    }

    /// Whether intervals for model `m` may be calibrated with this constant.
    pub fn covers_model(&self, m: crate::design::ModelId, p: usize) -> bool {
        self.universe.as_ref().is_none_or(|u| u.contains(m, p))
    }
}

/// Monte-Carlo settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McConfig {
    pub alpha: f64,
    pub error_model: ErrorModel,
    pub samples: usize,
    pub seed: u64,
    /// `None` picks automatically: deduplicate when the set is small enough
    /// to materialize, stream otherwise.
    pub dedup: Option<DedupMode>,
}

impl McConfig {
    pub fn new(alpha: f64, error_model: ErrorModel, samples: usize, seed: u64) -> Self {
        Self { alpha, error_model, samples, seed, dedup: None }
    }

    pub fn with_dedup(mut self, dedup: DedupMode) -> Self {
        self.dedup = Some(dedup);
        self
    }
}

impl Default for McConfig {
    fn default() -> Self {
        Self::new(0.05, ErrorModel::Known, 100_000, 0)
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(PosiError::InvalidArgument(format!("alpha = {alpha} must lie in (0, 1)")))
    }
}

const DRAW_BLOCK: usize = 256;
const DIRECTION_CHUNK: usize = 1024;
/// Largest `|L| · d` materialized for deduplication.
const MATERIALIZE_LIMIT: usize = 1 << 24;

/// The draws `(Zᵢ, σ̂ᵢ)`, in fixed blocks of `DRAW_BLOCK` rows.
struct DrawBank {
    dim: usize,
    blocks: Vec<DMatrix<f64>>,
    sigma: Vec<Vec<f64>>,
}

impl DrawBank {
    fn new(dim: usize, model: ErrorModel, n: usize, seed: u64) -> Self {
        let nblocks = n.div_ceil(DRAW_BLOCK);
        let (blocks, sigma) = (0..nblocks)
            .into_par_iter()
            .map(|b| {
                let rows = DRAW_BLOCK.min(n - b * DRAW_BLOCK);
                let mut z = DMatrix::zeros(rows, dim);
                let mut sig = Vec::with_capacity(rows);
                let mut buf = vec![0.0; dim];
                for r in 0..rows {
                    let i = (b * DRAW_BLOCK + r) as u64;
                    sig.push(rng::draw(seed, i, model, &mut buf));
                    for (c, v) in buf.iter().enumerate() {
                        z[(r, c)] = *v;
                    }
                }
                (z, sig)
            })
            .unzip();
        Self { dim, blocks, sigma }
    }
}

/// Per-draw running maxima of `|ℓᵀZᵢ|`.
struct RunningMax {
    bank: DrawBank,
    maxima: Vec<Vec<f64>>,
    buffer: Vec<f64>,
    absorbed: usize,
}

impl RunningMax {
    fn new(bank: DrawBank) -> Self {
        let maxima = bank.sigma.iter().map(|s| vec![0.0; s.len()]).collect();
        Self { bank, maxima, buffer: Vec::with_capacity(DIRECTION_CHUNK * 16), absorbed: 0 }
    }

    fn push(&mut self, v: &[f64]) {
        self.buffer.extend_from_slice(v);
        if self.buffer.len() == DIRECTION_CHUNK * self.bank.dim {
            self.flush();
        }
    }

    fn flush(&mut self) {
        let d = self.bank.dim;
        if self.buffer.is_empty() {
            return;
        }
        let count = self.buffer.len() / d;
        let chunk = DMatrix::from_column_slice(d, count, &self.buffer);
        self.bank
            .blocks
            .par_iter()
            .zip(self.maxima.par_iter_mut())
            .for_each(|(z, mx)| {
                let prod = z * &chunk;
                for col in prod.column_iter() {
                    for (m, v) in mx.iter_mut().zip(col.iter()) {
                        let a = v.abs();
                        if a > *m {
                            *m = a;
                        }
                    }
                }
            });
        self.absorbed += count;
        self.buffer.clear();
    }

    fn finish(mut self) -> Vec<f64> {
        self.flush();
        self.maxima
            .iter()
            .zip(&self.bank.sigma)
            .flat_map(|(m, s)| m.iter().zip(s).map(|(a, b)| a / b))
            .collect()
    }
}

fn check_samples(n: usize) -> Result<()> {
    if n == 0 {
        return Err(PosiError::InvalidArgument("need at least one Monte-Carlo sample".into()));
    }
    Ok(())
}

/// `maxᵢ |ℓᵀZᵢ| / σ̂ᵢ` over a materialized set, one value per draw.
pub fn max_abs_t_draws(set: &DirectionSet, model: ErrorModel, n: usize, seed: u64) -> Result<Vec<f64>> {
    check_samples(n)?;
    if set.is_empty() {
        return Err(PosiError::EmptyDirectionSet);
    }
    let mut acc = RunningMax::new(DrawBank::new(set.dim(), model, n, seed));
    for v in set.vectors() {
        acc.push(v);
    }
    Ok(acc.finish())
}

/// As [`max_abs_t_draws`], but consumes the stream once without storing it.
/// Returns the draws and the number of directions absorbed.
pub fn max_abs_t_draws_streaming(
    stream: &DirectionStream<'_>,
    model: ErrorModel,
    n: usize,
    seed: u64,
) -> Result<(Vec<f64>, usize)> {
    check_samples(n)?;
    let mut acc = RunningMax::new(DrawBank::new(stream.design().rank(), model, n, seed));
    stream.for_each(|dir| acc.push(dir.vector));
    acc.flush();
    if acc.absorbed == 0 {
        return Err(match stream.predictor() {
            Some(j) => PosiError::PredictorInNoModel(j + 1),
            None => PosiError::EmptyDirectionSet,
        });
    }
    let count = acc.absorbed;
    Ok((acc.finish(), count))
}

/// 1-based rank `⌈(1 − α)(N + 1)⌉` of the conservative order statistic.
pub fn quantile_rank(alpha: f64, n: usize) -> Result<usize> {
    check_alpha(alpha)?;
    let k = ((1.0 - alpha) * (n as f64 + 1.0)).ceil() as usize;
    if k > n {
        return Err(PosiError::InvalidArgument(format!(
            "N = {n} samples too few for alpha = {alpha}: need rank {k} <= N"
        )));
    }
    Ok(k.max(1))
}

/// Conservative empirical `(1 − α)` quantile and its standard error.
pub fn quantile_with_error(draws: &[f64], alpha: f64) -> Result<(f64, f64)> {
    let n = draws.len();
    let k = quantile_rank(alpha, n)?;
    let mut sorted = draws.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q = sorted[k - 1];
    let density = kde_at(&sorted, q);
    let se = if density > 0.0 {
        (alpha * (1.0 - alpha) / n as f64).sqrt() / density
    } else {
        0.0
    };
    Ok((q, se))
}

/// Gaussian kernel density estimate at `x` with Silverman's bandwidth.
fn kde_at(sorted: &[f64], x: f64) -> f64 {
    let n = sorted.len() as f64;
    if sorted.len() < 2 {
        return 0.0;
    }
    let mean = sorted.iter().sum::<f64>() / n;
    let sd = (sorted.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let at = |q: f64| sorted[((q * (n - 1.0)).round() as usize).min(sorted.len() - 1)];
    let iqr = at(0.75) - at(0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let h = 0.9 * spread * n.powf(-0.2);
    if !(h > 0.0) {
        return 0.0;
    }
    let lo = sorted.partition_point(|&v| v < x - 8.0 * h);
    let hi = sorted.partition_point(|&v| v <= x + 8.0 * h);
    sorted[lo..hi].iter().map(|v| norm_pdf((x - v) / h)).sum::<f64>() / (n * h)
}

fn mc_estimate(draws: &[f64], cfg: &McConfig, d: usize, direction_count: usize) -> Result<ConstantEstimate> {
    let (k, se) = quantile_with_error(draws, cfg.alpha)?;
    Ok(ConstantEstimate {
        k,
        alpha: cfg.alpha,
        df: cfg.error_model,
        mc_samples: draws.len(),
        mc_standard_error: se,
        seed: Some(cfg.seed),
        d,
        direction_count,
        method: Method::MonteCarlo,
        universe: None,
        predictor: None,
    })
}

/// Monte-Carlo constant for an arbitrary direction set.
pub fn constant_for_directions(set: &DirectionSet, cfg: &McConfig) -> Result<ConstantEstimate> {
    check_alpha(cfg.alpha)?;
    quantile_rank(cfg.alpha, cfg.samples)?;
    let draws = max_abs_t_draws(set, cfg.error_model, cfg.samples, cfg.seed)?;
    mc_estimate(&draws, cfg, set.dim(), set.len())
}

fn constant_for_stream(stream: &DirectionStream<'_>, cfg: &McConfig) -> Result<ConstantEstimate> {
    check_alpha(cfg.alpha)?;
    quantile_rank(cfg.alpha, cfg.samples)?;
    let d = stream.design().rank();
    let dedup = match cfg.dedup {
        Some(mode) => Some(mode),
        None => {
            let n = stream.count().emitted;
            (n.saturating_mul(d) <= MATERIALIZE_LIMIT).then_some(DedupMode::UpToSign(DEFAULT_DEDUP_TOLERANCE))
        }
    };
    let mut est = match dedup {
        Some(mode) => {
            let set = stream.collect(mode)?;
            constant_for_directions(&set, cfg)?
        }
        None => {
            let (draws, count) = max_abs_t_draws_streaming(stream, cfg.error_model, cfg.samples, cfg.seed)?;
            mc_estimate(&draws, cfg, d, count)?
        }
    };
    est.universe = Some(stream.universe().clone());
    est.predictor = stream.predictor().map(|j| j + 1);
    Ok(est)
}

/// The PoSI constant `K(X, U, α, r)`.
pub fn posi_k(design: &CanonicalDesign, universe: &ModelUniverse, cfg: &McConfig) -> Result<ConstantEstimate> {
    constant_for_stream(&direction_stream(design, universe), cfg)
}

/// The PoSI1 constant for predictor `j` (0-based): the quantile of
/// `max_{M ∋ j} |t_{j·M}|`.
pub fn posi1_k(design: &CanonicalDesign, universe: &ModelUniverse, j: usize, cfg: &McConfig) -> Result<ConstantEstimate> {
    let stream = direction_stream(design, universe).only_predictor(j)?;
    constant_for_stream(&stream, cfg)
}

/// Scheffé constant `√(d F_{d,r,1−α})`, or `√(χ²_{d,1−α})` for known σ.
pub fn scheffe_k(alpha: f64, d: usize, model: ErrorModel) -> Result<ConstantEstimate> {
    check_alpha(alpha)?;
    check_rank(d)?;
    let k = match model {
        ErrorModel::Known => chi_squared_quantile(d as f64, 1.0 - alpha).sqrt(),
        ErrorModel::Estimated { df } => (d as f64 * f_quantile(d as f64, df as f64, 1.0 - alpha)).sqrt(),
    };
    Ok(ConstantEstimate::closed_form(k, alpha, model, d, Method::ClosedForm))
}

fn check_rank(d: usize) -> Result<()> {
    if d == 0 {
        return Err(PosiError::InvalidArgument("rank d must be at least 1".into()));
    }
    Ok(())
}

/// Density of `σ̂ = √(χ²_r / r)`.
fn sigma_hat_density(r: f64) -> impl Fn(f64) -> f64 {
    use statrs::distribution::{ChiSquared, Continuous};
    let chi = ChiSquared::new(r).expect("positive df");
    move |s: f64| {
        if s <= 0.0 {
            return 0.0;
        }
        chi.pdf(r * s * s) * 2.0 * r * s
    }
}

/// Constant of an orthogonal design of rank `d`: the root of
/// `E[(2Φ(Kσ̂) − 1)^d] = 1 − α` (`σ̂ ≡ 1` for known σ).
pub fn orth_k(alpha: f64, d: usize, model: ErrorModel) -> Result<ConstantEstimate> {
    check_alpha(alpha)?;
    check_rank(d)?;
    let dd = d as f64;
    // (2Φ(K) − 1) = (1 − α)^{1/d}; solved in the tail to keep precision.
    let tail = -((-alpha).ln_1p() / dd).exp_m1();
    let known = -norm_quantile(tail / 2.0);
    let k = match model {
        ErrorModel::Known => known,
        ErrorModel::Estimated { df } => {
            let r = df as f64;
            let density = sigma_hat_density(r);
            let s_max = (chi_squared_quantile(r, 1.0 - 1e-15) / r).sqrt();
            let coverage = |k: f64| {
                integrate(|s| two_sided_normal_coverage(k * s).powf(dd) * density(s), 0.0, s_max, 1e-13)
            };
            let target = 1.0 - alpha;
            let mut hi = known * 2.0;
            while coverage(hi) < target {
                hi *= 2.0;
                if hi > 1e12 {
                    return Err(PosiError::NoRoot("orthogonal constant diverges".into()));
                }
            }
            brent(|k| coverage(k) - target, known, hi, 1e-11)?
        }
    };
    Ok(ConstantEstimate::closed_form(k, alpha, model, d, Method::ClosedForm))
}

/// `P[|U| > t]` for one coordinate `U` of a uniform point on `S^{d−1}`,
/// using `U² ~ Beta(1/2, (d − 1)/2)`.
pub fn cap_tail(t: f64, d: usize) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    if t >= 1.0 {
        return 0.0;
    }
    statrs::function::beta::beta_reg((d as f64 - 1.0) / 2.0, 0.5, 1.0 - t * t)
}

/// Bonferroni-style sphere-cap bound for `|L|` directions in `ℝ^d` (known σ).
///
/// Writing `Z = R U`, the union of the `|L|` caps `|ℓᵀU| > K′` gets `α/2` and
/// the radius `R` is bounded by its `(1 − α/2)` quantile; `K = K′ √χ²_{d,1−α/2}`.
/// The result is a valid upper bound for every set of that size, but it can
/// exceed the Scheffé constant, which is always valid too.
pub fn cap_bonferroni_bound(direction_count: usize, d: usize, alpha: f64) -> Result<ConstantEstimate> {
    check_alpha(alpha)?;
    if direction_count == 0 {
        return Err(PosiError::EmptyDirectionSet);
    }
    if d < 2 {
        return Err(PosiError::InvalidArgument("the cap bound needs d >= 2".into()));
    }
    let n = direction_count as f64;
    let half = alpha / 2.0;
    let k_cap = brent(|t| n * cap_tail(t, d) - half, 0.0, 1.0, 1e-15)?;
    let radius = chi_squared_quantile(d as f64, 1.0 - half).sqrt();
    let mut est = ConstantEstimate::closed_form(k_cap * radius, alpha, ErrorModel::Known, d, Method::Bound);
    est.direction_count = direction_count;
    Ok(est)
}

/// Limit of `K/√d` for direction sets of size `aᵈ`: `√(1 − 1/a²)`.
pub fn asymptotic_cap_constant(a: f64) -> Result<f64> {
    if !(a > 1.0) {
        return Err(PosiError::InvalidArgument(format!("a = {a} must exceed 1")));
    }
    Ok((1.0 - 1.0 / (a * a)).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::CanonicalForm;
    use approx::assert_abs_diff_eq;

    fn eye(d: usize) -> CanonicalDesign {
        CanonicalDesign::from_values(DMatrix::identity(d, d), CanonicalForm::Symmetric, 1e-10).unwrap()
    }

    fn basis_set(d: usize) -> DirectionSet {
        let vs = (0..d)
            .map(|i| {
                let mut v = vec![0.0; d];
                v[i] = 1.0;
                v
            })
            .collect();
        DirectionSet::from_unit_vectors(d, vs).unwrap()
    }

    #[test]
    fn single_direction_gives_half_normal_draws() {
        let draws = max_abs_t_draws(&basis_set(1), ErrorModel::Known, 100_000, 3).unwrap();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        // sd of |N(0,1)| is √(1 − 2/π) ≈ 0.6028
        let se = (1.0 - 2.0 / std::f64::consts::PI).sqrt() / (draws.len() as f64).sqrt();
        assert!((mean - (2.0 / std::f64::consts::PI).sqrt()).abs() < 3.0 * se, "{mean}");
    }

    #[test]
    fn basis_draws_are_max_of_coordinates() {
        let d = 3;
        let draws = max_abs_t_draws(&basis_set(d), ErrorModel::Estimated { df: 4 }, 50, 9).unwrap();
        for (i, t) in draws.iter().enumerate() {
            let mut z = vec![0.0; d];
            let s = rng::draw(9, i as u64, ErrorModel::Estimated { df: 4 }, &mut z);
            let want = z.iter().fold(0.0f64, |m, v| m.max(v.abs())) / s;
            assert_eq!(*t, want);
        }
    }

    #[test]
    fn draws_dominate_every_member() {
        let x = CanonicalDesign::from_values(
            DMatrix::from_row_slice(3, 3, &[1.0, 0.4, 0.2, 0.0, 1.0, -0.5, 0.0, 0.0, 0.7]),
            CanonicalForm::UpperTriangular,
            1e-10,
        )
        .unwrap();
        let u = ModelUniverse::all();
        let set = direction_stream(&x, &u).collect(DedupMode::None).unwrap();
        let model = ErrorModel::Estimated { df: 7 };
        let draws = max_abs_t_draws(&set, model, 200, 5).unwrap();
        for (i, t) in draws.iter().enumerate() {
            let mut z = vec![0.0; 3];
            let s = rng::draw(5, i as u64, model, &mut z);
            for v in set.vectors() {
                let proj: f64 = v.iter().zip(&z).map(|(a, b)| a * b).sum();
                assert!(*t >= proj.abs() / s * (1.0 - 1e-12));
            }
        }
        let (streamed, count) = max_abs_t_draws_streaming(&direction_stream(&x, &u), model, 200, 5).unwrap();
        assert_eq!(count, set.len());
        for (a, b) in draws.iter().zip(&streamed) {
            assert!((a - b).abs() <= 1e-13 * a.abs());
        }
    }

    #[test]
    fn quantile_rank_is_conservative() {
        assert_eq!(quantile_rank(0.05, 99).unwrap(), 95);
        assert_eq!(quantile_rank(0.05, 100).unwrap(), 96);
        assert!(quantile_rank(0.05, 10).is_err());
        assert!(quantile_rank(0.0, 100).is_err());
    }

    #[test]
    fn marginal_constant_is_the_normal_quantile() {
        let x = eye(1);
        let est = posi_k(&x, &ModelUniverse::all(), &McConfig::new(0.05, ErrorModel::Known, 100_000, 1)).unwrap();
        assert!((est.k - 1.959_963_984_540_054).abs() < 3.0 * est.mc_standard_error, "{est:?}");
        assert!(est.mc_standard_error > 0.0 && est.mc_standard_error < 0.02);
        assert_eq!(est.direction_count, 1);
    }

    #[test]
    fn scheffe_reference_values() {
        assert_abs_diff_eq!(scheffe_k(0.05, 1, ErrorModel::Known).unwrap().k, 1.959_963_984_540_054, epsilon = 1e-10);
        assert_abs_diff_eq!(scheffe_k(0.05, 2, ErrorModel::Known).unwrap().k, 5.991_464_547_107_979f64.sqrt(), epsilon = 1e-10);
        let mut last = 0.0;
        for d in 1..12 {
            let k = scheffe_k(0.05, d, ErrorModel::Estimated { df: 10 }).unwrap().k;
            assert!(k > last);
            last = k;
        }
        // d = 1: t_{10, 0.975}
        assert_abs_diff_eq!(
            scheffe_k(0.05, 1, ErrorModel::Estimated { df: 10 }).unwrap().k,
            2.228_138_851_986_274,
            epsilon = 1e-9
        );
    }

    #[test]
    fn orthogonal_reference_values() {
        assert_abs_diff_eq!(orth_k(0.05, 1, ErrorModel::Known).unwrap().k, 1.959_963_984_540_054, epsilon = 1e-10);
        let k2 = orth_k(0.05, 2, ErrorModel::Known).unwrap().k;
        assert_abs_diff_eq!((2.0 * crate::numeric::norm_cdf(k2) - 1.0).powi(2), 0.95, epsilon = 1e-12);
        assert_abs_diff_eq!(k2, 2.2365, epsilon = 1e-4);
        let k10 = orth_k(0.05, 10, ErrorModel::Known).unwrap().k;
        assert_abs_diff_eq!(k10, 2.800, epsilon = 1e-3);
    }

    #[test]
    fn finite_df_orthogonal_constant() {
        // d = 1 reduces to the t quantile.
        let k = orth_k(0.05, 1, ErrorModel::Estimated { df: 10 }).unwrap().k;
        assert_abs_diff_eq!(k, 2.228_138_851_986_274, epsilon = 1e-8);
        let k_known = orth_k(0.05, 5, ErrorModel::Known).unwrap().k;
        let k_est = orth_k(0.05, 5, ErrorModel::Estimated { df: 20 }).unwrap().k;
        assert!(k_est > k_known);
    }

    #[test]
    fn cap_bound_single_direction_and_monotone_in_count() {
        let one = cap_bonferroni_bound(1, 2, 0.05).unwrap();
        // The composed bound is conservative relative to the exact marginal quantile.
        assert!(one.k >= 1.959_963_984_540_054);
        assert_eq!(one.method, Method::Bound);
        let a = cap_bonferroni_bound(10, 4, 0.05).unwrap().k;
        let b = cap_bonferroni_bound(100, 4, 0.05).unwrap().k;
        assert!(b > a);
        assert!(cap_bonferroni_bound(10, 1, 0.05).is_err());
    }

    #[test]
    fn cap_tail_matches_uniform_sphere_in_three_dimensions() {
        // On S², each coordinate is uniform on [−1, 1].
        for t in [0.1, 0.5, 0.9] {
            assert_abs_diff_eq!(cap_tail(t, 3), 1.0 - t, epsilon = 1e-12);
        }
    }

    #[test]
    fn asymptotic_cap_values() {
        assert_abs_diff_eq!(asymptotic_cap_constant(2.0).unwrap(), 3f64.sqrt() / 2.0, epsilon = 1e-15);
        assert!(asymptotic_cap_constant(1.0 + 1e-12).unwrap() < 1e-5);
        assert!(asymptotic_cap_constant(1e8).unwrap() > 0.999_999);
        assert!(asymptotic_cap_constant(1.0).is_err());
    }

    #[test]
    fn error_model_parse_and_display() {
        assert_eq!("inf".parse::<ErrorModel>().unwrap(), ErrorModel::Known);
        assert_eq!("12".parse::<ErrorModel>().unwrap(), ErrorModel::Estimated { df: 12 });
        assert!("0".parse::<ErrorModel>().is_err());
        assert!("-3".parse::<ErrorModel>().is_err());
        assert_eq!(ErrorModel::Estimated { df: 3 }.to_string(), "3");
    }

    #[test]
    fn posi1_on_orthogonal_design_is_the_marginal_quantile() {
        let x = eye(3);
        let cfg = McConfig::new(0.05, ErrorModel::Known, 50_000, 2);
        let est = posi1_k(&x, &ModelUniverse::all(), 1, &cfg).unwrap();
        assert_eq!(est.direction_count, 1);
        assert_eq!(est.predictor, Some(2));
        assert!((est.k - 1.959_963_984_540_054).abs() < 3.0 * est.mc_standard_error);
    }
}
