//! Submodel fits, t-ratios, PoSI intervals, the SPAR selectors and a
//! coverage simulator.
//!
//! Everything works in canonical coordinates: the response is the
//! `d`-vector `ỹ = Qᵀy` and the mean is `μ̃ = Qᵀμ`. Coefficients go through the
//! adjusted predictors, `β̂_{j·M} = X̃_{j·M}ᵀ ỹ / ‖X̃_{j·M}‖²`.

use rayon::prelude::*;
use serde::Serialize;

use crate::design::{adjusted_predictor, direction_stream, enumerate_models, CanonicalDesign, ModelId, ModelUniverse};
use crate::engine::{ConstantEstimate, ErrorModel};
use crate::error::{PosiError, Result};
use crate::numeric::dot;
use crate::rng;

/// Least-squares fit of one submodel.
#[derive(Clone, Debug, Serialize)]
pub struct FitResult {
    pub model: ModelId,
    /// `β̂_{j·M}` for `j ∈ M` in ascending order of `j`.
    pub estimates: Vec<f64>,
    /// `‖X̃_{j·M}‖`, same order.
    pub adjusted_norms: Vec<f64>,
    pub sigma_hat: f64,
    pub df: ErrorModel,
}

impl FitResult {
    fn position(&self, j: usize) -> Result<usize> {
        self.model
            .rank_of(j)
            .ok_or(PosiError::PredictorNotInModel { predictor: j + 1, model: self.model })
    }

    pub fn estimate(&self, j: usize) -> Result<f64> {
        Ok(self.estimates[self.position(j)?])
    }

    pub fn adjusted_norm(&self, j: usize) -> Result<f64> {
        Ok(self.adjusted_norms[self.position(j)?])
    }

    /// `σ̂ / ‖X̃_{j·M}‖`.
    pub fn standard_error(&self, j: usize) -> Result<f64> {
        Ok(self.sigma_hat / self.adjusted_norm(j)?)
    }
}

/// The mean of the response, in canonical coordinates or as full-model
/// coefficients (`μ̃ = X̃β`).
#[derive(Clone, Debug, PartialEq)]
pub enum TargetSpec {
    Mean(Vec<f64>),
    FullCoefficients(Vec<f64>),
}

impl TargetSpec {
    pub fn mean(&self, design: &CanonicalDesign) -> Result<Vec<f64>> {
        match self {
            TargetSpec::Mean(mu) => {
                check_len(mu, design.rank())?;
                check_finite(mu)?;
                Ok(mu.clone())
            }
            TargetSpec::FullCoefficients(beta) => {
                check_len(beta, design.cols())?;
                check_finite(beta)?;
                let d = design.rank();
                let mut mu = vec![0.0; d];
                for (j, b) in beta.iter().enumerate() {
                    for (m, x) in mu.iter_mut().zip(design.column(j)) {
                        *m += b * x;
                    }
                }
                Ok(mu)
            }
        }
    }
}

fn check_len(v: &[f64], n: usize) -> Result<()> {
    if v.len() != n {
        return Err(PosiError::DimensionMismatch { expected: n, found: v.len() });
    }
    Ok(())
}

fn check_finite(v: &[f64]) -> Result<()> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(PosiError::InvalidArgument("non-finite entry".into()));
    }
    Ok(())
}

fn check_sigma(sigma_hat: f64) -> Result<()> {
    if !(sigma_hat > 0.0 && sigma_hat.is_finite()) {
        return Err(PosiError::InvalidArgument(format!("sigma_hat = {sigma_hat} must be positive")));
    }
    Ok(())
}

fn project(design: &CanonicalDesign, y: &[f64], m: ModelId) -> Result<(Vec<f64>, Vec<f64>)> {
    if m.is_empty() {
        return Err(PosiError::InvalidArgument("empty model".into()));
    }
    let mut est = Vec::with_capacity(m.len());
    let mut norms = Vec::with_capacity(m.len());
    for j in m.indices() {
        let (r, n) = adjusted_predictor(design, m, j).map_err(|e| match e {
            PosiError::DegenerateResidual { .. } => PosiError::RankDeficient(m),
            other => other,
        })?;
        est.push(dot(&r, y) / (n * n));
        norms.push(n);
    }
    Ok((est, norms))
}

/// `β̂_M` for the canonical response `y`; `σ̂` comes from elsewhere.
pub fn fit_submodel(
    design: &CanonicalDesign,
    y: &[f64],
    m: ModelId,
    sigma_hat: f64,
    df: ErrorModel,
) -> Result<FitResult> {
    check_len(y, design.rank())?;
    check_finite(y)?;
    check_sigma(sigma_hat)?;
    let (estimates, adjusted_norms) = project(design, y, m)?;
    Ok(FitResult { model: m, estimates, adjusted_norms, sigma_hat, df })
}

/// `β_M = argmin_b ‖μ̃ − X̃_M b‖²`.
pub fn submodel_target(design: &CanonicalDesign, m: ModelId, target: &TargetSpec) -> Result<Vec<f64>> {
    let mu = target.mean(design)?;
    Ok(project(design, &mu, m)?.0)
}

/// `(β̂_{j·M} − target) / (σ̂ / ‖X̃_{j·M}‖)`.
pub fn t_ratio(fit: &FitResult, j: usize, target_value: f64) -> Result<f64> {
    Ok((fit.estimate(j)? - target_value) / fit.standard_error(j)?)
}

#[derive(Clone, Debug, Serialize)]
pub struct IntervalRow {
    /// 1-based.
    pub predictor: usize,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    pub t_observed: f64,
    pub target: Option<f64>,
    pub covers_target: Option<bool>,
}

#[derive(Clone, Debug, Serialize)]
pub struct IntervalReport {
    pub model: ModelId,
    pub k_used: f64,
    pub sigma_hat: f64,
    pub rows: Vec<IntervalRow>,
}

impl IntervalReport {
    /// Whether every interval covers its target (`None` without targets).
    pub fn all_cover(&self) -> Option<bool> {
        self.rows.iter().map(|r| r.covers_target).collect::<Option<Vec<_>>>().map(|v| v.into_iter().all(|c| c))
    }
}

/// Intervals `β̂_{j·M} ± K σ̂ / ‖X̃_{j·M}‖` for all `j ∈ M`.
pub fn posi_intervals(
    design: &CanonicalDesign,
    y: &[f64],
    sigma_hat: f64,
    df: ErrorModel,
    m: ModelId,
    k: &ConstantEstimate,
    target: Option<&TargetSpec>,
) -> Result<IntervalReport> {
    if !k.covers_model(m, design.cols()) {
        return Err(PosiError::ModelOutsideUniverse(m));
    }
    if k.df != df {
        return Err(PosiError::InvalidArgument(format!(
            "constant was computed for df = {}, intervals requested for df = {df}",
            k.df
        )));
    }
    let fit = fit_submodel(design, y, m, sigma_hat, df)?;
    let targets = target.map(|t| submodel_target(design, m, t)).transpose()?;
    let rows = m
        .indices()
        .enumerate()
        .map(|(pos, j)| {
            let est = fit.estimates[pos];
            let half = k.k * sigma_hat / fit.adjusted_norms[pos];
            let (lower, upper) = (est - half, est + half);
            let tv = targets.as_ref().map(|t| t[pos]);
            IntervalRow {
                predictor: j + 1,
                estimate: est,
                lower,
                upper,
                t_observed: est * fit.adjusted_norms[pos] / sigma_hat,
                target: tv,
                covers_target: tv.map(|b| lower <= b && b <= upper),
            }
        })
        .collect();
    Ok(IntervalReport { model: m, k_used: k.k, sigma_hat, rows })
}

/// A selected model and the largest `|t|` it attains (at target 0).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Selection {
    pub model: ModelId,
    /// 0-based predictor attaining the maximum.
    pub predictor: usize,
    pub statistic: f64,
}

fn better(t: f64, m: ModelId, j: usize, best: &Option<Selection>) -> bool {
    match best {
        None => true,
        Some(b) => t > b.statistic || (t == b.statistic && (m, j) < (b.model, b.predictor)),
    }
}

fn stream_argmax(stream: crate::design::DirectionStream<'_>, y: &[f64], sigma_hat: f64) -> Result<Selection> {
    let mut best: Option<Selection> = None;
    stream.for_each(|dir| {
        let t = dot(dir.vector, y).abs() / sigma_hat;
        if better(t, dir.model, dir.predictor, &best) {
            best = Some(Selection { model: dir.model, predictor: dir.predictor, statistic: t });
        }
    });
    best.ok_or(match stream.predictor() {
        Some(j) => PosiError::PredictorInNoModel(j + 1),
        None => PosiError::EmptyDirectionSet,
    })
}

/// SPAR: the model holding the largest `|t_{j·M}|` over all `j ∈ M ∈ U`.
/// Ties go to the smallest model bitmask, then the smallest `j`.
pub fn spar_select(design: &CanonicalDesign, y: &[f64], sigma_hat: f64, universe: &ModelUniverse) -> Result<Selection> {
    check_len(y, design.rank())?;
    check_sigma(sigma_hat)?;
    stream_argmax(direction_stream(design, universe), y, sigma_hat)
}

/// SPAR1: among models containing `j`, the one maximizing `|t_{j·M}|`.
pub fn spar1_select(
    design: &CanonicalDesign,
    y: &[f64],
    sigma_hat: f64,
    universe: &ModelUniverse,
    j: usize,
) -> Result<Selection> {
    check_len(y, design.rank())?;
    check_sigma(sigma_hat)?;
    stream_argmax(direction_stream(design, universe).only_predictor(j)?, y, sigma_hat)
}

/// A model selection rule: a pure function of `(X̃, ỹ, σ̂)`.
pub trait Selector: Sync {
    fn name(&self) -> String;
    fn select(&self, design: &CanonicalDesign, y: &[f64], sigma_hat: f64, universe: &ModelUniverse) -> Result<ModelId>;
}

pub struct Spar;

impl Selector for Spar {
    fn name(&self) -> String {
        "spar".into()
    }

    fn select(&self, design: &CanonicalDesign, y: &[f64], sigma_hat: f64, universe: &ModelUniverse) -> Result<ModelId> {
        Ok(spar_select(design, y, sigma_hat, universe)?.model)
    }
}

/// SPAR1 for a 0-based predictor.
pub struct Spar1(pub usize);

impl Selector for Spar1 {
    fn name(&self) -> String {
        format!("spar1({})", self.0 + 1)
    }

    fn select(&self, design: &CanonicalDesign, y: &[f64], sigma_hat: f64, universe: &ModelUniverse) -> Result<ModelId> {
        Ok(spar1_select(design, y, sigma_hat, universe, self.0)?.model)
    }
}

/// Forward stepwise: repeatedly add the predictor with the largest `|t|` in
/// the enlarged model, for a fixed number of steps.
pub struct ForwardStepwise {
    pub steps: usize,
}

impl Selector for ForwardStepwise {
    fn name(&self) -> String {
        format!("forward({})", self.steps)
    }

    fn select(&self, design: &CanonicalDesign, y: &[f64], sigma_hat: f64, universe: &ModelUniverse) -> Result<ModelId> {
        let p = design.cols();
        let mut current = ModelId::EMPTY;
        for _ in 0..self.steps.min(design.rank()) {
            let mut best: Option<(f64, usize)> = None;
            for k in (0..p).filter(|&k| !current.contains(k)) {
                let m = current.with(k);
                let Ok((r, n)) = adjusted_predictor(design, m, k) else { continue };
                let t = dot(&r, y).abs() / (n * sigma_hat);
                if best.is_none_or(|(bt, _)| t > bt) {
                    best = Some((t, k));
                }
            }
            match best {
                Some((_, k)) => current = current.with(k),
                None => break,
            }
        }
        if !universe.contains(current, p) {
            return Err(PosiError::ModelOutsideUniverse(current));
        }
        Ok(current)
    }
}

/// The model of a fixed size with the largest `‖P_M ỹ‖²`.
pub struct LargestR2 {
    pub size: usize,
}

impl Selector for LargestR2 {
    fn name(&self) -> String {
        format!("largest-r2({})", self.size)
    }

    fn select(&self, design: &CanonicalDesign, y: &[f64], _sigma_hat: f64, universe: &ModelUniverse) -> Result<ModelId> {
        let mut best: Option<(f64, ModelId)> = None;
        for m in enumerate_models(design, universe)? {
            if m.len() != self.size {
                continue;
            }
            // ‖P_M y‖² = Σ over a Gram–Schmidt chain of (ℓ*ᵀy)².
            let mut fitted = 0.0;
            let mut prefix = ModelId::EMPTY;
            for j in m.indices() {
                prefix = prefix.with(j);
                let (r, n) = adjusted_predictor(design, prefix, j)?;
                fitted += (dot(&r, y) / n).powi(2);
            }
            if best.is_none_or(|(b, _)| fitted > b) {
                best = Some((fitted, m));
            }
        }
        best.map(|(_, m)| m).ok_or(PosiError::EmptyUniverse)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ReplicationRecord {
    pub index: usize,
    pub model: ModelId,
    pub sigma_hat: f64,
    pub covered: bool,
    /// Largest `|t_{j·M̂}|` around the true targets.
    pub max_abs_t: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CoverageReport {
    pub selector: String,
    pub replications: usize,
    pub covered: usize,
    pub family_wise_coverage: f64,
    pub standard_error: f64,
    pub alpha: f64,
    #[serde(rename = "K")]
    pub k: f64,
    pub seed: u64,
    pub log: Vec<ReplicationRecord>,
}

/// Simulates `ỹ = μ̃ + ε` with `ε ~ N(0, I_d)` (σ = 1) and a fresh `σ̂` per
/// replication, applies the selector and checks that every interval of the
/// selected model covers its target. Replication `i` uses the random stream
/// `(seed, i)`.
#[allow(clippy::too_many_arguments)]
pub fn coverage_experiment(
    design: &CanonicalDesign,
    universe: &ModelUniverse,
    selector: &dyn Selector,
    mu: &TargetSpec,
    df: ErrorModel,
    k: &ConstantEstimate,
    replications: usize,
    seed: u64,
) -> Result<CoverageReport> {
    if replications == 0 {
        return Err(PosiError::InvalidArgument("need at least one replication".into()));
    }
    let mean = mu.mean(design)?;
    let d = design.rank();
    let p = design.cols();
    let log: Vec<ReplicationRecord> = (0..replications)
        .into_par_iter()
        .map(|i| {
            let mut y = vec![0.0; d];
            let sigma_hat = rng::draw(seed, i as u64, df, &mut y);
            y.iter_mut().zip(&mean).for_each(|(v, m)| *v += m);
            let model = selector.select(design, &y, sigma_hat, universe)?;
            if !k.covers_model(model, p) {
                return Err(PosiError::ModelOutsideUniverse(model));
            }
            let fit = fit_submodel(design, &y, model, sigma_hat, df)?;
            let target = project(design, &mean, model)?.0;
            let max_abs_t = fit
                .estimates
                .iter()
                .zip(&target)
                .zip(&fit.adjusted_norms)
                .map(|((e, b), n)| ((e - b) * n / sigma_hat).abs())
                .fold(0.0, f64::max);
            Ok(ReplicationRecord { index: i, model, sigma_hat, covered: max_abs_t <= k.k, max_abs_t })
        })
        .collect::<Result<_>>()?;
    let covered = log.iter().filter(|r| r.covered).count();
    let c = covered as f64 / replications as f64;
    Ok(CoverageReport {
        selector: selector.name(),
        replications,
        covered,
        family_wise_coverage: c,
        standard_error: (c * (1.0 - c) / replications as f64).sqrt(),
        alpha: k.alpha,
        k: k.k,
        seed,
        log,
    })
}
