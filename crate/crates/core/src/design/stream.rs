//! The direction set `L(X, M)`: unit adjusted predictors `ℓ*_{j·M}` for every
//! pair `j ∈ M ∈ U`.
//!
//! Subsets `S` are visited depth first, extending only by indices above
//! `max(S)`. Each node carries the residuals of all columns against
//! `span(X̃_S)`, so emitting `normalize(r_j)` for `j ∉ S` realizes the pair
//! `(j, S ∪ {j})` with one projection per column per node.

use std::collections::HashMap;

use rayon::prelude::*;

use super::model::ModelId;
use super::universe::ModelUniverse;
use super::CanonicalDesign;
use crate::error::{PosiError, Result};
use crate::numeric::dot;

pub const DEFAULT_DEDUP_TOLERANCE: f64 = 1e-8;

/// Borrowed view of one emitted direction.
#[derive(Clone, Copy, Debug)]
pub struct DirectionRef<'a> {
    pub vector: &'a [f64],
    pub predictor: usize,
    pub model: ModelId,
    /// `‖X̃_{j·M}‖` before normalization.
    pub raw_norm: f64,
}

impl DirectionRef<'_> {
    pub fn to_owned(self) -> Direction {
        Direction {
            vector: self.vector.to_vec(),
            predictor: self.predictor,
            model: self.model,
            raw_norm: self.raw_norm,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Direction {
    pub vector: Vec<f64>,
    pub predictor: usize,
    pub model: ModelId,
    pub raw_norm: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DedupMode {
    None,
    /// Drop `v` if some kept `w` has `min(‖v − w‖, ‖v + w‖) < tol`.
    UpToSign(f64),
}

impl Default for DedupMode {
    fn default() -> Self {
        DedupMode::UpToSign(DEFAULT_DEDUP_TOLERANCE)
    }
}

/// Near-duplicate detection up to sign.
///
/// Vectors are bucketed by their projections onto two fixed unit vectors,
/// quantized at the tolerance. Projections are 1-Lipschitz, so any vector
/// within `tol` of a stored one lands in a neighbouring cell.
#[derive(Clone, Debug)]
pub struct DedupIndex {
    tol: f64,
    dim: usize,
    probes: [Vec<f64>; 2],
    cells: HashMap<(i64, i64), Vec<usize>>,
    stored: Vec<f64>,
}

impl DedupIndex {
    pub fn new(dim: usize, tol: f64) -> Self {
        assert!(tol > 0.0, "dedup tolerance must be positive");
        let mut rng = crate::rng::stream(0x9e37_79b9_7f4a_7c15, 0);
        let mut probe = || {
            let mut v = vec![0.0; dim];
            crate::rng::fill_gaussian(&mut rng, &mut v);
            let n = dot(&v, &v).sqrt();
            v.iter_mut().for_each(|x| *x /= n);
            v
        };
        let probes = [probe(), probe()];
        Self { tol, dim, probes, cells: HashMap::new(), stored: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.stored.len() / self.dim.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.stored.is_empty()
    }

    fn cell(&self, v: &[f64], sign: f64) -> (i64, i64) {
        let a = sign * dot(&self.probes[0], v) / self.tol;
        let b = sign * dot(&self.probes[1], v) / self.tol;
        (a.floor() as i64, b.floor() as i64)
    }

    fn matches(&self, v: &[f64], sign: f64, idx: usize) -> bool {
        let w = &self.stored[idx * self.dim..(idx + 1) * self.dim];
        let dist2: f64 = v.iter().zip(w).map(|(x, y)| (sign * x - y).powi(2)).sum();
        dist2 < self.tol * self.tol
    }

    /// Whether `v` or `−v` is already present.
    pub fn contains(&self, v: &[f64]) -> bool {
        for sign in [1.0, -1.0] {
            let (a, b) = self.cell(v, sign);
            for da in -1..=1 {
                for db in -1..=1 {
                    if let Some(ids) = self.cells.get(&(a + da, b + db)) {
                        if ids.iter().any(|&i| self.matches(v, sign, i)) {
                            return true;
                        }
                    }
                }
            }
        }
        false
    }

    /// Inserts `v` unless it duplicates a stored vector; returns whether it
    /// was new.
    pub fn insert(&mut self, v: &[f64]) -> bool {
        debug_assert_eq!(v.len(), self.dim);
        if self.contains(v) {
            return false;
        }
        let key = self.cell(v, 1.0);
        let id = self.len();
        self.stored.extend_from_slice(v);
        self.cells.entry(key).or_default().push(id);
        true
    }
}

/// A materialized direction set.
#[derive(Clone, Debug)]
pub struct DirectionSet {
    dim: usize,
    directions: Vec<Direction>,
    dedup: DedupMode,
    emitted: usize,
    skipped_degenerate: usize,
}

impl DirectionSet {
    /// Wraps arbitrary unit vectors (no provenance). Used for reference
    /// direction sets such as a basis.
    pub fn from_unit_vectors(dim: usize, vectors: Vec<Vec<f64>>) -> Result<Self> {
        let mut directions = Vec::with_capacity(vectors.len());
        for (k, v) in vectors.into_iter().enumerate() {
            if v.len() != dim {
                return Err(PosiError::DimensionMismatch { expected: dim, found: v.len() });
            }
            let n = dot(&v, &v).sqrt();
            if !((n - 1.0).abs() < 1e-10) {
                return Err(PosiError::InvalidArgument(format!("vector {k} has norm {n}")));
            }
            directions.push(Direction { vector: v, predictor: k, model: ModelId::EMPTY, raw_norm: 1.0 });
        }
        let emitted = directions.len();
        Ok(Self { dim, directions, dedup: DedupMode::None, emitted, skipped_degenerate: 0 })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Retained directions.
    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    /// Pairs emitted by the stream before deduplication.
    pub fn emitted(&self) -> usize {
        self.emitted
    }

    pub fn skipped_degenerate(&self) -> usize {
        self.skipped_degenerate
    }

    pub fn dedup_mode(&self) -> DedupMode {
        self.dedup
    }

    pub fn directions(&self) -> &[Direction] {
        &self.directions
    }

    pub fn vectors(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.directions.iter().map(|d| d.vector.as_slice())
    }

    pub fn into_directions(self) -> Vec<Direction> {
        self.directions
    }
}

/// Independent unit of traversal: the empty node (singleton models only) or
/// the subtree of subsets whose smallest index is `k`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StreamRoot {
    Empty,
    Subtree(usize),
}

/// Per-traversal counters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StreamStats {
    pub emitted: usize,
    pub skipped_degenerate: usize,
}

impl std::ops::AddAssign for StreamStats {
    fn add_assign(&mut self, o: Self) {
        self.emitted += o.emitted;
        self.skipped_degenerate += o.skipped_degenerate;
    }
}

/// Re-iterable generator of `L(X, U)` (or of `{ℓ*_{j·M} : j ∈ M ∈ U}` for a
/// single predictor `j` in PoSI1 mode).
#[derive(Clone, Copy, Debug)]
pub struct DirectionStream<'a> {
    design: &'a CanonicalDesign,
    universe: &'a ModelUniverse,
    only_predictor: Option<usize>,
}

pub fn direction_stream<'a>(
    design: &'a CanonicalDesign,
    universe: &'a ModelUniverse,
) -> DirectionStream<'a> {
    DirectionStream { design, universe, only_predictor: None }
}

impl<'a> DirectionStream<'a> {
    /// Restricts to models containing `j` and to the statistic of `j`.
    pub fn only_predictor(mut self, j: usize) -> Result<Self> {
        if j >= self.design.cols() {
            return Err(PosiError::ColumnOutOfRange { index: j, cols: self.design.cols() });
        }
        self.only_predictor = Some(j);
        Ok(self)
    }

    pub fn design(&self) -> &'a CanonicalDesign {
        self.design
    }

    pub fn universe(&self) -> &'a ModelUniverse {
        self.universe
    }

    pub fn predictor(&self) -> Option<usize> {
        self.only_predictor
    }

    pub fn roots(&self) -> Vec<StreamRoot> {
        std::iter::once(StreamRoot::Empty)
            .chain((0..self.design.cols()).filter(|&k| Some(k) != self.only_predictor).map(StreamRoot::Subtree))
            .collect()
    }

    /// Visits every direction below `root`.
    pub fn for_each_in_root<F: FnMut(DirectionRef<'_>)>(&self, root: StreamRoot, mut f: F) -> StreamStats {
        let walker = SubsetWalker::new(self.design);
        let p = self.design.cols();
        let d = self.design.rank();
        let u = self.universe;
        let only = self.only_predictor;
        let forbid = only.map_or(ModelId::EMPTY, ModelId::singleton);
        let mut stats = StreamStats::default();
        let mut unit = vec![0.0; d];
        let mut node = |s: ModelId, residuals: &[f64], norms: &[f64]| {
            let mut emit = |j: usize| {
                let m = s.with(j);
                if !u.contains(m, p) {
                    return;
                }
                if walker.degenerate(j, norms[j]) {
                    stats.skipped_degenerate += 1;
                    return;
                }
                let r = &residuals[j * d..(j + 1) * d];
                let n = norms[j];
                for (o, x) in unit.iter_mut().zip(r) {
                    *o = x / n;
                }
                stats.emitted += 1;
                f(DirectionRef { vector: &unit, predictor: j, model: m, raw_norm: n });
            };
            match only {
                Some(j) => emit(j),
                None => (0..p).filter(|&j| !s.contains(j)).for_each(emit),
            }
        };
        let admit = |child: ModelId| match only {
            Some(j) => u.admits_superset(child.with(j), p, false),
            None => u.admits_superset(child, p, true),
        };
        walker.walk_root(root, forbid, &mut node, &admit);
        stats
    }

    /// Visits every direction, serially, in root order.
    pub fn for_each<F: FnMut(DirectionRef<'_>)>(&self, mut f: F) -> StreamStats {
        let mut stats = StreamStats::default();
        for root in self.roots() {
            stats += self.for_each_in_root(root, &mut f);
        }
        stats
    }

    /// Number of pairs the stream emits, without storing them.
    pub fn count(&self) -> StreamStats {
        let roots = self.roots();
        roots
            .par_iter()
            .map(|&r| self.for_each_in_root(r, |_| {}))
            .reduce(StreamStats::default, |mut a, b| {
                a += b;
                a
            })
    }

    /// Materializes the set. Subtrees are traversed in parallel; the result
    /// (including which duplicate survives) does not depend on scheduling.
    pub fn collect(&self, dedup: DedupMode) -> Result<DirectionSet> {
        let roots = self.roots();
        let parts: Vec<(Vec<Direction>, StreamStats)> = roots
            .par_iter()
            .map(|&r| {
                let mut out = Vec::new();
                let stats = self.for_each_in_root(r, |dir| out.push(dir.to_owned()));
                (out, stats)
            })
            .collect();
        let d = self.design.rank();
        let mut stats = StreamStats::default();
        let mut directions = Vec::new();
        let mut index = match dedup {
            DedupMode::UpToSign(tol) => Some(DedupIndex::new(d, tol)),
            DedupMode::None => None,
        };
        for (part, s) in parts {
            stats += s;
            for dir in part {
                if index.as_mut().is_none_or(|ix| ix.insert(&dir.vector)) {
                    directions.push(dir);
                }
            }
        }
        if directions.is_empty() {
            return Err(match self.only_predictor {
                Some(j) => PosiError::PredictorInNoModel(j + 1),
                None => PosiError::EmptyDirectionSet,
            });
        }
        Ok(DirectionSet {
            dim: d,
            directions,
            dedup,
            emitted: stats.emitted,
            skipped_degenerate: stats.skipped_degenerate,
        })
    }
}

/// Depth-first walk over full-rank subsets with incremental residuals.
pub(crate) struct SubsetWalker<'a> {
    design: &'a CanonicalDesign,
    col_norms: Vec<f64>,
    tol: f64,
}

struct Workspace {
    /// `levels[k]`: residuals of all `p` columns (column-major, `p × d`) at depth `k`.
    levels: Vec<Vec<f64>>,
    norms: Vec<Vec<f64>>,
    /// Orthonormal basis of `span(X̃_S)`, one `d`-vector per depth.
    basis: Vec<f64>,
}

impl<'a> SubsetWalker<'a> {
    pub(crate) fn new(design: &'a CanonicalDesign) -> Self {
        let col_norms = (0..design.cols()).map(|j| norm(design.column(j))).collect();
        Self { design, col_norms, tol: design.rank_tolerance() }
    }

    /// `‖r_j‖ ≤ τ‖x_j‖`: adding `j` would make the model rank deficient.
    fn degenerate(&self, j: usize, residual_norm: f64) -> bool {
        residual_norm <= self.tol * self.col_norms[j]
    }

    fn workspace(&self) -> Workspace {
        let (d, p) = (self.design.rank(), self.design.cols());
        let mut levels = vec![vec![0.0; p * d]; d + 1];
        levels[0].copy_from_slice(self.design.values().as_slice());
        let mut norms = vec![vec![0.0; p]; d + 1];
        norms[0].copy_from_slice(&self.col_norms);
        Workspace { levels, norms, basis: vec![0.0; d * d] }
    }

    /// Extends the node at `depth` by column `k`.
    fn push(&self, ws: &mut Workspace, depth: usize, k: usize, s: ModelId) {
        let d = self.design.rank();
        let p = self.design.cols();
        let (lower, upper) = ws.levels.split_at_mut(depth + 1);
        let cur = &lower[depth];
        let next = &mut upper[0];
        let (basis_prev, basis_rest) = ws.basis.split_at_mut(depth * d);
        let q = &mut basis_rest[..d];
        let nk = ws.norms[depth][k];
        for (qi, r) in q.iter_mut().zip(&cur[k * d..(k + 1) * d]) {
            *qi = r / nk;
        }
        // One reorthogonalization pass keeps the basis orthonormal to
        // working precision.
        for b in basis_prev.chunks_exact(d) {
            let c = dot(b, q);
            q.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
        }
        let qn = norm(q);
        q.iter_mut().for_each(|x| *x /= qn);
        let s_next = s.with(k);
        for j in 0..p {
            let src = &cur[j * d..(j + 1) * d];
            let dst = &mut next[j * d..(j + 1) * d];
            if s_next.contains(j) {
                dst.iter_mut().for_each(|x| *x = 0.0);
                ws.norms[depth + 1][j] = 0.0;
                continue;
            }
            let c = dot(q, src);
            for ((o, x), y) in dst.iter_mut().zip(src).zip(q.iter()) {
                *o = x - c * y;
            }
            ws.norms[depth + 1][j] = norm(dst);
        }
    }

    fn descend<F, G>(&self, ws: &mut Workspace, depth: usize, s: ModelId, forbid: ModelId, node: &mut F, admit: &G)
    where
        F: FnMut(ModelId, &[f64], &[f64]),
        G: Fn(ModelId) -> bool,
    {
        node(s, &ws.levels[depth], &ws.norms[depth]);
        if depth == self.design.rank() {
            return;
        }
        let start = s.max_index().map_or(0, |m| m + 1);
        for k in start..self.design.cols() {
            if forbid.contains(k) || self.degenerate(k, ws.norms[depth][k]) {
                continue;
            }
            let child = s.with(k);
            if !admit(child) {
                continue;
            }
            self.push(ws, depth, k, s);
            self.descend(ws, depth + 1, child, forbid, node, admit);
        }
    }

    /// `node(S, residuals, norms)` is called for every visited subset.
    pub(crate) fn walk_root<F, G>(&self, root: StreamRoot, forbid: ModelId, node: &mut F, admit: &G)
    where
        F: FnMut(ModelId, &[f64], &[f64]),
        G: Fn(ModelId) -> bool,
    {
        let mut ws = self.workspace();
        match root {
            StreamRoot::Empty => node(ModelId::EMPTY, &ws.levels[0], &ws.norms[0]),
            StreamRoot::Subtree(k) => {
                if forbid.contains(k) || self.degenerate(k, ws.norms[0][k]) {
                    return;
                }
                let child = ModelId::singleton(k);
                if admit(child) {
                    self.push(&mut ws, 0, k, ModelId::EMPTY);
                    self.descend(&mut ws, 1, child, forbid, node, admit);
                }
            }
        }
    }

    /// Visits every nonempty full-rank subset that may lie in `universe`.
    pub(crate) fn walk_models<F: FnMut(ModelId)>(&self, universe: &ModelUniverse, mut f: F) {
        let p = self.design.cols();
        let admit = |child: ModelId| universe.admits_superset(child, p, false);
        let mut node = |s: ModelId, _: &[f64], _: &[f64]| {
            if !s.is_empty() {
                f(s)
            }
        };
        for k in 0..p {
            self.walk_root(StreamRoot::Subtree(k), ModelId::EMPTY, &mut node, &admit);
        }
    }
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `X̃_{j·M}`: residual of column `j` on the other columns of `M`, and its norm.
pub fn adjusted_predictor(design: &CanonicalDesign, m: ModelId, j: usize) -> Result<(Vec<f64>, f64)> {
    let p = design.cols();
    if j >= p {
        return Err(PosiError::ColumnOutOfRange { index: j, cols: p });
    }
    if !m.contains(j) {
        return Err(PosiError::PredictorNotInModel { predictor: j + 1, model: m });
    }
    if !m.is_subset_of(ModelId::full(p)) {
        return Err(PosiError::ColumnOutOfRange { index: m.max_index().unwrap_or(0), cols: p });
    }
    let tol = design.rank_tolerance();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for k in m.without(j).indices() {
        let x = design.column(k);
        let mut v = x.to_vec();
        for _ in 0..2 {
            for b in &basis {
                let c = dot(b, &v);
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
        }
        let n = norm(&v);
        if n <= tol * norm(x) {
            return Err(PosiError::RankDeficient(m));
        }
        v.iter_mut().for_each(|x| *x /= n);
        basis.push(v);
    }
    let x = design.column(j);
    let mut r = x.to_vec();
    for _ in 0..2 {
        for b in &basis {
            let c = dot(b, &r);
            r.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
        }
    }
    let n = norm(&r);
    if n <= tol * norm(x) {
        return Err(PosiError::DegenerateResidual { predictor: j + 1, model: m, norm: n });
    }
    Ok((r, n))
}

/// Variance inflation factor `‖X̃_j‖² / ‖X̃_{j·M}‖²`. Centering the columns
/// beforehand is up to the caller.
pub fn vif(design: &CanonicalDesign, m: ModelId, j: usize) -> Result<f64> {
    let (_, n) = adjusted_predictor(design, m, j)?;
    Ok(norm(design.column(j)).powi(2) / (n * n))
}
