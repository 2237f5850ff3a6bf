//! Model universes: declarative families of submodels, composable by
//! intersection.
//!
//! Textual form (used by the CLI and echoed back in reports):
//! `all`, `size<=m`, `size>=m`, `size>p-m`, `forced=1,2`, `nested`,
//! `models=1,2;2,3` and `file=PATH`, joined with `&`.

use std::fmt;
use std::path::Path;

use super::model::ModelId;
use super::stream::SubsetWalker;
use super::CanonicalDesign;
use crate::error::{PosiError, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Constraint {
    All,
    /// `|M| <= m`.
    MaxSize(usize),
    /// `|M| >= m`.
    MinSize(usize),
    /// `|M| > p - m`: fewer than `m` predictors dropped from the full model.
    DropFewerThan(usize),
    /// Every model contains these columns.
    Forced(ModelId),
    /// `{1}, {1,2}, …, {1..p}`.
    Nested,
    Explicit(Vec<ModelId>),
}

impl Constraint {
    fn contains(&self, m: ModelId, p: usize) -> bool {
        let size = m.len();
        match self {
            Constraint::All => true,
            Constraint::MaxSize(k) => size <= *k,
            Constraint::MinSize(k) => size >= *k,
            Constraint::DropFewerThan(k) => size + k > p,
            Constraint::Forced(f) => f.is_subset_of(m),
            Constraint::Nested => m == ModelId::full(size),
            Constraint::Explicit(list) => list.binary_search(&m).is_ok(),
        }
    }

    /// Whether some member of this constraint is a superset of `s`
    /// (strictly, if `strict`). May over-approximate, never under.
    fn admits_superset(&self, s: ModelId, p: usize, strict: bool) -> bool {
        let room = s.len() < p;
        match self {
            Constraint::MaxSize(k) => {
                if strict {
                    s.len() < *k
                } else {
                    s.len() <= *k
                }
            }
            Constraint::Nested => {
                // Every prefix {0..m} with m > max(s) contains s.
                let top = s.max_index().map_or(0, |m| m + 1);
                !strict || s != ModelId::full(top) || top < p
            }
            Constraint::Explicit(list) => list
                .iter()
                .any(|&m| s.is_subset_of(m) && (!strict || m != s)),
            _ => !strict || room,
        }
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Constraint::All => write!(f, "all"),
            Constraint::MaxSize(k) => write!(f, "size<={k}"),
            Constraint::MinSize(k) => write!(f, "size>={k}"),
            Constraint::DropFewerThan(k) => write!(f, "size>p-{k}"),
            Constraint::Forced(m) => write!(f, "forced={}", m.to_one_based_list()),
            Constraint::Nested => write!(f, "nested"),
            Constraint::Explicit(list) => {
                let parts: Vec<String> = list.iter().map(|m| m.to_one_based_list()).collect();
                write!(f, "models={}", parts.join(";"))
            }
        }
    }
}

/// An intersection of constraints. The empty intersection is `all`.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct ModelUniverse {
    constraints: Vec<Constraint>,
}

impl ModelUniverse {
    pub fn all() -> Self {
        Self::default()
    }

    pub fn max_size(m: usize) -> Self {
        Self::all().and(Constraint::MaxSize(m))
    }

    pub fn min_size(m: usize) -> Self {
        Self::all().and(Constraint::MinSize(m))
    }

    pub fn forced<I: IntoIterator<Item = usize>>(indices: I) -> Self {
        Self::all().and(Constraint::Forced(ModelId::from_indices(indices)))
    }

    pub fn nested() -> Self {
        Self::all().and(Constraint::Nested)
    }

    pub fn explicit<I: IntoIterator<Item = ModelId>>(models: I) -> Self {
        let mut list: Vec<ModelId> = models.into_iter().filter(|m| !m.is_empty()).collect();
        list.sort();
        list.dedup();
        Self::all().and(Constraint::Explicit(list))
    }

    /// Adds a constraint to the intersection.
    pub fn and(mut self, c: Constraint) -> Self {
        if c != Constraint::All {
            let c = match c {
                Constraint::Explicit(mut list) => {
                    list.retain(|m| !m.is_empty());
                    list.sort();
                    list.dedup();
                    Constraint::Explicit(list)
                }
                other => other,
            };
            self.constraints.push(c);
        }
        self
    }

    pub fn intersect(mut self, other: &ModelUniverse) -> Self {
        for c in &other.constraints {
            self = self.and(c.clone());
        }
        self
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    /// Membership by index set only; rank is checked by the enumerator.
    pub fn contains(&self, m: ModelId, p: usize) -> bool {
        !m.is_empty()
            && m.is_subset_of(ModelId::full(p))
            && self.constraints.iter().all(|c| c.contains(m, p))
    }

    pub(crate) fn admits_superset(&self, s: ModelId, p: usize, strict: bool) -> bool {
        self.constraints.iter().all(|c| c.admits_superset(s, p, strict))
            && (!strict || s.len() < p)
    }

    /// Whether the universe contains the nested chain `{1}, {1,2}, …, {1..d}`
    /// (assuming those models are full rank).
    pub fn contains_nested_chain(&self, d: usize, p: usize) -> bool {
        (1..=d).all(|k| self.contains(ModelId::full(k), p))
    }

    /// Parses the `&`-joined textual form.
    pub fn parse(spec: &str) -> Result<Self> {
        let bad = |reason: &str| PosiError::UniverseSpec { spec: spec.to_string(), reason: reason.to_string() };
        let mut u = ModelUniverse::all();
        for part in spec.split('&').map(str::trim) {
            let c = if part.is_empty() {
                return Err(bad("empty term"));
            } else if part == "all" {
                Constraint::All
            } else if part == "nested" {
                Constraint::Nested
            } else if let Some(rest) = part.strip_prefix("size>p-") {
                Constraint::DropFewerThan(rest.trim().parse().map_err(|_| bad("expected size>p-m"))?)
            } else if let Some(rest) = part.strip_prefix("size<=") {
                Constraint::MaxSize(rest.trim().parse().map_err(|_| bad("expected size<=m"))?)
            } else if let Some(rest) = part.strip_prefix("size>=") {
                Constraint::MinSize(rest.trim().parse().map_err(|_| bad("expected size>=m"))?)
            } else if let Some(rest) = part.strip_prefix("size<") {
                let k: usize = rest.trim().parse().map_err(|_| bad("expected size<m"))?;
                Constraint::MaxSize(k.checked_sub(1).ok_or_else(|| bad("size<0 is empty"))?)
            } else if let Some(rest) = part.strip_prefix("size>") {
                let k: usize = rest.trim().parse().map_err(|_| bad("expected size>m"))?;
                Constraint::MinSize(k + 1)
            } else if let Some(rest) = part.strip_prefix("forced=") {
                Constraint::Forced(ModelId::parse_one_based(rest).ok_or_else(|| bad("bad index list"))?)
            } else if let Some(rest) = part.strip_prefix("models=") {
                let mut list = Vec::new();
                for m in rest.split(';').map(str::trim).filter(|t| !t.is_empty()) {
                    list.push(ModelId::parse_one_based(m).ok_or_else(|| bad("bad model"))?);
                }
                Constraint::Explicit(list)
            } else if let Some(path) = part.strip_prefix("file=") {
                Constraint::Explicit(read_model_file(Path::new(path.trim())).map_err(|e| bad(&e.to_string()))?)
            } else {
                return Err(bad("unknown term"));
            };
            u = u.and(c);
        }
        Ok(u)
    }
}

impl fmt::Display for ModelUniverse {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.constraints.is_empty() {
            return write!(f, "all");
        }
        let parts: Vec<String> = self.constraints.iter().map(|c| c.to_string()).collect();
        write!(f, "{}", parts.join("&"))
    }
}

/// One model per line, 1-based comma-separated indices. Blank lines and
/// lines starting with `#` are ignored.
pub fn read_model_file(path: &Path) -> Result<Vec<ModelId>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        out.push(ModelId::parse_one_based(line).ok_or_else(|| PosiError::UniverseSpec {
            spec: path.display().to_string(),
            reason: format!("line {}: cannot parse {line:?}", i + 1),
        })?);
    }
    Ok(out)
}

/// All full-rank models of the universe, each exactly once, in depth-first
/// order of increasing index extension.
pub fn enumerate_models(design: &CanonicalDesign, universe: &ModelUniverse) -> Result<Vec<ModelId>> {
    let p = design.cols();
    let walker = SubsetWalker::new(design);
    let mut out = Vec::new();
    walker.walk_models(universe, |m| {
        if universe.contains(m, p) {
            out.push(m);
        }
    });
    if out.is_empty() {
        return Err(PosiError::EmptyUniverse);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{CanonicalForm, DEFAULT_RANK_TOLERANCE};
    use nalgebra::DMatrix;

    fn generic(p: usize) -> CanonicalDesign {
        // Upper-triangular with all-positive entries: no orthogonal pairs, full rank.
        let m = DMatrix::from_fn(p, p, |i, j| if i <= j { 1.0 + (i + 2 * j) as f64 * 0.1 } else { 0.0 });
        CanonicalDesign::from_values(m, CanonicalForm::UpperTriangular, DEFAULT_RANK_TOLERANCE).unwrap()
    }

    #[test]
    fn counts_for_standard_universes() {
        let x = generic(4);
        assert_eq!(enumerate_models(&x, &ModelUniverse::all()).unwrap().len(), 15);
        assert_eq!(enumerate_models(&x, &ModelUniverse::forced([0])).unwrap().len(), 8);
        assert_eq!(enumerate_models(&x, &ModelUniverse::max_size(2)).unwrap().len(), 10);
        // |M3| = |M2| for m' = 2: sizes 3 and 4 -> 4 + 1 = 5 = C(4,1)+C(4,0)... check by definition
        let m3 = enumerate_models(&x, &ModelUniverse::all().and(Constraint::DropFewerThan(2))).unwrap();
        assert_eq!(m3.len(), 5);
        assert_eq!(enumerate_models(&x, &ModelUniverse::nested()).unwrap().len(), 4);
    }

    #[test]
    fn every_model_emitted_once() {
        let x = generic(5);
        let mut models = enumerate_models(&x, &ModelUniverse::all()).unwrap();
        let n = models.len();
        models.sort();
        models.dedup();
        assert_eq!(models.len(), n);
        assert_eq!(n, 31);
    }

    #[test]
    fn rank_deficient_subsets_are_skipped() {
        // Columns 1 and 3 are identical; any model containing both is singular.
        let m = DMatrix::from_column_slice(2, 3, &[1.0, 0.0, 1.0, 1.0, 1.0, 0.0]);
        let x = CanonicalDesign::from_values(m, CanonicalForm::Unspecified, DEFAULT_RANK_TOLERANCE).unwrap();
        let models = enumerate_models(&x, &ModelUniverse::all()).unwrap();
        // singletons 3, pairs {1,2},{2,3} ({1,3} singular), no triple (d = 2)
        assert_eq!(models.len(), 5);
        assert!(!models.contains(&ModelId::from_indices([0, 2])));
    }

    #[test]
    fn empty_after_filtering_is_an_error() {
        let x = generic(3);
        let u = ModelUniverse::explicit([ModelId::from_indices([0, 1, 2])]).and(Constraint::MaxSize(2));
        assert!(matches!(enumerate_models(&x, &u), Err(PosiError::EmptyUniverse)));
    }

    #[test]
    fn parse_and_echo_round_trip() {
        for spec in ["all", "size<=2", "size>p-2", "forced=1,3&size<=3", "nested", "models=1;1,2;2,3", "size>=2&forced=2"] {
            let u = ModelUniverse::parse(spec).unwrap();
            let echoed = u.to_string();
            let again = ModelUniverse::parse(&echoed).unwrap();
            assert_eq!(u, again, "{spec} -> {echoed}");
            let x = generic(4);
            assert_eq!(enumerate_models(&x, &u).ok(), enumerate_models(&x, &again).ok());
        }
        assert_eq!(ModelUniverse::parse("all").unwrap().to_string(), "all");
        assert!(ModelUniverse::parse("bogus").is_err());
        assert!(ModelUniverse::parse("forced=0").is_err());
        assert!(ModelUniverse::parse("all&").is_err());
    }

    #[test]
    fn explicit_universe_respects_list() {
        let x = generic(4);
        let u = ModelUniverse::parse("models=2,4;1;1,2,3").unwrap();
        let mut got = enumerate_models(&x, &u).unwrap();
        got.sort();
        let mut want = vec![
            ModelId::from_indices([1, 3]),
            ModelId::singleton(0),
            ModelId::from_indices([0, 1, 2]),
        ];
        want.sort();
        assert_eq!(got, want);
    }

    #[test]
    fn nested_chain_detection() {
        assert!(ModelUniverse::all().contains_nested_chain(4, 4));
        assert!(ModelUniverse::forced([0]).contains_nested_chain(4, 4));
        assert!(!ModelUniverse::max_size(2).contains_nested_chain(4, 4));
        assert!(!ModelUniverse::forced([3]).contains_nested_chain(4, 4));
    }
}
