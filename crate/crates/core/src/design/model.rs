use std::fmt;

use serde::{Serialize, Serializer};

/// A submodel as a set of column indices, stored as a bitmask (p ≤ 64).
///
/// Indices are 0-based in the Rust API; `Display` and serialization use the
/// 1-based full-model indexing of the printed literature and the CLI.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct ModelId(u64);

pub const MAX_COLUMNS: usize = 64;

impl ModelId {
    pub const EMPTY: ModelId = ModelId(0);

    pub fn from_mask(mask: u64) -> Self {
        ModelId(mask)
    }

    pub fn from_indices<I: IntoIterator<Item = usize>>(indices: I) -> Self {
        let mut mask = 0u64;
        for j in indices {
            assert!(j < MAX_COLUMNS, "column index {j} exceeds bitmask capacity");
            mask |= 1 << j;
        }
        ModelId(mask)
    }

    pub fn singleton(j: usize) -> Self {
        Self::from_indices([j])
    }

    /// `{0, .., p-1}`.
    pub fn full(p: usize) -> Self {
        if p >= 64 {
            ModelId(u64::MAX)
        } else {
            ModelId((1u64 << p) - 1)
        }
    }

    pub fn mask(self) -> u64 {
        self.0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn contains(self, j: usize) -> bool {
        j < 64 && self.0 >> j & 1 == 1
    }

    pub fn with(self, j: usize) -> Self {
        ModelId(self.0 | 1 << j)
    }

    pub fn without(self, j: usize) -> Self {
        ModelId(self.0 & !(1 << j))
    }

    pub fn is_subset_of(self, other: ModelId) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn union(self, other: ModelId) -> Self {
        ModelId(self.0 | other.0)
    }

    pub fn intersection(self, other: ModelId) -> Self {
        ModelId(self.0 & other.0)
    }

    /// Largest member, if any.
    pub fn max_index(self) -> Option<usize> {
        (self.0 != 0).then(|| 63 - self.0.leading_zeros() as usize)
    }

    /// Members in ascending order.
    pub fn indices(self) -> impl Iterator<Item = usize> {
        let mut rest = self.0;
        std::iter::from_fn(move || {
            if rest == 0 {
                return None;
            }
            let j = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            Some(j)
        })
    }

    /// Position of `j` among the ascending members.
    pub fn rank_of(self, j: usize) -> Option<usize> {
        self.contains(j)
            .then(|| (self.0 & ((1u64 << j) - 1)).count_ones() as usize)
    }

    /// 1-based comma list, e.g. `1,3,4`.
    pub fn to_one_based_list(self) -> String {
        self.indices()
            .map(|j| (j + 1).to_string())
            .collect::<Vec<_>>()
            .join(",")
    }

    /// Parses a 1-based comma list such as `1,3,4`.
    pub fn parse_one_based(s: &str) -> Option<Self> {
        let mut mask = 0u64;
        for part in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            let k: usize = part.parse().ok()?;
            if k == 0 || k > MAX_COLUMNS {
                return None;
            }
            mask |= 1 << (k - 1);
        }
        (mask != 0).then_some(ModelId(mask))
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}}}", self.to_one_based_list())
    }
}

impl fmt::Debug for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl Serialize for ModelId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.indices().map(|j| j + 1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indices_are_sorted_and_one_based_in_display() {
        let m = ModelId::from_indices([3, 0, 2]);
        assert_eq!(m.indices().collect::<Vec<_>>(), vec![0, 2, 3]);
        assert_eq!(m.to_string(), "{1,3,4}");
        assert_eq!(m.len(), 3);
        assert_eq!(m.max_index(), Some(3));
        assert_eq!(m.rank_of(2), Some(1));
        assert_eq!(m.rank_of(1), None);
    }

    #[test]
    fn parse_round_trip() {
        let m = ModelId::parse_one_based("1, 3,4").unwrap();
        assert_eq!(m, ModelId::from_indices([0, 2, 3]));
        assert_eq!(ModelId::parse_one_based(&m.to_one_based_list()), Some(m));
        assert_eq!(ModelId::parse_one_based("0,1"), None);
        assert_eq!(ModelId::parse_one_based(""), None);
    }

    #[test]
    fn set_algebra() {
        let a = ModelId::from_indices([0, 1]);
        let b = ModelId::from_indices([1, 2]);
        assert_eq!(a.union(b), ModelId::full(3));
        assert_eq!(a.intersection(b), ModelId::singleton(1));
        assert!(ModelId::singleton(1).is_subset_of(a));
        assert_eq!(a.without(0).with(2), b);
        assert_eq!(ModelId::full(64).len(), 64);
    }
}
