use std::cmp::Ordering;
use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Ranked recommendation list: scores non-increasing, ties by ascending id.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredList<T> {
    entries: Vec<(usize, T)>,
    k: usize,
}

impl<T: Scalar> ScoredList<T> {
    pub fn entries(&self) -> &[(usize, T)] {
        &self.entries
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn items(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|&(id, _)| id)
    }

    /// Builds a list from entries that are already ranked.
    ///
    /// Rejects lists that break the ordering or id-uniqueness invariants.
    pub fn from_ranked(entries: Vec<(usize, T)>, k: usize) -> Result<Self> {
        if entries.len() > k {
            return Err(Error::InvalidConfig(format!(
                "ranked list holds {} entries for k = {k}",
                entries.len()
            )));
        }
        let mut seen = HashSet::with_capacity(entries.len());
        for (pos, w) in entries.iter().enumerate() {
            if !seen.insert(w.0) {
                return Err(Error::InvalidConfig(format!("duplicate item {} in ranked list", w.0)));
            }
            if pos > 0 && rank_order(&entries[pos - 1], w) == Ordering::Greater {
                return Err(Error::InvalidConfig(format!("ranked list out of order at position {pos}")));
            }
        }
        Ok(Self { entries, k })
    }
}

#[inline]
fn rank_order<T: Scalar>(a: &(usize, T), b: &(usize, T)) -> Ordering {
    b.1.partial_cmp(&a.1)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.0.cmp(&b.0))
}

/// The `k` highest-scoring candidates not in `excluded`. Candidate ids must
/// be distinct. Ties are broken by ascending id.
pub fn topk<T: Scalar>(scores: &[(usize, T)], k: usize, excluded: &HashSet<usize>) -> Result<ScoredList<T>> {
    if k == 0 {
        return Err(Error::InvalidConfig("topk requires k >= 1".into()));
    }
    let mut pool: Vec<(usize, T)> = scores
        .iter()
        .filter(|(id, _)| !excluded.contains(id))
        .copied()
        .collect();
    debug_assert!(
        pool.iter().map(|e| e.0).collect::<HashSet<_>>().len() == pool.len(),
        "duplicate candidate ids"
    );
    if pool.len() > k {
        pool.select_nth_unstable_by(k - 1, rank_order);
        pool.truncate(k);
    }
    pool.sort_unstable_by(rank_order);
    Ok(ScoredList { entries: pool, k })
}
