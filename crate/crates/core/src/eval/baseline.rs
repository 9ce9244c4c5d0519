use std::collections::{BTreeMap, HashSet};

use crate::data::SplitIndex;
use crate::error::{Error, Result};
use crate::math::topk;
use crate::scoring::Scorer;
use crate::Ranking;

/// Non-personalized ranking by train play count.
#[derive(Debug, Clone, PartialEq)]
pub struct PopRec {
    counts: Vec<u64>,
}

impl PopRec {
    pub fn new(counts: Vec<u64>) -> Self {
        Self { counts }
    }

    pub fn from_split(index: &SplitIndex) -> Self {
        Self::new(index.play_counts.clone())
    }

    pub fn count(&self, item: usize) -> u64 {
        self.counts.get(item).copied().unwrap_or(0)
    }
}

impl Scorer for PopRec {
    fn score(&self, _user: usize, candidates: &[usize]) -> Result<Vec<f64>> {
        Ok(candidates.iter().map(|&i| self.count(i) as f64).collect())
    }
}

/// Popularity lists for every user in `exclude`, over all counted items.
pub fn poprec(counts: &[u64], k: usize, exclude: &BTreeMap<usize, HashSet<usize>>) -> Result<BTreeMap<usize, Ranking>> {
    if counts.iter().all(|&c| c == 0) {
        return Err(Error::EmptyInput("poprec needs train interactions"));
    }
    let scored: Vec<(usize, f64)> = counts.iter().enumerate().map(|(i, &c)| (i, c as f64)).collect();
    exclude
        .iter()
        .map(|(&u, seen)| Ok((u, topk(&scored, k, seen)?)))
        .collect()
}
