//! The scoring interface every trained recommender exposes to evaluation.

use std::collections::{BTreeMap, HashSet};

use crate::error::Result;
use crate::math::topk;
use crate::Ranking;

/// Scores candidate items for a user; higher is better.
pub trait Scorer: Sync {
    fn score(&self, user: usize, candidates: &[usize]) -> Result<Vec<f64>>;

    fn recommend(&self, user: usize, k: usize, candidates: &[usize], exclude: &HashSet<usize>) -> Result<Ranking> {
        let scores = self.score(user, candidates)?;
        let scored: Vec<(usize, f64)> = candidates.iter().copied().zip(scores).collect();
        topk(&scored, k, exclude)
    }
}

/// Ranks `candidates` for each user. `exclude` supplies the per-user seen set.
pub fn recommend_users<'a, S, E>(
    scorer: &S,
    users: impl IntoIterator<Item = usize>,
    k: usize,
    candidates: &[usize],
    exclude: E,
) -> Result<BTreeMap<usize, Ranking>>
where
    S: Scorer + ?Sized,
    E: Fn(usize) -> &'a HashSet<usize>,
{
    users
        .into_iter()
        .map(|u| Ok((u, scorer.recommend(u, k, candidates, exclude(u))?)))
        .collect()
}
