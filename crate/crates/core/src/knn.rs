//! Mean-profile cosine retrieval.
//!
//! A user is the mean of the embedding rows of their train history; items
//! are ranked by cosine to that mean. Every embedding-based model in the
//! crate recommends through this path once it has produced an item table.

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::math::{norm, topk};
use crate::scalar::DEGENERATE_NORM;
use crate::scoring::Scorer;
use crate::{Matrix, Ranking};

/// Item vectors over the dense item index, possibly with gaps.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemVectors {
    rows: Matrix,
    covered: Vec<bool>,
    names: Vec<String>,
    norms: Vec<f64>,
}

impl ItemVectors {
    /// Every item must be covered.
    pub fn full(rows: Matrix, names: Vec<String>) -> Result<Self> {
        let covered = vec![true; rows.rows()];
        Self::partial(rows, covered, names)
    }

    /// Rows whose `covered` flag is false are placeholders and may not be
    /// scored or averaged.
    pub fn partial(rows: Matrix, covered: Vec<bool>, names: Vec<String>) -> Result<Self> {
        if covered.len() != rows.rows() || names.len() != rows.rows() {
            return Err(Error::DimensionMismatch {
                context: "item vectors",
                expected: rows.rows(),
                actual: covered.len().min(names.len()),
            });
        }
        let norms = rows.row_iter().map(norm).collect();
        Ok(Self {
            rows,
            covered,
            names,
            norms,
        })
    }

    pub fn dim(&self) -> usize {
        self.rows.cols()
    }

    pub fn len(&self) -> usize {
        self.rows.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.rows() == 0
    }

    pub fn rows(&self) -> &Matrix {
        &self.rows
    }

    pub fn is_covered(&self, item: usize) -> bool {
        self.covered.get(item).copied().unwrap_or(false)
    }

    pub fn row(&self, item: usize) -> Result<&[f64]> {
        if !self.is_covered(item) {
            let name = self.names.get(item).cloned().unwrap_or_else(|| format!("#{item}"));
            return Err(Error::UncoveredItem(name));
        }
        Ok(self.rows.row(item))
    }

    /// Cosine between `profile` and an item, sharing the degenerate-norm
    /// convention of [`crate::math::cosine`].
    pub fn cosine_to(&self, profile: &[f64], profile_norm: f64, item: usize) -> Result<f64> {
        let row = self.row(item)?;
        let n = self.norms[item];
        if profile_norm < DEGENERATE_NORM || n < DEGENERATE_NORM {
            return Ok(0.0);
        }
        Ok(crate::math::dot(profile, row) / (profile_norm * n))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserProfile {
    pub user: usize,
    pub mean_vector: Vec<f64>,
    pub history: HashSet<usize>,
    /// Empty history; the mean is the zero vector.
    pub degenerate: bool,
}

/// Mean of the history rows, repeats counted with multiplicity.
pub fn build_profile(user: usize, history: &[usize], vectors: &ItemVectors) -> Result<UserProfile> {
    let mut mean = vec![0.0; vectors.dim()];
    for &item in history {
        let row = vectors.row(item)?;
        mean.iter_mut().zip(row).for_each(|(m, &v)| *m += v);
    }
    if !history.is_empty() {
        let n = history.len() as f64;
        mean.iter_mut().for_each(|m| *m /= n);
    }
    Ok(UserProfile {
        user,
        mean_vector: mean,
        history: history.iter().copied().collect(),
        degenerate: history.is_empty(),
    })
}

/// Top-`k` of `candidates \ exclude` by cosine to the profile mean.
pub fn recommend(
    profile: &UserProfile,
    vectors: &ItemVectors,
    k: usize,
    candidates: &[usize],
    exclude: &HashSet<usize>,
) -> Result<Ranking> {
    if candidates.is_empty() {
        return Err(Error::InvalidConfig("knn recommend needs at least one candidate".into()));
    }
    let scores = cosine_scores(&profile.mean_vector, vectors, candidates)?;
    let scored: Vec<(usize, f64)> = candidates.iter().copied().zip(scores).collect();
    topk(&scored, k, exclude)
}

fn cosine_scores(profile: &[f64], vectors: &ItemVectors, candidates: &[usize]) -> Result<Vec<f64>> {
    if profile.len() != vectors.dim() {
        return Err(Error::DimensionMismatch {
            context: "profile vs item vectors",
            expected: vectors.dim(),
            actual: profile.len(),
        });
    }
    let pn = norm(profile);
    candidates.iter().map(|&i| vectors.cosine_to(profile, pn, i)).collect()
}

/// Cosine scorer over fixed per-user query vectors.
#[derive(Debug, Clone)]
pub struct KnnScorer {
    vectors: ItemVectors,
    queries: Vec<Vec<f64>>,
}

impl KnnScorer {
    /// Queries are the mean profiles of each user's history.
    pub fn from_histories(vectors: ItemVectors, histories: &[Vec<usize>]) -> Result<Self> {
        let queries = histories
            .iter()
            .enumerate()
            .map(|(u, h)| build_profile(u, h, &vectors).map(|p| p.mean_vector))
            .collect::<Result<_>>()?;
        Ok(Self { vectors, queries })
    }

    /// Queries supplied directly, one per user (e.g. trained user vectors).
    pub fn from_queries(vectors: ItemVectors, queries: Vec<Vec<f64>>) -> Result<Self> {
        if let Some(q) = queries.iter().find(|q| q.len() != vectors.dim()) {
            return Err(Error::DimensionMismatch {
                context: "user query vectors",
                expected: vectors.dim(),
                actual: q.len(),
            });
        }
        Ok(Self { vectors, queries })
    }

    pub fn vectors(&self) -> &ItemVectors {
        &self.vectors
    }

    pub fn query(&self, user: usize) -> &[f64] {
        &self.queries[user]
    }
}

impl Scorer for KnnScorer {
    fn score(&self, user: usize, candidates: &[usize]) -> Result<Vec<f64>> {
        let q = self
            .queries
            .get(user)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown user index {user}")))?;
        cosine_scores(q, &self.vectors, candidates)
    }
}
