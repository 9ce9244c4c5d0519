use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::Ranking;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Metric {
    HitRate,
    Recall,
    Ndcg,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::HitRate, Metric::Recall, Metric::Ndcg];

    pub fn name(self) -> &'static str {
        match self {
            Metric::HitRate => "hitrate",
            Metric::Recall => "recall",
            Metric::Ndcg => "ndcg",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UserMetrics {
    pub hitrate: f64,
    pub recall: f64,
    pub ndcg: f64,
}

impl UserMetrics {
    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::HitRate => self.hitrate,
            Metric::Recall => self.recall,
            Metric::Ndcg => self.ndcg,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub k: usize,
    pub per_user: BTreeMap<usize, UserMetrics>,
    pub aggregate: UserMetrics,
    pub n_users: usize,
}

/// Binary-relevance metrics at `k` for one ranked list.
pub fn user_metrics(recs: &[usize], truth: &BTreeSet<usize>, k: usize) -> UserMetrics {
    let mut hits = 0usize;
    let mut dcg = 0.0;
    for (r, item) in recs.iter().take(k).enumerate() {
        if truth.contains(item) {
            hits += 1;
            dcg += 1.0 / ((r + 2) as f64).log2();
        }
    }
    let mut idcg = 0.0;
    for r in 0..k.min(truth.len()) {
        idcg += 1.0 / ((r + 2) as f64).log2();
    }
    UserMetrics {
        hitrate: if hits > 0 { 1.0 } else { 0.0 },
        recall: hits as f64 / truth.len() as f64,
        ndcg: if idcg > 0.0 { dcg / idcg } else { 0.0 },
    }
}

/// HitRate, Recall and binary NDCG at `k`, averaged over users with
/// non-empty ground truth. Users without a list score zero.
pub fn evaluate(recs: &BTreeMap<usize, Ranking>, truth: &BTreeMap<usize, BTreeSet<usize>>, k: usize) -> MetricReport {
    let mut per_user = BTreeMap::new();
    for (&user, items) in truth {
        if items.is_empty() {
            continue;
        }
        let list: Vec<usize> = recs.get(&user).map(|r| r.items().collect()).unwrap_or_default();
        per_user.insert(user, user_metrics(&list, items, k));
    }
    let n = per_user.len();
    let mut sum = UserMetrics::default();
    for m in per_user.values() {
        sum.hitrate += m.hitrate;
        sum.recall += m.recall;
        sum.ndcg += m.ndcg;
    }
    let aggregate = if n == 0 {
        UserMetrics::default()
    } else {
        UserMetrics {
            hitrate: sum.hitrate / n as f64,
            recall: sum.recall / n as f64,
            ndcg: sum.ndcg / n as f64,
        }
    };
    MetricReport {
        k,
        per_user,
        aggregate,
        n_users: n,
    }
}
