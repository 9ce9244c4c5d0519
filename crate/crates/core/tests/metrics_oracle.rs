use std::collections::{BTreeMap, BTreeSet, HashSet};

use parbench::eval::{evaluate, poprec, summarize_runs, t_quantile_975};
use parbench::math::ScoredList;
use proptest::prelude::*;

fn brute_force(list: &[usize], truth: &BTreeSet<usize>, k: usize) -> [f64; 3] {
    let top = &list[..list.len().min(k)];
    let hits = top.iter().filter(|i| truth.contains(i)).count();
    let gain = |rank: usize| 1.0 / ((rank + 1) as f64).log2();
    let mut dcg = 0.0;
    for (r, item) in top.iter().enumerate() {
        if truth.contains(item) {
            dcg += gain(r + 1);
        }
    }
    let mut idcg = 0.0;
    for r in 1..=k.min(truth.len()) {
        idcg += gain(r);
    }
    [
        if hits > 0 { 1.0 } else { 0.0 },
        hits as f64 / truth.len() as f64,
        if idcg > 0.0 { dcg / idcg } else { 0.0 },
    ]
}

fn ranked(items: &[usize], k: usize) -> ScoredList<f64> {
    let n = items.len();
    ScoredList::from_ranked(items.iter().enumerate().map(|(r, &i)| (i, (n - r) as f64)).collect(), k).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn evaluate_matches_brute_force(
        k in 1usize..12,
        users in prop::collection::vec(
            (prop::collection::hash_set(0usize..40, 0..12), prop::collection::btree_set(0usize..40, 1..6)),
            1..12,
        ),
    ) {
        let mut recs = BTreeMap::new();
        let mut truth = BTreeMap::new();
        let mut lists = BTreeMap::new();
        for (u, (items, t)) in users.into_iter().enumerate() {
            let list: Vec<usize> = items.into_iter().take(k).collect();
            recs.insert(u, ranked(&list, k));
            lists.insert(u, list);
            truth.insert(u, t);
        }
        let report = evaluate(&recs, &truth, k);
        prop_assert_eq!(report.n_users, truth.len());
        let mut sums = [0.0; 3];
        for (u, t) in &truth {
            let want = brute_force(&lists[u], t, k);
            let got = report.per_user[u];
            prop_assert_eq!(got.hitrate.to_bits(), want[0].to_bits());
            prop_assert_eq!(got.recall.to_bits(), want[1].to_bits());
            prop_assert_eq!(got.ndcg.to_bits(), want[2].to_bits());
            for (s, w) in sums.iter_mut().zip(want) {
                *s += w;
            }
        }
        let n = truth.len() as f64;
        prop_assert_eq!(report.aggregate.hitrate.to_bits(), (sums[0] / n).to_bits());
        prop_assert_eq!(report.aggregate.ndcg.to_bits(), (sums[2] / n).to_bits());
    }
}

#[test]
fn worked_ndcg_example() {
    let recs = BTreeMap::from([(0, ranked(&[7, 3], 10))]);
    let truth = BTreeMap::from([(0, BTreeSet::from([3]))]);
    let r = evaluate(&recs, &truth, 10);
    assert!((r.aggregate.ndcg - 0.63093).abs() < 1e-5);
    assert_eq!(r.aggregate.hitrate, 1.0);
    assert_eq!(r.aggregate.recall, 1.0);
}

#[test]
fn users_without_lists_score_zero_and_empty_truth_is_skipped() {
    let recs = BTreeMap::new();
    let truth = BTreeMap::from([(0, BTreeSet::from([1])), (1, BTreeSet::new())]);
    let r = evaluate(&recs, &truth, 5);
    assert_eq!(r.n_users, 1);
    assert_eq!(r.aggregate.hitrate, 0.0);
}

#[test]
fn poprec_ranks_by_count_and_skips_seen() {
    let exclude = BTreeMap::from([(0, HashSet::from([2])), (1, HashSet::new())]);
    let recs = poprec(&[5, 1, 9, 5], 3, &exclude).unwrap();
    assert_eq!(recs[&0].items().collect::<Vec<_>>(), vec![0, 3, 1]);
    assert_eq!(recs[&1].items().collect::<Vec<_>>(), vec![2, 0, 3]);
}

#[test]
fn five_run_interval() {
    let s = summarize_runs(&[1.0, 2.0, 3.0, 4.0, 5.0], &[1.5, 1.5]).unwrap();
    assert!((s.margin95 - 1.963).abs() < 1e-3);
    assert!((t_quantile_975(4) - 2.7764).abs() < 1e-4);
    assert!((s.delta_pct.unwrap() - 100.0).abs() < 1e-9);
    assert!(summarize_runs(&[1.0], &[1.0]).is_err());
    assert!(summarize_runs(&[1.0, 2.0], &[]).is_err());
}
