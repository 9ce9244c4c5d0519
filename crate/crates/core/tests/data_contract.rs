mod common;

use std::collections::HashSet;
use std::io::BufReader;

use parbench::data::{
    load_embeddings, parse_interactions, read_split, temporal_split, write_split, Checkpoint, SplitParams, DAY,
};
use parbench::synth::generate;
use parbench::Error;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn split_invariants_hold(
        seed in 0u64..10_000,
        users in 15usize..60,
        items in 50usize..150,
        events in 8usize..30,
        cold in 0.0f64..0.2,
        lookback_days in 10i64..200,
        val in 0.1f64..0.9,
    ) {
        let cfg = parbench::synth::SynthConfig {
            n_users: users,
            n_items: items,
            events_per_user: events,
            cold_fraction: cold,
            seed,
            ..common::small_config(seed)
        };
        let log = generate(&cfg).unwrap().log;
        let mut params = SplitParams::last_month(&log, seed).unwrap();
        params.lookback = lookback_days * DAY;
        params.val_user_fraction = val;
        let split = temporal_split(&log, params).unwrap();
        let b = params.boundary;

        let before: HashSet<(usize, usize)> =
            log.events().iter().filter(|e| e.timestamp < b).map(|e| (e.user, e.item)).collect();
        let train_items: HashSet<usize> = split.train.iter().map(|e| e.item).collect();
        for e in &split.train {
            prop_assert!(e.timestamp < b && e.timestamp >= b - params.lookback);
        }
        let val_users: HashSet<usize> = split.validation.iter().map(|e| e.user).collect();
        let test_users: HashSet<usize> = split.hot_test.iter().map(|e| e.user).collect();
        prop_assert!(val_users.is_disjoint(&test_users));
        for e in split.validation.iter().chain(&split.hot_test) {
            prop_assert!(!before.contains(&(e.user, e.item)));
            prop_assert!(train_items.contains(&e.item));
        }
        for &i in &split.cold_items {
            prop_assert!(!train_items.contains(&i));
            prop_assert!(log.events().iter().all(|e| e.item != i || e.timestamp >= b));
        }
        let mut pairs = HashSet::new();
        for e in split.validation.iter().chain(&split.hot_test).chain(&split.cold_test) {
            prop_assert!(pairs.insert((e.user, e.item)), "duplicate test pair");
        }
    }
}

#[test]
fn boundary_outside_log_is_rejected() {
    let log = generate(&common::small_config(1)).unwrap().log;
    let (min, _) = log.time_range().unwrap();
    let mut params = SplitParams::last_month(&log, 0).unwrap();
    params.boundary = min;
    assert!(matches!(temporal_split(&log, params), Err(Error::BoundaryOutOfRange { .. })));
    params.boundary = min + DAY;
    params.val_user_fraction = 1.0;
    assert!(matches!(temporal_split(&log, params), Err(Error::InvalidConfig(_))));
}

#[test]
fn interactions_and_split_round_trip() {
    let f = common::small(2);
    let mut buf = Vec::new();
    f.data.log.write_tsv(&mut buf).unwrap();
    let log = parse_interactions(BufReader::new(buf.as_slice())).unwrap();
    assert_eq!(log.items(), f.data.log.items());
    assert_eq!(log.events(), f.data.log.events());

    let dir = tempfile::tempdir().unwrap();
    write_split(&f.split, &log, dir.path()).unwrap();
    let back = read_split(dir.path(), &log).unwrap();
    assert_eq!(back, f.split);

    std::fs::remove_file(dir.path().join("hot_test.tsv")).unwrap();
    match read_split(dir.path(), &log) {
        Err(Error::MissingArtifact(p)) => assert!(p.ends_with("hot_test.tsv")),
        other => panic!("{other:?}"),
    }
}

#[test]
fn embeddings_round_trip_text_and_binary() {
    let table = common::small(3).data.table;
    let mut text = Vec::new();
    table.write_text(&mut text).unwrap();
    let back = load_embeddings(&text).unwrap();
    assert_eq!(back.ids(), table.ids());
    assert_eq!(back.label(), table.label());
    for (a, b) in back.vectors().as_slice().iter().zip(table.vectors().as_slice()) {
        assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
    }

    let mut bin = Vec::new();
    table.write_binary(&mut bin).unwrap();
    let back = load_embeddings(&bin).unwrap();
    assert_eq!(back.ids(), table.ids());
    assert_eq!(back.label(), "");
    assert_eq!(back.dim(), table.dim());

    assert!(load_embeddings(b"PARB\x00").is_err());
    assert!(load_embeddings(b"not a table").is_err());
}

#[test]
fn checkpoint_bytes_are_stable() {
    let f = common::small(4);
    let mut c = Checkpoint::new();
    c.set_meta("model", "x");
    c.insert("t", f.par.clone());
    let bytes = c.to_bytes().unwrap();
    let back = Checkpoint::from_bytes(&bytes).unwrap();
    assert_eq!(back.to_bytes().unwrap(), bytes);
    assert_eq!(back.meta("model"), Some("x"));
    assert_eq!(back.tensor("t").unwrap().rows(), f.par.rows());
    assert!(back.tensor("missing").is_err());
}
