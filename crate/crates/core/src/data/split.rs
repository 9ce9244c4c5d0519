//! Temporal hot/cold split.
//!
//! Events before the boundary (within the lookback window) form the train
//! set. Post-boundary users are divided into validation and hot-test groups;
//! their events on already-known items that are new to the user become the
//! ground truth. Items first appearing after the boundary are cold.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::io::BufReader;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::interactions::{parse_events_for, write_events, Event, InteractionLog};
use crate::error::{Error, Result};
use crate::Matrix;

pub const DAY: i64 = 86_400;
/// Twelve months of training history.
pub const DEFAULT_LOOKBACK: i64 = 365 * DAY;
/// One month of evaluation data.
pub const EVAL_WINDOW: i64 = 30 * DAY;
pub const DEFAULT_VAL_FRACTION: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitParams {
    pub boundary: i64,
    pub lookback: i64,
    pub val_user_fraction: f64,
    pub seed: u64,
}

impl SplitParams {
    /// Boundary one evaluation window before the end of the log.
    pub fn last_month(log: &InteractionLog, seed: u64) -> Result<Self> {
        let (_, max) = log
            .time_range()
            .ok_or(Error::EmptyInput("interaction log has no events"))?;
        Ok(Self {
            boundary: max + 1 - EVAL_WINDOW,
            lookback: DEFAULT_LOOKBACK,
            val_user_fraction: DEFAULT_VAL_FRACTION,
            seed,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub n_users: usize,
    pub n_items: usize,
    pub train: Vec<Event>,
    pub validation: Vec<Event>,
    pub hot_test: Vec<Event>,
    pub cold_test: Vec<Event>,
    pub cold_items: BTreeSet<usize>,
    pub params: SplitParams,
}

impl DatasetSplit {
    /// Items with at least one train event, ascending.
    pub fn hot_items(&self) -> Vec<usize> {
        self.train
            .iter()
            .map(|e| e.item)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }
}

pub fn temporal_split(log: &InteractionLog, params: SplitParams) -> Result<DatasetSplit> {
    let (min, max) = log
        .time_range()
        .ok_or(Error::EmptyInput("interaction log has no events"))?;
    if !(params.val_user_fraction > 0.0 && params.val_user_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "validation user fraction {} outside (0, 1)",
            params.val_user_fraction
        )));
    }
    if params.lookback <= 0 {
        return Err(Error::InvalidConfig("lookback must be positive".into()));
    }
    if params.boundary <= min || params.boundary > max {
        return Err(Error::BoundaryOutOfRange {
            boundary: params.boundary,
            min,
            max,
        });
    }

    let train_start = params.boundary.saturating_sub(params.lookback);
    let mut seen: Vec<HashSet<usize>> = vec![HashSet::new(); log.n_users()];
    let mut known_items = vec![false; log.n_items()];
    let mut train = Vec::new();
    for e in log.events().iter().filter(|e| e.timestamp < params.boundary) {
        seen[e.user].insert(e.item);
        known_items[e.item] = true;
        if e.timestamp >= train_start {
            train.push(*e);
        }
    }
    let mut hot = vec![false; log.n_items()];
    for e in &train {
        hot[e.item] = true;
    }

    let post: Vec<Event> = log
        .events()
        .iter()
        .filter(|e| e.timestamp >= params.boundary)
        .copied()
        .collect();

    let mut post_users: Vec<usize> = post.iter().map(|e| e.user).collect::<BTreeSet<_>>().into_iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    post_users.shuffle(&mut rng);
    let n_val = (params.val_user_fraction * post_users.len() as f64).round() as usize;
    let val_users: HashSet<usize> = post_users[..n_val].iter().copied().collect();

    let mut validation = Vec::new();
    let mut hot_test = Vec::new();
    let mut cold_test = Vec::new();
    let mut cold_items = BTreeSet::new();
    let mut emitted = HashSet::new();
    for e in post {
        if !emitted.insert((e.user, e.item)) {
            continue;
        }
        if !known_items[e.item] {
            cold_items.insert(e.item);
            cold_test.push(e);
        } else if hot[e.item] && !seen[e.user].contains(&e.item) {
            if val_users.contains(&e.user) {
                validation.push(e);
            } else {
                hot_test.push(e);
            }
        }
    }

    Ok(DatasetSplit {
        n_users: log.n_users(),
        n_items: log.n_items(),
        train,
        validation,
        hot_test,
        cold_test,
        cold_items,
        params,
    })
}

/// Binarized train matrix: all log users × hot items (ascending item id).
pub fn interaction_matrix(split: &DatasetSplit) -> Matrix {
    let hot = split.hot_items();
    let mut col = vec![usize::MAX; split.n_items];
    for (c, &i) in hot.iter().enumerate() {
        col[i] = c;
    }
    let mut x = Matrix::zeros(split.n_users, hot.len());
    for e in &split.train {
        x.set(e.user, col[e.item], 1.0);
    }
    x
}

fn truth_map(events: &[Event]) -> BTreeMap<usize, BTreeSet<usize>> {
    let mut m: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for e in events {
        m.entry(e.user).or_default().insert(e.item);
    }
    m
}

/// Lookup structures derived once from a split and shared by every model.
#[derive(Debug, Clone)]
pub struct SplitIndex {
    pub n_users: usize,
    pub n_items: usize,
    /// Items with train events, ascending; also the columns of X.
    pub hot_items: Vec<usize>,
    pub cold_items: Vec<usize>,
    /// Column of X for each item, if hot.
    pub hot_col: Vec<Option<usize>>,
    /// Train items per user in event order, repeats kept.
    pub history: Vec<Vec<usize>>,
    pub train_items: Vec<HashSet<usize>>,
    /// Sorted X columns with a 1 for each user.
    pub x_rows: Vec<Vec<usize>>,
    /// Train play counts per item.
    pub play_counts: Vec<u64>,
    pub validation: BTreeMap<usize, BTreeSet<usize>>,
    pub hot_test: BTreeMap<usize, BTreeSet<usize>>,
    pub cold_test: BTreeMap<usize, BTreeSet<usize>>,
}

impl SplitIndex {
    pub fn new(split: &DatasetSplit) -> Self {
        let hot_items = split.hot_items();
        let mut hot_col = vec![None; split.n_items];
        for (c, &i) in hot_items.iter().enumerate() {
            hot_col[i] = Some(c);
        }
        let mut history = vec![Vec::new(); split.n_users];
        let mut train_items = vec![HashSet::new(); split.n_users];
        let mut play_counts = vec![0u64; split.n_items];
        for e in &split.train {
            history[e.user].push(e.item);
            train_items[e.user].insert(e.item);
            play_counts[e.item] += 1;
        }
        let x_rows = train_items
            .iter()
            .map(|items| {
                let mut cols: Vec<usize> = items.iter().map(|&i| hot_col[i].unwrap()).collect();
                cols.sort_unstable();
                cols
            })
            .collect();
        Self {
            n_users: split.n_users,
            n_items: split.n_items,
            cold_items: split.cold_items.iter().copied().collect(),
            hot_items,
            hot_col,
            history,
            train_items,
            x_rows,
            play_counts,
            validation: truth_map(&split.validation),
            hot_test: truth_map(&split.hot_test),
            cold_test: truth_map(&split.cold_test),
        }
    }

    pub fn n_hot(&self) -> usize {
        self.hot_items.len()
    }

    /// Unique (user, item) train pairs in ascending order.
    pub fn train_pairs(&self) -> Vec<(usize, usize)> {
        let mut pairs: Vec<(usize, usize)> = self
            .train_items
            .iter()
            .enumerate()
            .flat_map(|(u, items)| items.iter().map(move |&i| (u, i)))
            .collect();
        pairs.sort_unstable();
        pairs
    }
}

const PARTITIONS: [&str; 4] = ["train", "validation", "hot_test", "cold_test"];

/// Writes the split partitions and a manifest into `dir`.
pub fn write_split(split: &DatasetSplit, log: &InteractionLog, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let parts = [&split.train, &split.validation, &split.hot_test, &split.cold_test];
    for (name, events) in PARTITIONS.iter().zip(parts) {
        let mut buf = Vec::new();
        write_events(events, log, &mut buf)?;
        fs::write(dir.join(format!("{name}.tsv")), buf)?;
    }
    let mut cold = String::new();
    for &i in &split.cold_items {
        cold.push_str(&log.items()[i]);
        cold.push('\n');
    }
    fs::write(dir.join("cold_items.txt"), cold)?;
    let p = &split.params;
    let manifest = format!(
        "format = 1\nboundary = {}\nlookback = {}\nval_user_fraction = {}\nseed = {}\n\
         train_events = {}\nvalidation_events = {}\nhot_test_events = {}\ncold_test_events = {}\ncold_items = {}\n",
        p.boundary,
        p.lookback,
        p.val_user_fraction,
        p.seed,
        split.train.len(),
        split.validation.len(),
        split.hot_test.len(),
        split.cold_test.len(),
        split.cold_items.len()
    );
    fs::write(dir.join("manifest.txt"), manifest)?;
    Ok(())
}

fn open(path: &Path) -> Result<fs::File> {
    fs::File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingArtifact(path.to_path_buf()),
        _ => Error::Io(e),
    })
}

/// Reads a split written by [`write_split`] against the same log.
pub fn read_split(dir: &Path, log: &InteractionLog) -> Result<DatasetSplit> {
    let manifest_path = dir.join("manifest.txt");
    let manifest = std::io::read_to_string(open(&manifest_path)?)?;
    let mut fields = BTreeMap::new();
    for (n, line) in manifest.lines().enumerate() {
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: n + 1,
            message: format!("{}: expected key = value", manifest_path.display()),
        })?;
        fields.insert(k.trim().to_string(), v.trim().to_string());
    }
    let get = |k: &str| -> Result<&String> {
        fields
            .get(k)
            .ok_or_else(|| Error::InvalidConfig(format!("split manifest lacks `{k}`")))
    };
    let num_err = |k: &str| Error::InvalidConfig(format!("split manifest `{k}` is not a number"));
    let params = SplitParams {
        boundary: get("boundary")?.parse().map_err(|_| num_err("boundary"))?,
        lookback: get("lookback")?.parse().map_err(|_| num_err("lookback"))?,
        val_user_fraction: get("val_user_fraction")?
            .parse()
            .map_err(|_| num_err("val_user_fraction"))?,
        seed: get("seed")?.parse().map_err(|_| num_err("seed"))?,
    };

    let mut parts = Vec::with_capacity(4);
    for name in PARTITIONS {
        let file = open(&dir.join(format!("{name}.tsv")))?;
        parts.push(parse_events_for(BufReader::new(file), log)?);
    }
    let cold_text = std::io::read_to_string(open(&dir.join("cold_items.txt"))?)?;
    let mut cold_items = BTreeSet::new();
    for id in cold_text.lines().filter(|l| !l.is_empty()) {
        let i = log
            .item_id(id)
            .ok_or_else(|| Error::InvalidConfig(format!("cold item `{id}` not in log")))?;
        cold_items.insert(i);
    }
    let cold_test = parts.pop().unwrap();
    let hot_test = parts.pop().unwrap();
    let validation = parts.pop().unwrap();
    let train = parts.pop().unwrap();
    Ok(DatasetSplit {
        n_users: log.n_users(),
        n_items: log.n_items(),
        train,
        validation,
        hot_test,
        cold_test,
        cold_items,
        params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::parse_interactions;

    fn log(src: &str) -> InteractionLog {
        parse_interactions(src.as_bytes()).unwrap()
    }

    fn params(boundary: i64) -> SplitParams {
        SplitParams {
            boundary,
            lookback: DEFAULT_LOOKBACK,
            val_user_fraction: 0.3,
            seed: 1,
        }
    }

    #[test]
    fn three_event_example() {
        let l = log("u1\ti1\t1\nu1\ti2\t10\nu2\ti1\t10\n");
        let s = temporal_split(&l, params(5)).unwrap();
        let (u1, u2) = (l.user_id("u1").unwrap(), l.user_id("u2").unwrap());
        let (i1, i2) = (l.item_id("i1").unwrap(), l.item_id("i2").unwrap());
        assert_eq!(s.train, vec![Event { user: u1, item: i1, timestamp: 1 }]);
        assert_eq!(s.cold_items, BTreeSet::from([i2]));
        assert_eq!(s.cold_test, vec![Event { user: u1, item: i2, timestamp: 10 }]);
        let hot: Vec<Event> = s.validation.iter().chain(&s.hot_test).copied().collect();
        assert_eq!(hot, vec![Event { user: u2, item: i1, timestamp: 10 }]);
    }

    #[test]
    fn already_seen_items_are_filtered() {
        let l = log("u1\ti1\t1\nu2\ti1\t2\nu1\ti1\t10\nu2\ti3\t11\n");
        let s = temporal_split(&l, params(5)).unwrap();
        let u1 = l.user_id("u1").unwrap();
        assert!(s.validation.iter().chain(&s.hot_test).all(|e| e.user != u1));
    }

    #[test]
    fn repeats_kept_in_train_deduplicated_in_test() {
        let l = log("u1\ti1\t1\nu1\ti1\t2\nu2\ti2\t3\nu1\ti2\t10\nu1\ti2\t11\n");
        let s = temporal_split(&l, params(5)).unwrap();
        assert_eq!(s.train.len(), 3);
        assert_eq!(s.validation.len() + s.hot_test.len(), 1);
    }

    #[test]
    fn lookback_limits_train_but_not_seen_history() {
        let l = log("u1\ti1\t1\nu2\ti1\t50\nu1\ti1\t100\n");
        let s = temporal_split(
            &l,
            SplitParams {
                lookback: 10,
                ..params(60)
            },
        )
        .unwrap();
        assert_eq!(s.train.len(), 1);
        // u1 saw i1 before the lookback window, so it is not novel for them
        assert!(s.validation.is_empty() && s.hot_test.is_empty());
        assert!(s.cold_items.is_empty());
    }

    #[test]
    fn boundary_and_fraction_errors() {
        let l = log("u1\ti1\t1\nu1\ti2\t10\n");
        assert!(matches!(
            temporal_split(&l, params(0)),
            Err(Error::BoundaryOutOfRange { .. })
        ));
        assert!(matches!(
            temporal_split(&l, params(11)),
            Err(Error::BoundaryOutOfRange { .. })
        ));
        let bad = SplitParams {
            val_user_fraction: 1.0,
            ..params(5)
        };
        assert!(temporal_split(&l, bad).is_err());
    }

    #[test]
    fn interaction_matrix_examples() {
        let l = log("u1\ti1\t1\nu1\ti1\t10\n");
        let s = temporal_split(&l, params(5)).unwrap();
        assert_eq!(interaction_matrix(&s).as_slice(), &[1.0]);

        let l = log("u1\ti1\t1\nu2\ti2\t10\n");
        let s = temporal_split(&l, params(5)).unwrap();
        let x = interaction_matrix(&s);
        assert_eq!(x.shape(), (2, 1));
        assert_eq!(x.row(1), &[0.0]);
    }

    #[test]
    fn split_round_trips_through_disk() {
        let l = log("u1\ti1\t1\nu2\ti2\t2\nu1\ti2\t10\nu2\ti3\t10\nu3\ti1\t12\n");
        let s = temporal_split(&l, params(5)).unwrap();
        let dir = std::env::temp_dir().join(format!("parbench-split-{}", std::process::id()));
        write_split(&s, &l, &dir).unwrap();
        let back = read_split(&dir, &l).unwrap();
        assert_eq!(back, s);
        fs::remove_file(dir.join("train.tsv")).unwrap();
        match read_split(&dir, &l) {
            Err(Error::MissingArtifact(p)) => assert!(p.ends_with("train.tsv")),
            other => panic!("unexpected {other:?}"),
        }
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn deterministic_per_seed() {
        let mut src = String::new();
        for u in 0..40 {
            src.push_str(&format!("u{u}\ti{}\t1\nu{u}\ti{}\t10\n", u % 5, (u + 1) % 5));
        }
        let l = log(&src);
        let a = temporal_split(&l, params(5)).unwrap();
        let b = temporal_split(&l, params(5)).unwrap();
        assert_eq!(a, b);
        let c = temporal_split(&l, SplitParams { seed: 2, ..params(5) }).unwrap();
        assert_eq!(c.validation.len() + c.hot_test.len(), a.validation.len() + a.hot_test.len());
    }
}
