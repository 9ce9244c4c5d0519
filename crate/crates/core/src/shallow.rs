//! Two-tower cosine recommender over frozen item content vectors.
//!
//! Each side passes its input through one dimension-preserving dense layer
//! with ReLU; the score is the cosine between the two outputs. Only user
//! vectors and the towers train. Loss per positive pair `(u, i)`:
//! `Σ_k max(0, m − s(u, i) + s(u_k, i))` over sampled negative users `u_k`.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{Checkpoint, EmbeddingTable, SplitIndex};
use crate::error::{Error, Result};
use crate::knn::{build_profile, ItemVectors, KnnScorer};
use crate::math::{cosine_grad_wrt_first, cosine_unchecked, AdamState};
use crate::projection::{add_bias, row_matrix};
use crate::train::{check_finite, EpochRecord, Plateau, Schedule, Step, TrainHistory, ValidationProbe};
use crate::Matrix;

/// Dense layer `relu(x · W + b)` with square `W`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tower {
    pub w: Matrix,
    pub b: Vec<f64>,
}

impl Tower {
    pub fn identity(dim: usize) -> Self {
        Self {
            w: Matrix::identity(dim),
            b: vec![0.0; dim],
        }
    }

    /// Identity plus uniform noise in `±noise`.
    pub fn near_identity(dim: usize, noise: f64, rng: &mut ChaCha8Rng) -> Self {
        let mut t = Self::identity(dim);
        if noise > 0.0 {
            for v in t.w.as_mut_slice() {
                *v += rng.random_range(-noise..noise);
            }
        }
        t
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    fn pre_activation(&self, x: &[f64]) -> Vec<f64> {
        let mut pre = self.b.clone();
        for (r, &xv) in x.iter().enumerate() {
            if xv != 0.0 {
                pre.iter_mut().zip(self.w.row(r)).for_each(|(p, &w)| *p += xv * w);
            }
        }
        pre
    }

    pub fn forward_row(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.pre_activation(x);
        y.iter_mut().for_each(|v| *v = v.max(0.0));
        y
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        let mut y = x.matmul(&self.w)?;
        add_bias(&mut y, &self.b);
        Ok(y.map(|v| v.max(0.0)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShallowGrads {
    pub user_base: Matrix,
    pub user_w: Matrix,
    pub user_b: Vec<f64>,
    pub item_w: Matrix,
    pub item_b: Vec<f64>,
}

impl ShallowGrads {
    fn zeros(n_users: usize, dim: usize) -> Self {
        Self {
            user_base: Matrix::zeros(n_users, dim),
            user_w: Matrix::zeros(dim, dim),
            user_b: vec![0.0; dim],
            item_w: Matrix::zeros(dim, dim),
            item_b: vec![0.0; dim],
        }
    }

    /// Flattened in the order user_base, user_w, user_b, item_w, item_b.
    pub fn pack(&self) -> Vec<f64> {
        let mut v = Vec::new();
        v.extend_from_slice(self.user_base.as_slice());
        v.extend_from_slice(self.user_w.as_slice());
        v.extend_from_slice(&self.user_b);
        v.extend_from_slice(self.item_w.as_slice());
        v.extend_from_slice(&self.item_b);
        v
    }
}

/// One positive pair with its sampled negative users.
#[derive(Debug, Clone, PartialEq)]
pub struct Triple {
    pub user: usize,
    pub item: usize,
    pub negatives: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShallowModel {
    item_base: Matrix,
    label: String,
    pub user_base: Matrix,
    pub user_tower: Tower,
    pub item_tower: Tower,
    pub margin: f64,
}

impl ShallowModel {
    /// `item_base` rows follow the dense item index. User rows start at the
    /// mean of their history rows.
    pub fn new(
        item_base: Matrix,
        label: impl Into<String>,
        histories: &[Vec<usize>],
        margin: f64,
        tower_noise: f64,
        seed: u64,
    ) -> Result<Self> {
        if !(margin > 0.0 && margin.is_finite()) {
            return Err(Error::InvalidConfig(format!("margin must be positive, got {margin}")));
        }
        let dim = item_base.cols();
        let names = (0..item_base.rows()).map(|i| format!("#{i}")).collect();
        let vectors = ItemVectors::full(item_base.clone(), names)?;
        let mut user_base = Matrix::zeros(histories.len(), dim);
        for (u, h) in histories.iter().enumerate() {
            user_base.row_mut(u).copy_from_slice(&build_profile(u, h, &vectors)?.mean_vector);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        Ok(Self {
            item_base,
            label: label.into(),
            user_base,
            user_tower: Tower::near_identity(dim, tower_noise, &mut rng),
            item_tower: Tower::near_identity(dim, tower_noise, &mut rng),
            margin,
        })
    }

    pub fn item_base(&self) -> &Matrix {
        &self.item_base
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dim(&self) -> usize {
        self.item_base.cols()
    }

    pub fn n_users(&self) -> usize {
        self.user_base.rows()
    }

    pub fn n_items(&self) -> usize {
        self.item_base.rows()
    }

    fn check_ids(&self, user: usize, item: usize) -> Result<()> {
        if user >= self.n_users() || item >= self.n_items() {
            return Err(Error::InvalidConfig(format!("pair ({user}, {item}) out of range")));
        }
        Ok(())
    }

    pub fn forward(&self, user: usize, item: usize) -> Result<f64> {
        self.check_ids(user, item)?;
        let a = self.user_tower.forward_row(self.user_base.row(user));
        let c = self.item_tower.forward_row(self.item_base.row(item));
        Ok(cosine_unchecked(&a, &c))
    }

    pub fn hinge_loss(&self, user: usize, item: usize, negatives: &[usize]) -> Result<(f64, ShallowGrads)> {
        if negatives.is_empty() {
            return Err(Error::EmptyInput("hinge_loss negatives"));
        }
        self.batch_loss(&[Triple {
            user,
            item,
            negatives: negatives.to_vec(),
        }])
    }

    /// Summed hinge loss and gradients over a batch. Tower outputs are
    /// computed once per distinct user and item.
    pub fn batch_loss(&self, batch: &[Triple]) -> Result<(f64, ShallowGrads)> {
        let dim = self.dim();
        let mut users = Vec::new();
        let mut items = Vec::new();
        let mut user_slot = vec![usize::MAX; self.n_users()];
        let mut item_slot = vec![usize::MAX; self.n_items()];
        for t in batch {
            for &u in std::iter::once(&t.user).chain(&t.negatives) {
                self.check_ids(u, t.item)?;
                if user_slot[u] == usize::MAX {
                    user_slot[u] = users.len();
                    users.push(u);
                }
            }
            if item_slot[t.item] == usize::MAX {
                item_slot[t.item] = items.len();
                items.push(t.item);
            }
        }
        let user_pre: Vec<Vec<f64>> = users
            .iter()
            .map(|&u| self.user_tower.pre_activation(self.user_base.row(u)))
            .collect();
        let item_pre: Vec<Vec<f64>> = items
            .iter()
            .map(|&i| self.item_tower.pre_activation(self.item_base.row(i)))
            .collect();
        let relu = |p: &Vec<f64>| p.iter().map(|v| v.max(0.0)).collect::<Vec<f64>>();
        let a: Vec<Vec<f64>> = user_pre.iter().map(relu).collect();
        let c: Vec<Vec<f64>> = item_pre.iter().map(relu).collect();

        let mut g_a = vec![vec![0.0; dim]; users.len()];
        let mut g_c = vec![vec![0.0; dim]; items.len()];
        let mut loss = 0.0;
        for t in batch {
            let (pu, pi) = (user_slot[t.user], item_slot[t.item]);
            let s_pos = cosine_unchecked(&a[pu], &c[pi]);
            for &n in &t.negatives {
                let pn = user_slot[n];
                let s_neg = cosine_unchecked(&a[pn], &c[pi]);
                let term = self.margin - s_pos + s_neg;
                if term <= 0.0 {
                    continue;
                }
                loss += term;
                cosine_grad_wrt_first(&a[pu], &c[pi], s_pos, &mut g_a[pu], -1.0);
                cosine_grad_wrt_first(&c[pi], &a[pu], s_pos, &mut g_c[pi], -1.0);
                cosine_grad_wrt_first(&a[pn], &c[pi], s_neg, &mut g_a[pn], 1.0);
                cosine_grad_wrt_first(&c[pi], &a[pn], s_neg, &mut g_c[pi], 1.0);
            }
        }

        let mut grads = ShallowGrads::zeros(self.n_users(), dim);
        for (slot, &u) in users.iter().enumerate() {
            let g_pre = masked(&g_a[slot], &user_pre[slot]);
            let x = self.user_base.row(u);
            accumulate_layer(&mut grads.user_w, &mut grads.user_b, x, &g_pre);
            let gx = grads.user_base.row_mut(u);
            for (r, gv) in gx.iter_mut().enumerate() {
                *gv += crate::math::dot(self.user_tower.w.row(r), &g_pre);
            }
        }
        for (slot, &i) in items.iter().enumerate() {
            let g_pre = masked(&g_c[slot], &item_pre[slot]);
            accumulate_layer(&mut grads.item_w, &mut grads.item_b, self.item_base.row(i), &g_pre);
        }
        Ok((loss, grads))
    }

    /// Trainable parameters, in the order of [`ShallowGrads::pack`].
    pub fn pack(&self) -> Vec<f64> {
        let mut v = Vec::new();
        v.extend_from_slice(self.user_base.as_slice());
        v.extend_from_slice(self.user_tower.w.as_slice());
        v.extend_from_slice(&self.user_tower.b);
        v.extend_from_slice(self.item_tower.w.as_slice());
        v.extend_from_slice(&self.item_tower.b);
        v
    }

    pub fn unpack(&mut self, flat: &[f64]) {
        let mut rest = flat;
        for dst in [
            self.user_base.as_mut_slice(),
            self.user_tower.w.as_mut_slice(),
            &mut self.user_tower.b[..],
            self.item_tower.w.as_mut_slice(),
            &mut self.item_tower.b[..],
        ] {
            let (head, tail) = rest.split_at(dst.len());
            dst.copy_from_slice(head);
            rest = tail;
        }
        assert!(rest.is_empty(), "parameter vector too long");
    }

    fn step(&mut self, opt: &mut [AdamState<f64>; 5], g: &ShallowGrads) -> Result<()> {
        let [s0, s1, s2, s3, s4] = opt;
        s0.step(self.user_base.as_mut_slice(), g.user_base.as_slice())?;
        s1.step(self.user_tower.w.as_mut_slice(), g.user_w.as_slice())?;
        s2.step(&mut self.user_tower.b, &g.user_b)?;
        s3.step(self.item_tower.w.as_mut_slice(), g.item_w.as_slice())?;
        s4.step(&mut self.item_tower.b, &g.item_b)?;
        Ok(())
    }

    pub fn export_item_matrix(&self) -> Result<Matrix> {
        self.item_tower.forward(&self.item_base)
    }

    pub fn export_item_table(&self, ids: Vec<String>) -> Result<EmbeddingTable> {
        EmbeddingTable::new(format!("shallow/{}", self.label), ids, self.export_item_matrix()?)
    }

    pub fn export_user_vectors(&self) -> Result<Matrix> {
        self.user_tower.forward(&self.user_base)
    }

    /// Cosine retrieval with exported user vectors as profiles.
    pub fn scorer(&self) -> Result<KnnScorer> {
        let names = (0..self.n_items()).map(|i| format!("#{i}")).collect();
        let vectors = ItemVectors::full(self.export_item_matrix()?, names)?;
        let queries = self.export_user_vectors()?.row_iter().map(<[f64]>::to_vec).collect();
        KnnScorer::from_queries(vectors, queries)
    }

    pub fn save(&self, ckpt: &mut Checkpoint) {
        ckpt.set_meta("shallow.label", &self.label);
        ckpt.set_meta("shallow.margin", self.margin);
        ckpt.insert("shallow.user_base", self.user_base.clone());
        ckpt.insert("shallow.user_w", self.user_tower.w.clone());
        ckpt.insert("shallow.user_b", row_matrix(&self.user_tower.b));
        ckpt.insert("shallow.item_w", self.item_tower.w.clone());
        ckpt.insert("shallow.item_b", row_matrix(&self.item_tower.b));
    }

    /// Restores trainable state; the frozen item base is supplied again.
    pub fn load(ckpt: &Checkpoint, item_base: Matrix) -> Result<Self> {
        let tower = |w: &str, b: &str| -> Result<Tower> {
            Ok(Tower {
                w: ckpt.tensor(w)?.clone(),
                b: ckpt.tensor(b)?.row(0).to_vec(),
            })
        };
        let model = Self {
            label: ckpt.parse_meta("shallow.label")?,
            margin: ckpt.parse_meta("shallow.margin")?,
            user_base: ckpt.tensor("shallow.user_base")?.clone(),
            user_tower: tower("shallow.user_w", "shallow.user_b")?,
            item_tower: tower("shallow.item_w", "shallow.item_b")?,
            item_base,
        };
        let d = model.dim();
        if model.user_base.cols() != d || model.user_tower.w.shape() != (d, d) || model.item_tower.w.shape() != (d, d) {
            return Err(Error::Checkpoint("shallow checkpoint does not match item base width".into()));
        }
        Ok(model)
    }
}

fn masked(g: &[f64], pre: &[f64]) -> Vec<f64> {
    g.iter().zip(pre).map(|(&gv, &p)| if p > 0.0 { gv } else { 0.0 }).collect()
}

fn accumulate_layer(w: &mut Matrix, b: &mut [f64], x: &[f64], g_pre: &[f64]) {
    for (r, &xv) in x.iter().enumerate() {
        if xv != 0.0 {
            w.row_mut(r).iter_mut().zip(g_pre).for_each(|(wv, &g)| *wv += xv * g);
        }
    }
    b.iter_mut().zip(g_pre).for_each(|(bv, &g)| *bv += g);
}

/// Up to `n` distinct users with no train event on the item, uniformly
/// without replacement. `interacted` must be sorted. The whole eligible
/// pool comes back (ascending) when it has at most `n` users.
pub fn sample_negative_users(n: usize, interacted: &[usize], n_users: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let pool_size = n_users.saturating_sub(interacted.len());
    if pool_size <= n {
        return (0..n_users).filter(|u| interacted.binary_search(u).is_err()).collect();
    }
    if pool_size <= 4 * n {
        let mut pool: Vec<usize> = (0..n_users).filter(|u| interacted.binary_search(u).is_err()).collect();
        let (chosen, _) = pool.partial_shuffle(rng, n);
        return chosen.to_vec();
    }
    let mut chosen = Vec::with_capacity(n);
    let mut seen = HashSet::with_capacity(n);
    while chosen.len() < n {
        let u = rng.random_range(0..n_users);
        if interacted.binary_search(&u).is_err() && seen.insert(u) {
            chosen.push(u);
        }
    }
    chosen
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShallowHyper {
    pub epochs: usize,
    pub lr: f64,
    pub n_neg: usize,
    pub margin: f64,
    pub batch_size: usize,
    pub tower_noise: f64,
    pub seed: u64,
    pub schedule: Schedule,
}

impl Default for ShallowHyper {
    fn default() -> Self {
        Self {
            epochs: 100,
            lr: 1e-3,
            n_neg: 20,
            margin: 0.2,
            batch_size: 256,
            tower_noise: 0.01,
            seed: 0,
            schedule: Schedule::default(),
        }
    }
}

/// Builds the model from the aligned item base and trains it.
pub fn train_shallow(
    item_base: Matrix,
    label: &str,
    index: &SplitIndex,
    hyper: &ShallowHyper,
    probe: Option<ValidationProbe<'_>>,
) -> Result<(ShallowModel, TrainHistory)> {
    if item_base.rows() != index.n_items {
        return Err(Error::DimensionMismatch {
            context: "shallow item base rows vs items",
            expected: index.n_items,
            actual: item_base.rows(),
        });
    }
    let model = ShallowModel::new(item_base, label, &index.history, hyper.margin, hyper.tower_noise, hyper.seed)?;
    train_model(model, index, hyper, probe)
}

/// Continues training an existing model.
pub fn train_model(
    mut model: ShallowModel,
    index: &SplitIndex,
    hyper: &ShallowHyper,
    probe: Option<ValidationProbe<'_>>,
) -> Result<(ShallowModel, TrainHistory)> {
    if hyper.batch_size == 0 || hyper.n_neg == 0 {
        return Err(Error::InvalidConfig("shallow batch size and n_neg must be positive".into()));
    }
    let mut pairs = index.train_pairs();
    let mut item_users: Vec<Vec<usize>> = vec![Vec::new(); index.n_items];
    for &(u, i) in &pairs {
        item_users[i].push(u);
    }
    let dim = model.dim();
    let mut opt = [
        AdamState::new(model.user_base.as_slice().len(), hyper.lr),
        AdamState::new(dim * dim, hyper.lr),
        AdamState::new(dim, hyper.lr),
        AdamState::new(dim * dim, hyper.lr),
        AdamState::new(dim, hyper.lr),
    ];
    let stream = |k| {
        let mut r = ChaCha8Rng::seed_from_u64(hyper.seed);
        r.set_stream(k);
        r
    };
    let mut shuffle_rng = stream(2);
    let mut neg_rng = stream(3);

    let probe = probe.filter(|p| !p.is_empty());
    let mut history = TrainHistory::default();
    let mut plateau = None;
    let mut best = model.clone();
    if let Some(p) = probe {
        let v = p.hitrate(&model.scorer()?)?;
        history.initial_validation = Some(v);
        plateau = Some(Plateau::new(hyper.schedule, hyper.lr, v));
    }

    for epoch in 1..=hyper.epochs {
        pairs.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for (b, chunk) in pairs.chunks(hyper.batch_size).enumerate() {
            let batch: Vec<Triple> = chunk
                .iter()
                .filter_map(|&(user, item)| {
                    let negatives = sample_negative_users(hyper.n_neg, &item_users[item], index.n_users, &mut neg_rng);
                    (!negatives.is_empty()).then_some(Triple { user, item, negatives })
                })
                .collect();
            if batch.is_empty() {
                continue;
            }
            let (loss, grads) = model.batch_loss(&batch)?;
            check_finite(loss, epoch, b)?;
            epoch_loss += loss;
            model.step(&mut opt, &grads)?;
        }
        let mut record = EpochRecord {
            epoch,
            loss: epoch_loss,
            validation: None,
            lr: opt[0].lr,
        };
        match (probe, plateau.as_mut()) {
            (Some(p), Some(pl)) => {
                let v = p.hitrate(&model.scorer()?)?;
                record.validation = Some(v);
                history.epochs.push(record);
                match pl.observe(v) {
                    Step::Continue { improved, lr } => {
                        if improved {
                            best = model.clone();
                            history.best_epoch = epoch;
                        }
                        opt.iter_mut().for_each(|s| s.lr = lr);
                    }
                    Step::Stop => {
                        history.stopped_early = true;
                        break;
                    }
                }
            }
            _ => {
                history.epochs.push(record);
                history.best_epoch = epoch;
                best = model.clone();
            }
        }
    }
    Ok((best, history))
}
