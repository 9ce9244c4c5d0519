//! Shallow linear autoencoder over the binarized train matrix.
//!
//! The objective is `‖X − X(AAᵀ − I)‖²_F = ‖2X − XAAᵀ‖²_F`. With
//! `P = XA` and `R = 2X − PAᵀ` the gradient is `−2(Xᵀ(RA) + RᵀP)`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::data::{Checkpoint, SplitIndex};
use crate::error::{Error, Result};
use crate::math::{dot, normalize_in_place, AdamState};
use crate::scoring::Scorer;
use crate::train::{check_finite, Plateau, Schedule, Step, TrainHistory, ValidationProbe, EpochRecord};
use crate::Matrix;

/// Dense loss and gradient with respect to `A`. `X` may hold any reals.
pub fn elsa_loss(x: &Matrix, a: &Matrix) -> Result<(f64, Matrix)> {
    if a.rows() != x.cols() {
        return Err(Error::DimensionMismatch {
            context: "elsa_loss: rows of A vs columns of X",
            expected: x.cols(),
            actual: a.rows(),
        });
    }
    let p = x.matmul(a)?;
    let r = x.scale(2.0).sub(&p.matmul_transposed(a)?)?;
    let loss = r.frobenius_sq();
    let ra = r.matmul(a)?;
    let grad = x.transpose_matmul(&ra)?.add(&r.transpose_matmul(&p)?)?.scale(-2.0);
    Ok((loss, grad))
}

/// Loss and gradient over a batch of binary user rows given as sorted
/// column lists. Only one dense residual row exists at a time.
pub fn elsa_loss_rows(rows: &[&[usize]], a: &Matrix) -> Result<(f64, Matrix)> {
    let (n, d) = a.shape();
    let mut grad = Matrix::zeros(n, d);
    let mut loss = 0.0;
    let mut p = vec![0.0; d];
    let mut r = vec![0.0; n];
    let mut ra = vec![0.0; d];
    for cols in rows {
        if let Some(&bad) = cols.iter().find(|&&c| c >= n) {
            return Err(Error::DimensionMismatch {
                context: "elsa_loss_rows column index",
                expected: n,
                actual: bad,
            });
        }
        p.iter_mut().for_each(|v| *v = 0.0);
        for &c in *cols {
            p.iter_mut().zip(a.row(c)).for_each(|(pv, &av)| *pv += av);
        }
        for (j, rj) in r.iter_mut().enumerate() {
            *rj = -dot(&p, a.row(j));
        }
        for &c in *cols {
            r[c] += 2.0;
        }
        ra.iter_mut().for_each(|v| *v = 0.0);
        for (j, &rj) in r.iter().enumerate() {
            loss += rj * rj;
            ra.iter_mut().zip(a.row(j)).for_each(|(acc, &av)| *acc += rj * av);
            let g = grad.row_mut(j);
            g.iter_mut().zip(&p).for_each(|(gv, &pv)| *gv -= 2.0 * rj * pv);
        }
        for &c in *cols {
            grad.row_mut(c)
                .iter_mut()
                .zip(&ra)
                .for_each(|(gv, &v)| *gv -= 2.0 * v);
        }
    }
    Ok((loss, grad))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElsaHyper {
    pub target_dim: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub schedule: Schedule,
    pub row_normalized: bool,
}

impl Default for ElsaHyper {
    fn default() -> Self {
        Self {
            target_dim: 768,
            epochs: 200,
            lr: 0.01,
            batch_size: 256,
            seed: 0,
            schedule: Schedule::default(),
            row_normalized: true,
        }
    }
}

/// Item factor matrix over the hot items (rows follow `SplitIndex::hot_items`).
#[derive(Debug, Clone, PartialEq)]
pub struct ElsaModel {
    pub a: Matrix,
    pub row_normalized: bool,
}

impl ElsaModel {
    pub fn target_dim(&self) -> usize {
        self.a.cols()
    }

    /// Seeded Gaussian rows, unit-normalized when requested.
    pub fn init(n_items: usize, target_dim: usize, row_normalized: bool, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..n_items * target_dim)
            .map(|_| rng.sample::<f64, _>(StandardNormal) / (target_dim as f64).sqrt())
            .collect();
        let mut a = Matrix::new(n_items, target_dim, data).expect("finite init");
        if row_normalized {
            normalize_rows(&mut a);
        }
        Self { a, row_normalized }
    }

    pub fn scorer<'a>(&'a self, index: &'a SplitIndex) -> ElsaScorer<'a> {
        ElsaScorer::new(index, self.a.clone(), None)
    }

    pub fn save(&self, ckpt: &mut Checkpoint) {
        ckpt.insert("elsa.a", self.a.clone());
        ckpt.set_meta("elsa.row_normalized", self.row_normalized);
    }

    pub fn load(ckpt: &Checkpoint) -> Result<Self> {
        Ok(Self {
            a: ckpt.tensor("elsa.a")?.clone(),
            row_normalized: ckpt.parse_meta("elsa.row_normalized")?,
        })
    }
}

pub(crate) fn normalize_rows(a: &mut Matrix) {
    for r in 0..a.rows() {
        normalize_in_place(a.row_mut(r));
    }
}

/// Users that have at least one train interaction, ascending.
pub(crate) fn active_users(index: &SplitIndex) -> Vec<usize> {
    (0..index.n_users).filter(|&u| !index.x_rows[u].is_empty()).collect()
}

pub fn train_elsa(
    index: &SplitIndex,
    hyper: &ElsaHyper,
    probe: Option<ValidationProbe<'_>>,
) -> Result<(ElsaModel, TrainHistory)> {
    if hyper.batch_size == 0 || hyper.target_dim == 0 {
        return Err(Error::InvalidConfig("elsa batch size and target_dim must be positive".into()));
    }
    let mut model = ElsaModel::init(index.n_hot(), hyper.target_dim, hyper.row_normalized, hyper.seed);
    let mut adam = AdamState::new(model.a.as_slice().len(), hyper.lr);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    shuffle_rng.set_stream(1);
    let mut users = active_users(index);

    let probe = probe.filter(|p| !p.is_empty());
    let mut history = TrainHistory::default();
    let mut plateau = None;
    let mut best = model.clone();
    if let Some(p) = probe {
        let v = p.hitrate(&model.scorer(index))?;
        history.initial_validation = Some(v);
        plateau = Some(Plateau::new(hyper.schedule, hyper.lr, v));
    }

    for epoch in 1..=hyper.epochs {
        users.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for (b, chunk) in users.chunks(hyper.batch_size).enumerate() {
            let rows: Vec<&[usize]> = chunk.iter().map(|&u| index.x_rows[u].as_slice()).collect();
            let (loss, grad) = elsa_loss_rows(&rows, &model.a)?;
            check_finite(loss, epoch, b)?;
            epoch_loss += loss;
            adam.step(model.a.as_mut_slice(), grad.as_slice())?;
            if model.row_normalized {
                normalize_rows(&mut model.a);
            }
        }
        let mut record = EpochRecord {
            epoch,
            loss: epoch_loss,
            validation: None,
            lr: adam.lr,
        };
        if let (Some(p), Some(pl)) = (probe, plateau.as_mut()) {
            let v = p.hitrate(&model.scorer(index))?;
            record.validation = Some(v);
            history.epochs.push(record);
            match pl.observe(v) {
                Step::Continue { improved, lr } => {
                    if improved {
                        best = model.clone();
                        history.best_epoch = epoch;
                    }
                    adam.lr = lr;
                }
                Step::Stop => {
                    history.stopped_early = true;
                    break;
                }
            }
        } else {
            history.epochs.push(record);
            history.best_epoch = epoch;
            best = model.clone();
        }
    }
    Ok((best, history))
}

/// Reconstruction scores `x_u·A·Aᵀ − x_u` on hot items and, when content
/// rows for cold items are supplied, `x_u·A·A_coldᵀ` on cold items.
#[derive(Debug, Clone)]
pub struct ElsaScorer<'a> {
    index: &'a SplitIndex,
    a_hot: Matrix,
    cold: Option<(Matrix, Vec<Option<usize>>)>,
}

impl<'a> ElsaScorer<'a> {
    /// `a_cold` rows follow `index.cold_items`.
    pub fn new(index: &'a SplitIndex, a_hot: Matrix, a_cold: Option<Matrix>) -> Self {
        let cold = a_cold.map(|m| {
            let mut col = vec![None; index.n_items];
            for (r, &i) in index.cold_items.iter().enumerate() {
                col[i] = Some(r);
            }
            (m, col)
        });
        Self { index, a_hot, cold }
    }

    pub fn supports_cold(&self) -> bool {
        self.cold.is_some()
    }

    fn user_projection(&self, user: usize) -> Result<Vec<f64>> {
        let cols = self
            .index
            .x_rows
            .get(user)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown user index {user}")))?;
        let mut p = vec![0.0; self.a_hot.cols()];
        for &c in cols {
            p.iter_mut().zip(self.a_hot.row(c)).for_each(|(pv, &av)| *pv += av);
        }
        Ok(p)
    }
}

impl Scorer for ElsaScorer<'_> {
    fn score(&self, user: usize, candidates: &[usize]) -> Result<Vec<f64>> {
        let p = self.user_projection(user)?;
        let x = &self.index.train_items[user];
        candidates
            .iter()
            .map(|&item| {
                if let Some(c) = self.index.hot_col.get(item).copied().flatten() {
                    let own = if x.contains(&item) { 1.0 } else { 0.0 };
                    return Ok(dot(&p, self.a_hot.row(c)) - own);
                }
                match &self.cold {
                    Some((a_cold, col)) => match col.get(item).copied().flatten() {
                        Some(r) => Ok(dot(&p, a_cold.row(r))),
                        None => Err(Error::UncoveredItem(format!("#{item}"))),
                    },
                    None => Err(Error::Capability(
                        "collaborative ELSA has no row for cold items; it cannot serve the cold scenario".into(),
                    )),
                }
            })
            .collect()
    }
}

/// Score vectors for a set of users over `candidates`, one per user.
pub fn score_users(scorer: &ElsaScorer<'_>, users: &[usize], candidates: &[usize]) -> Result<Vec<Vec<f64>>> {
    users.iter().map(|&u| scorer.score(u, candidates)).collect()
}
