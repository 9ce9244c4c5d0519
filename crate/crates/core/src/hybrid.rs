//! Content-to-collaborative projection trained through the ELSA objective.
//!
//! Frozen content rows pass through a projection head; the unit-norm output
//! plays the role of ELSA's item matrix. Cold items get rows from the same
//! head, which is what lets the model score them.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{Checkpoint, SplitIndex};
use crate::elsa::{active_users, elsa_loss_rows, ElsaScorer};
use crate::error::{Error, Result};
use crate::projection::{HeadOptimizer, ProjectionHead};
use crate::train::{check_finite, EpochRecord, Plateau, Schedule, Step, TrainHistory, ValidationProbe};
use crate::Matrix;

/// Item matrix: one head output row per content row.
pub fn hybrid_item_matrix(par: &Matrix, head: &ProjectionHead) -> Result<Matrix> {
    head.forward(par)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridHyper {
    pub target_dim: usize,
    /// Hidden width of the head; `None` uses `target_dim`.
    pub hidden_dim: Option<usize>,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub schedule: Schedule,
}

impl Default for HybridHyper {
    fn default() -> Self {
        Self {
            target_dim: 768,
            hidden_dim: None,
            epochs: 200,
            lr: 0.01,
            batch_size: 256,
            seed: 0,
            schedule: Schedule::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridModel {
    pub head: ProjectionHead,
    pub label: String,
}

impl HybridModel {
    pub fn init(in_dim: usize, hyper: &HybridHyper, label: impl Into<String>) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
        rng.set_stream(1);
        let hidden = hyper.hidden_dim.unwrap_or(hyper.target_dim);
        Self {
            head: ProjectionHead::init(in_dim, hidden, hyper.target_dim, &mut rng),
            label: label.into(),
        }
    }

    /// Scorer over hot and cold items. `par` rows follow the dense item index.
    pub fn scorer<'a>(&self, index: &'a SplitIndex, par: &Matrix) -> Result<ElsaScorer<'a>> {
        let hot = hybrid_item_matrix(&par.select_rows(&index.hot_items), &self.head)?;
        let cold = if index.cold_items.is_empty() {
            Matrix::zeros(0, hot.cols())
        } else {
            hybrid_item_matrix(&par.select_rows(&index.cold_items), &self.head)?
        };
        Ok(ElsaScorer::new(index, hot, Some(cold)))
    }

    pub fn save(&self, ckpt: &mut Checkpoint) {
        ckpt.set_meta("hybrid.label", &self.label);
        self.head.save("hybrid.head", ckpt);
    }

    pub fn load(ckpt: &Checkpoint) -> Result<Self> {
        Ok(Self {
            head: ProjectionHead::load("hybrid.head", ckpt)?,
            label: ckpt.parse_meta("hybrid.label")?,
        })
    }
}

/// Loss and head gradients for one batch of binary user rows.
pub fn hybrid_loss(rows: &[&[usize]], par_hot: &Matrix, head: &ProjectionHead) -> Result<(f64, crate::projection::HeadGrads)> {
    let cache = head.forward_cached(par_hot)?;
    let (loss, grad_a) = elsa_loss_rows(rows, &cache.output)?;
    let grads = head.backward(par_hot, &cache, &grad_a)?;
    Ok((loss, grads))
}

/// `par` rows follow the dense item index and must cover every item.
pub fn train_hybrid(
    par: &Matrix,
    label: &str,
    index: &SplitIndex,
    hyper: &HybridHyper,
    probe: Option<ValidationProbe<'_>>,
) -> Result<(HybridModel, TrainHistory)> {
    if par.rows() != index.n_items {
        return Err(Error::DimensionMismatch {
            context: "hybrid content rows vs items",
            expected: index.n_items,
            actual: par.rows(),
        });
    }
    if hyper.batch_size == 0 || hyper.target_dim == 0 {
        return Err(Error::InvalidConfig("hybrid batch size and target_dim must be positive".into()));
    }
    let par_hot = par.select_rows(&index.hot_items);
    let mut model = HybridModel::init(par.cols(), hyper, label);
    let mut opt = HeadOptimizer::new(&model.head, hyper.lr);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    shuffle_rng.set_stream(2);
    let mut users = active_users(index);

    let probe = probe.filter(|p| !p.is_empty());
    let mut history = TrainHistory::default();
    let mut plateau = None;
    let mut best = model.clone();
    if let Some(p) = probe {
        let v = p.hitrate(&model.scorer(index, par)?)?;
        history.initial_validation = Some(v);
        plateau = Some(Plateau::new(hyper.schedule, hyper.lr, v));
    }

    let mut current_lr = hyper.lr;
    for epoch in 1..=hyper.epochs {
        users.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for (b, chunk) in users.chunks(hyper.batch_size).enumerate() {
            let rows: Vec<&[usize]> = chunk.iter().map(|&u| index.x_rows[u].as_slice()).collect();
            let (loss, grads) = hybrid_loss(&rows, &par_hot, &model.head)?;
            check_finite(loss, epoch, b)?;
            epoch_loss += loss;
            opt.step(&mut model.head, &grads)?;
        }
        let mut record = EpochRecord {
            epoch,
            loss: epoch_loss,
            validation: None,
            lr: current_lr,
        };
        match (probe, plateau.as_mut()) {
            (Some(p), Some(pl)) => {
                let v = p.hitrate(&model.scorer(index, par)?)?;
                record.validation = Some(v);
                history.epochs.push(record);
                match pl.observe(v) {
                    Step::Continue { improved, lr } => {
                        if improved {
                            best = model.clone();
                            history.best_epoch = epoch;
                        }
                        opt.set_lr(lr);
                        current_lr = lr;
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elsa::elsa_loss;
    use crate::math::{grad_check, norm};
    use rand::Rng;

    #[test]
    fn zero_head_emits_bias_direction() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut head = ProjectionHead::init(3, 4, 2, &mut rng);
        head.unpack(&vec![0.0; head.param_count()]);
        head.b2 = vec![1.0, 0.0];
        let par = Matrix::from_rows(&[vec![0.3, -1.0, 2.0], vec![1.0, 1.0, 1.0]]).unwrap();
        let a = hybrid_item_matrix(&par, &head).unwrap();
        for row in a.row_iter() {
            assert_eq!(row, &[1.0, 0.0]);
        }
    }

    #[test]
    fn rows_are_unit_norm_and_inputs_untouched() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let head = ProjectionHead::init(5, 6, 4, &mut rng);
        let par = Matrix::new(7, 5, (0..35).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let before = par.clone();
        let a = hybrid_item_matrix(&par, &head).unwrap();
        assert_eq!(par, before);
        for row in a.row_iter() {
            assert!((norm(row) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn composed_gradient_matches_finite_differences() {
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (users, items, in_dim) = (5, 4, 3);
            let x = Matrix::new(
                users,
                items,
                (0..users * items).map(|_| if rng.random_bool(0.5) { 1.0 } else { 0.0 }).collect(),
            )
            .unwrap();
            let rows: Vec<Vec<usize>> = x
                .row_iter()
                .map(|r| r.iter().enumerate().filter(|(_, &v)| v == 1.0).map(|(c, _)| c).collect())
                .collect();
            let refs: Vec<&[usize]> = rows.iter().map(Vec::as_slice).collect();
            let par = Matrix::new(items, in_dim, (0..items * in_dim).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
            let head = ProjectionHead::init(in_dim, 4, 2, &mut rng);
            let (_, grads) = hybrid_loss(&refs, &par, &head).unwrap();
            let loss = |p: &[f64]| {
                let mut h = head.clone();
                h.unpack(p);
                elsa_loss(&x, &hybrid_item_matrix(&par, &h).unwrap()).unwrap().0
            };
            let err = grad_check(loss, &head.pack(), &grads.pack(), 1e-4);
            assert!(err < 1e-4, "seed {seed}: {err}");
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let m = HybridModel::init(
            3,
            &HybridHyper {
                target_dim: 2,
                ..HybridHyper::default()
            },
            "mfcc",
        );
        let mut c = Checkpoint::new();
        m.save(&mut c);
        let back = HybridModel::load(&Checkpoint::from_bytes(&c.to_bytes().unwrap()).unwrap()).unwrap();
        assert_eq!(back.label, "mfcc");
        assert_eq!(back.head.out_dim(), 2);
    }
}
