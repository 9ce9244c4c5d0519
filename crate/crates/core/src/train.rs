//! Training-loop plumbing shared by the trainable recommenders.

use crate::data::SplitIndex;
use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::scoring::{recommend_users, Scorer};

/// Early stopping and reduce-on-plateau, both driven by a validation metric.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    /// Stop after this many evaluations without improvement.
    pub patience: usize,
    /// Halve the learning rate after this many stagnant evaluations.
    pub plateau_patience: usize,
    pub plateau_factor: f64,
    pub min_lr: f64,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            patience: 5,
            plateau_patience: 3,
            plateau_factor: 0.5,
            min_lr: 1e-5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub validation: Option<f64>,
    pub lr: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    /// Validation metric before the first update, if a probe was given.
    pub initial_validation: Option<f64>,
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were kept (0 = initialization).
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl TrainHistory {
    pub fn best_validation(&self) -> Option<f64> {
        if self.best_epoch == 0 {
            self.initial_validation
        } else {
            self.epochs.get(self.best_epoch - 1).and_then(|r| r.validation)
        }
    }
}

pub(crate) enum Step {
    Continue { improved: bool, lr: f64 },
    Stop,
}

/// Tracks the best validation value and decides on LR cuts and stopping.
#[derive(Debug, Clone)]
pub(crate) struct Plateau {
    schedule: Schedule,
    best: f64,
    stale: usize,
    lr: f64,
}

impl Plateau {
    pub fn new(schedule: Schedule, lr: f64, initial: f64) -> Self {
        Self {
            schedule,
            best: initial,
            stale: 0,
            lr,
        }
    }

    pub fn observe(&mut self, value: f64) -> Step {
        if value > self.best {
            self.best = value;
            self.stale = 0;
            return Step::Continue {
                improved: true,
                lr: self.lr,
            };
        }
        self.stale += 1;
        if self.stale >= self.schedule.patience {
            return Step::Stop;
        }
        if self.stale.is_multiple_of(self.schedule.plateau_patience.max(1)) {
            self.lr = (self.lr * self.schedule.plateau_factor).max(self.schedule.min_lr);
        }
        Step::Continue {
            improved: false,
            lr: self.lr,
        }
    }
}

/// Validation HitRate@k under the hot protocol.
#[derive(Debug, Clone, Copy)]
pub struct ValidationProbe<'a> {
    pub index: &'a SplitIndex,
    pub k: usize,
}

impl<'a> ValidationProbe<'a> {
    pub fn new(index: &'a SplitIndex, k: usize) -> Self {
        Self { index, k }
    }

    pub fn is_empty(&self) -> bool {
        self.index.validation.is_empty()
    }

    pub fn hitrate(&self, scorer: &dyn Scorer) -> Result<f64> {
        let recs = recommend_users(
            scorer,
            self.index.validation.keys().copied(),
            self.k,
            &self.index.hot_items,
            |u| &self.index.train_items[u],
        )?;
        Ok(evaluate(&recs, &self.index.validation, self.k).aggregate.hitrate)
    }
}

pub(crate) fn check_finite(loss: f64, epoch: usize, batch: usize) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite {
            context: format!("training loss at epoch {epoch}, batch {batch}"),
        })
    }
}
