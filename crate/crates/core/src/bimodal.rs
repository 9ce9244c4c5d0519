//! Two projection heads aligning collaborative and content item vectors in
//! one space with a contrastive loss over in-batch items.
//!
//! With `sim(a, b) = a·b / τ` and `j` ranging over the whole batch:
//!
//! ADCL: `(1/N) Σ_i [ −sim(z₁ⁱ, z₂ⁱ) + log Σ_j exp sim(z₁ⁱ, z₂ʲ) ]`
//!
//! DCL: `(1/N) Σ_{k=1,2} Σ_i [ −sim(z₁ⁱ, z₂ⁱ)
//!        + log Σ_j ( exp sim(z_kⁱ, z_kʲ) + exp sim(z₁ⁱ, z₂ʲ) ) ]`

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{Checkpoint, EmbeddingTable, SplitIndex};
use crate::elsa::ElsaModel;
use crate::error::{Error, Result};
use crate::knn::{ItemVectors, KnnScorer};
use crate::math::normalize_in_place;
use crate::projection::{HeadOptimizer, ProjectionHead};
use crate::train::{check_finite, EpochRecord, Plateau, Schedule, Step, TrainHistory, ValidationProbe};
use crate::Matrix;

fn check_batch(z1: &Matrix, z2: &Matrix, tau: f64) -> Result<()> {
    if z1.rows() == 0 {
        return Err(Error::EmptyInput("contrastive batch"));
    }
    if z1.shape() != z2.shape() {
        return Err(Error::DimensionMismatch {
            context: "contrastive batch modalities",
            expected: z1.rows(),
            actual: z2.rows(),
        });
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidConfig(format!("temperature must be positive, got {tau}")));
    }
    Ok(())
}

/// Scaled similarity matrix `A Bᵀ / τ`.
fn sims(a: &Matrix, b: &Matrix, tau: f64) -> Result<Matrix> {
    Ok(a.matmul_transposed(b)?.scale(1.0 / tau))
}

/// Adds `coef · d/dA` and `coef · d/dB` of `Σ G ⊙ (A Bᵀ/τ)` into the grads.
fn backprop_sims(g: &Matrix, a: &Matrix, b: &Matrix, tau: f64, ga: &mut Matrix, gb: &mut Matrix) -> Result<()> {
    let da = g.matmul(b)?.scale(1.0 / tau);
    let db = g.transpose_matmul(a)?.scale(1.0 / tau);
    *ga = ga.add(&da)?;
    *gb = gb.add(&db)?;
    Ok(())
}

pub fn adcl_loss(z1: &Matrix, z2: &Matrix, tau: f64) -> Result<(f64, Matrix, Matrix)> {
    check_batch(z1, z2, tau)?;
    let n = z1.rows();
    let s = sims(z1, z2, tau)?;
    let mut g = Matrix::zeros(n, n);
    let mut loss = 0.0;
    for i in 0..n {
        let row = s.row(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        loss += -row[i] + max + sum.ln();
        let gi = g.row_mut(i);
        for (j, gv) in gi.iter_mut().enumerate() {
            *gv = (row[j] - max).exp() / sum / n as f64;
        }
        gi[i] -= 1.0 / n as f64;
    }
    let mut g1 = Matrix::zeros(n, z1.cols());
    let mut g2 = Matrix::zeros(n, z1.cols());
    backprop_sims(&g, z1, z2, tau, &mut g1, &mut g2)?;
    Ok((loss / n as f64, g1, g2))
}

pub fn dcl_loss(z1: &Matrix, z2: &Matrix, tau: f64) -> Result<(f64, Matrix, Matrix)> {
    check_batch(z1, z2, tau)?;
    let n = z1.rows();
    let nf = n as f64;
    let cross = sims(z1, z2, tau)?;
    let mut g_cross = Matrix::zeros(n, n);
    let mut g1 = Matrix::zeros(n, z1.cols());
    let mut g2 = Matrix::zeros(n, z1.cols());
    let mut loss = 0.0;
    for (zk, k) in [(z1, 0), (z2, 1)] {
        let own = sims(zk, zk, tau)?;
        let mut g_own = Matrix::zeros(n, n);
        for i in 0..n {
            let (o, c) = (own.row(i), cross.row(i));
            let max = o.iter().chain(c).copied().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = o.iter().chain(c).map(|v| (v - max).exp()).sum();
            loss += -c[i] + max + sum.ln();
            for j in 0..n {
                g_own.set(i, j, (o[j] - max).exp() / sum / nf);
                let gc = g_cross.get(i, j) + (c[j] - max).exp() / sum / nf;
                g_cross.set(i, j, gc);
            }
            g_cross.set(i, i, g_cross.get(i, i) - 1.0 / nf);
        }
        let gk = if k == 0 { &mut g1 } else { &mut g2 };
        let mut tmp = Matrix::zeros(n, z1.cols());
        backprop_sims(&g_own, zk, zk, tau, gk, &mut tmp)?;
        *gk = gk.add(&tmp)?;
    }
    backprop_sims(&g_cross, z1, z2, tau, &mut g1, &mut g2)?;
    Ok((loss / nf, g1, g2))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContrastiveLoss {
    Adcl,
    Dcl,
}

impl ContrastiveLoss {
    pub fn eval(self, z1: &Matrix, z2: &Matrix, tau: f64) -> Result<(f64, Matrix, Matrix)> {
        match self {
            Self::Adcl => adcl_loss(z1, z2, tau),
            Self::Dcl => dcl_loss(z1, z2, tau),
        }
    }
}

impl FromStr for ContrastiveLoss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adcl" => Ok(Self::Adcl),
            "dcl" => Ok(Self::Dcl),
            other => Err(Error::InvalidConfig(format!("unknown contrastive loss `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Variant {
    Collaborative,
    Content,
    Average,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Collaborative, Variant::Content, Variant::Average];

    pub fn name(self) -> &'static str {
        match self {
            Self::Collaborative => "collaborative",
            Self::Content => "content",
            Self::Average => "average",
        }
    }

    pub fn serves_cold(self) -> bool {
        self == Self::Content
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown variant `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BimodalHyper {
    pub target_dim: usize,
    pub hidden_dim: Option<usize>,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub tau: f64,
    pub loss: ContrastiveLoss,
    pub seed: u64,
    pub schedule: Schedule,
    /// Variant whose KNN validation HitRate drives early stopping.
    pub probe_variant: Variant,
}

impl Default for BimodalHyper {
    fn default() -> Self {
        Self {
            target_dim: 768,
            hidden_dim: None,
            epochs: 100,
            lr: 1e-3,
            batch_size: 256,
            tau: 0.1,
            loss: ContrastiveLoss::Adcl,
            seed: 0,
            schedule: Schedule::default(),
            probe_variant: Variant::Content,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BimodalModel {
    pub collab_head: ProjectionHead,
    pub content_head: ProjectionHead,
    pub tau: f64,
    pub content_label: String,
}

impl BimodalModel {
    pub fn init(collab_dim: usize, content_dim: usize, hyper: &BimodalHyper, label: impl Into<String>) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
        rng.set_stream(1);
        let hidden = hyper.hidden_dim.unwrap_or(hyper.target_dim);
        Self {
            collab_head: ProjectionHead::init(collab_dim, hidden, hyper.target_dim, &mut rng),
            content_head: ProjectionHead::init(content_dim, hidden, hyper.target_dim, &mut rng),
            tau: hyper.tau,
            content_label: label.into(),
        }
    }

    /// Projected rows for `items` (dense indices). Collaborative and
    /// average rows exist only for hot items.
    pub fn item_rows(
        &self,
        elsa: &ElsaModel,
        par: &Matrix,
        index: &SplitIndex,
        variant: Variant,
        items: &[usize],
    ) -> Result<Matrix> {
        let content = || self.content_head.forward(&par.select_rows(items));
        if variant == Variant::Content {
            return content();
        }
        let mut cols = Vec::with_capacity(items.len());
        for &i in items {
            match index.hot_col.get(i).copied().flatten() {
                Some(c) => cols.push(c),
                None => {
                    return Err(Error::Capability(format!(
                        "the {variant} bimodal projection needs a collaborative row, which item #{i} does not have"
                    )))
                }
            }
        }
        let collab = self.collab_head.forward(&elsa.a.select_rows(&cols))?;
        if variant == Variant::Collaborative {
            return Ok(collab);
        }
        let mut avg = collab.add(&content()?)?.scale(0.5);
        for r in 0..avg.rows() {
            normalize_in_place(avg.row_mut(r));
        }
        Ok(avg)
    }

    /// Item vectors over the dense index; items without a row are uncovered.
    pub fn item_vectors(
        &self,
        elsa: &ElsaModel,
        par: &Matrix,
        index: &SplitIndex,
        variant: Variant,
    ) -> Result<ItemVectors> {
        let items: Vec<usize> = if variant.serves_cold() {
            (0..index.n_items).collect()
        } else {
            index.hot_items.clone()
        };
        let rows = self.item_rows(elsa, par, index, variant, &items)?;
        let mut full = Matrix::zeros(index.n_items, rows.cols());
        let mut covered = vec![false; index.n_items];
        for (r, &i) in items.iter().enumerate() {
            full.row_mut(i).copy_from_slice(rows.row(r));
            covered[i] = true;
        }
        let names = (0..index.n_items).map(|i| format!("#{i}")).collect();
        ItemVectors::partial(full, covered, names)
    }

    /// Projected table with the caller's item ids, covering every item the
    /// variant can represent.
    pub fn item_table(
        &self,
        elsa: &ElsaModel,
        par: &Matrix,
        index: &SplitIndex,
        variant: Variant,
        ids: &[String],
    ) -> Result<EmbeddingTable> {
        let items: Vec<usize> = if variant.serves_cold() {
            (0..index.n_items).collect()
        } else {
            index.hot_items.clone()
        };
        let rows = self.item_rows(elsa, par, index, variant, &items)?;
        let names = items.iter().map(|&i| ids[i].clone()).collect();
        EmbeddingTable::new(format!("bimodal-{variant}/{}", self.content_label), names, rows)
    }

    /// KNN over the variant's table with mean-of-history profiles.
    pub fn scorer(
        &self,
        elsa: &ElsaModel,
        par: &Matrix,
        index: &SplitIndex,
        variant: Variant,
    ) -> Result<KnnScorer> {
        KnnScorer::from_histories(self.item_vectors(elsa, par, index, variant)?, &index.history)
    }

    pub fn save(&self, ckpt: &mut Checkpoint) {
        ckpt.set_meta("bimodal.tau", self.tau);
        ckpt.set_meta("bimodal.label", &self.content_label);
        self.collab_head.save("bimodal.collab", ckpt);
        self.content_head.save("bimodal.content", ckpt);
    }

    pub fn load(ckpt: &Checkpoint) -> Result<Self> {
        Ok(Self {
            collab_head: ProjectionHead::load("bimodal.collab", ckpt)?,
            content_head: ProjectionHead::load("bimodal.content", ckpt)?,
            tau: ckpt.parse_meta("bimodal.tau")?,
            content_label: ckpt.parse_meta("bimodal.label")?,
        })
    }
}

/// Mean cosine of aligned pairs and of all mismatched pairs.
pub fn alignment(z1: &Matrix, z2: &Matrix) -> (f64, f64) {
    let n = z1.rows();
    let (mut pos, mut neg) = (0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            let c = crate::math::cosine_unchecked(z1.row(i), z2.row(j));
            if i == j {
                pos += c;
            } else {
                neg += c;
            }
        }
    }
    let off = (n * n.saturating_sub(1)).max(1) as f64;
    (pos / n.max(1) as f64, neg / off)
}

/// Trains both heads over hot items. `elsa.a` rows follow
/// `index.hot_items`; `par` rows follow the dense item index.
pub fn train_bimodal(
    elsa: &ElsaModel,
    par: &Matrix,
    label: &str,
    index: &SplitIndex,
    hyper: &BimodalHyper,
    probe: Option<ValidationProbe<'_>>,
) -> Result<(BimodalModel, TrainHistory)> {
    if elsa.a.rows() != index.n_hot() || par.rows() != index.n_items {
        return Err(Error::DimensionMismatch {
            context: "bimodal inputs vs split",
            expected: index.n_hot(),
            actual: elsa.a.rows(),
        });
    }
    if hyper.batch_size < 2 {
        return Err(Error::InvalidConfig("contrastive batches need at least two items".into()));
    }
    let par_hot = par.select_rows(&index.hot_items);
    let mut model = BimodalModel::init(elsa.target_dim(), par.cols(), hyper, label);
    let mut collab_opt = HeadOptimizer::new(&model.collab_head, hyper.lr);
    let mut content_opt = HeadOptimizer::new(&model.content_head, hyper.lr);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    shuffle_rng.set_stream(2);
    let mut order: Vec<usize> = (0..index.n_hot()).collect();

    let probe = probe.filter(|p| !p.is_empty());
    let validate = |m: &BimodalModel, p: &ValidationProbe<'_>| p.hitrate(&m.scorer(elsa, par, index, hyper.probe_variant)?);
    let mut history = TrainHistory::default();
    let mut plateau = None;
    let mut best = model.clone();
    if let Some(p) = probe {
        let v = validate(&model, &p)?;
        history.initial_validation = Some(v);
        plateau = Some(Plateau::new(hyper.schedule, hyper.lr, v));
    }

    let mut current_lr = hyper.lr;
    for epoch in 1..=hyper.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for (b, chunk) in order.chunks(hyper.batch_size).enumerate() {
            if chunk.len() < 2 {
                continue;
            }
            let x1 = elsa.a.select_rows(chunk);
            let x2 = par_hot.select_rows(chunk);
            let c1 = model.collab_head.forward_cached(&x1)?;
            let c2 = model.content_head.forward_cached(&x2)?;
            let (loss, g1, g2) = hyper.loss.eval(&c1.output, &c2.output, hyper.tau)?;
            check_finite(loss, epoch, b)?;
            epoch_loss += loss;
            let grads1 = model.collab_head.backward(&x1, &c1, &g1)?;
            let grads2 = model.content_head.backward(&x2, &c2, &g2)?;
            collab_opt.step(&mut model.collab_head, &grads1)?;
            content_opt.step(&mut model.content_head, &grads2)?;
        }
        let mut record = EpochRecord {
            epoch,
            loss: epoch_loss,
            validation: None,
            lr: current_lr,
        };
        match (probe, plateau.as_mut()) {
            (Some(p), Some(pl)) => {
                let v = validate(&model, &p)?;
                record.validation = Some(v);
                history.epochs.push(record);
                match pl.observe(v) {
                    Step::Continue { improved, lr } => {
                        if improved {
                            best = model.clone();
                            history.best_epoch = epoch;
                        }
                        collab_opt.set_lr(lr);
                        content_opt.set_lr(lr);
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
    use crate::math::{dot, grad_check};
    use rand::Rng;

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
        Matrix::new(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    fn naive_adcl(z1: &Matrix, z2: &Matrix, tau: f64) -> f64 {
        let n = z1.rows();
        let mut total = 0.0;
        for i in 0..n {
            let mut denom = 0.0;
            for j in 0..n {
                denom += (dot(z1.row(i), z2.row(j)) / tau).exp();
            }
            total += -dot(z1.row(i), z2.row(i)) / tau + denom.ln();
        }
        total / n as f64
    }

    fn naive_dcl(z1: &Matrix, z2: &Matrix, tau: f64) -> f64 {
        let n = z1.rows();
        let mut total = 0.0;
        for zk in [z1, z2] {
            for i in 0..n {
                let mut denom = 0.0;
                for j in 0..n {
                    denom += (dot(zk.row(i), zk.row(j)) / tau).exp() + (dot(z1.row(i), z2.row(j)) / tau).exp();
                }
                total += -dot(z1.row(i), z2.row(i)) / tau + denom.ln();
            }
        }
        total / n as f64
    }

    #[test]
    fn adcl_examples() {
        let e = Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
        assert!(adcl_loss(&e, &e, 1.0).unwrap().0.abs() < 1e-15);
        let i2 = Matrix::identity(2);
        let (loss, _, _) = adcl_loss(&i2, &i2, 1.0).unwrap();
        let expected = -1.0 + (1f64.exp() + 1.0).ln();
        assert!((loss - expected).abs() < 1e-12);
        assert!((loss - 0.31326).abs() < 1e-5);
    }

    #[test]
    fn dcl_examples() {
        let e = Matrix::from_rows(&[vec![0.0, 1.0]]).unwrap();
        let (loss, _, _) = dcl_loss(&e, &e, 1.0).unwrap();
        assert!((loss - 2.0 * 2f64.ln()).abs() < 1e-12);
        assert!((loss - 1.3863).abs() < 1e-4);
    }

    #[test]
    fn dcl_symmetric_inputs_split_evenly() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let z = random(4, 3, &mut rng);
        let (loss, _, _) = dcl_loss(&z, &z, 0.5).unwrap();
        // with Z1 = Z2 the k = 1 and k = 2 sums coincide, so each is half
        let half = naive_dcl(&z, &z, 0.5) / 2.0;
        assert!((loss - 2.0 * half).abs() < 1e-9);
    }

    #[test]
    fn errors() {
        let z = Matrix::zeros(0, 2);
        assert!(adcl_loss(&z, &z, 1.0).is_err());
        assert!(dcl_loss(&z, &z, 1.0).is_err());
        assert!(adcl_loss(&Matrix::zeros(2, 2), &Matrix::zeros(3, 2), 1.0).is_err());
        assert!(adcl_loss(&Matrix::zeros(2, 2), &Matrix::zeros(2, 2), 0.0).is_err());
    }

    #[test]
    fn stabilized_losses_match_naive_double_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for n in 1..=16 {
            let z1 = random(n, 3, &mut rng);
            let z2 = random(n, 3, &mut rng);
            let tau = rng.random_range(0.1..2.0);
            assert!((adcl_loss(&z1, &z2, tau).unwrap().0 - naive_adcl(&z1, &z2, tau)).abs() < 1e-9);
            assert!((dcl_loss(&z1, &z2, tau).unwrap().0 - naive_dcl(&z1, &z2, tau)).abs() < 1e-9);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let z1 = random(4, 3, &mut rng);
            let z2 = random(4, 3, &mut rng);
            let tau = 0.5;
            for kind in [ContrastiveLoss::Adcl, ContrastiveLoss::Dcl] {
                let (_, g1, g2) = kind.eval(&z1, &z2, tau).unwrap();
                let mut theta = z1.as_slice().to_vec();
                theta.extend_from_slice(z2.as_slice());
                let mut grad = g1.as_slice().to_vec();
                grad.extend_from_slice(g2.as_slice());
                let loss = |p: &[f64]| {
                    let a = Matrix::new(4, 3, p[..12].to_vec()).unwrap();
                    let b = Matrix::new(4, 3, p[12..].to_vec()).unwrap();
                    kind.eval(&a, &b, tau).unwrap().0
                };
                let err = grad_check(loss, &theta, &grad, 1e-4);
                assert!(err < 1e-4, "{kind:?} seed {seed}: {err}");
            }
        }
    }

    #[test]
    fn head_gradients_through_adcl() {
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x1 = random(5, 4, &mut rng);
            let x2 = random(5, 3, &mut rng);
            let h1 = ProjectionHead::init(4, 6, 2, &mut rng);
            let h2 = ProjectionHead::init(3, 6, 2, &mut rng);
            let c1 = h1.forward_cached(&x1).unwrap();
            let c2 = h2.forward_cached(&x2).unwrap();
            let (_, g1, g2) = adcl_loss(&c1.output, &c2.output, 0.1).unwrap();
            let mut grad = h1.backward(&x1, &c1, &g1).unwrap().pack();
            grad.extend(h2.backward(&x2, &c2, &g2).unwrap().pack());
            let mut theta = h1.pack();
            theta.extend(h2.pack());
            let split = h1.param_count();
            let loss = |p: &[f64]| {
                let (mut a, mut b) = (h1.clone(), h2.clone());
                a.unpack(&p[..split]);
                b.unpack(&p[split..]);
                adcl_loss(&a.forward(&x1).unwrap(), &b.forward(&x2).unwrap(), 0.1).unwrap().0
            };
            let err = grad_check(loss, &theta, &grad, 1e-4);
            assert!(err < 1e-4, "seed {seed}: {err}");
        }
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert!("mean".parse::<Variant>().is_err());
        assert_eq!("dcl".parse::<ContrastiveLoss>().unwrap(), ContrastiveLoss::Dcl);
    }

    #[test]
    fn alignment_of_identity_pairs() {
        let (pos, neg) = alignment(&Matrix::identity(3), &Matrix::identity(3));
        assert_eq!((pos, neg), (1.0, 0.0));
    }
}
