//! Synthetic listening logs with planted latent structure.
//!
//! Users and items get unit-Gaussian latent vectors. Item popularity is a
//! shared taste direction: `b_i = popularity_sigma · (z_i · v)` for a random
//! unit latent vector `v`. Each user draws events from a softmax over
//! `taste_scale · w_u · z_i / sqrt(latent_dim) + b_i`.
//!
//! The embedding table is an orthonormal lift of the item latents plus
//! isotropic noise and a shared offset vector of length `offset_norm`. Raw
//! cosine between rows is dominated by the offset; a learned affine map can
//! remove it. A shuffled table destroys the item correspondence either way.

use rand::distr::weighted::WeightedIndex;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{EmbeddingTable, InteractionLog, DAY, EVAL_WINDOW};
use crate::error::{Error, Result};
use crate::math::{dot, normalize_in_place};
use crate::Matrix;

/// 2018-01-01T00:00:00Z.
pub const DEFAULT_START: i64 = 1_514_764_800;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_users: usize,
    pub n_items: usize,
    pub latent_dim: usize,
    pub embed_dim: usize,
    pub events_per_user: usize,
    pub noise_sigma: f64,
    /// Length of the offset shared by every embedding row.
    pub offset_norm: f64,
    /// Sharpness of each user's preference over item latents.
    pub taste_scale: f64,
    /// Scale of the popularity logit along the shared taste direction.
    pub popularity_sigma: f64,
    pub cold_fraction: f64,
    /// Seconds covered by the log; cold items live in its final month.
    pub timespan: i64,
    pub start: i64,
    pub seed: u64,
    /// Use the identity (padded) map instead of a random orthonormal one.
    pub identity_projection: bool,
    pub label: String,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_users: 500,
            n_items: 2000,
            latent_dim: 8,
            embed_dim: 32,
            events_per_user: 80,
            noise_sigma: 0.5,
            offset_norm: 8.0,
            taste_scale: 2.0,
            popularity_sigma: 1.25,
            cold_fraction: 0.05,
            timespan: 120 * DAY,
            start: DEFAULT_START,
            seed: 0,
            identity_projection: false,
            label: "synth".into(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidConfig(m));
        if self.n_users == 0 || self.n_items == 0 || self.latent_dim == 0 {
            return fail("users, items and latent_dim must be positive".into());
        }
        if self.embed_dim < self.latent_dim {
            return fail(format!(
                "embed_dim {} smaller than latent_dim {}",
                self.embed_dim, self.latent_dim
            ));
        }
        if self.events_per_user == 0 {
            return fail("events_per_user must be at least 1".into());
        }
        if self.n_items < self.events_per_user {
            return fail(format!(
                "n_items {} smaller than events_per_user {}",
                self.n_items, self.events_per_user
            ));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return fail("noise_sigma must be finite and non-negative".into());
        }
        if !(self.offset_norm >= 0.0 && self.offset_norm.is_finite()) {
            return fail("offset_norm must be finite and non-negative".into());
        }
        if !(self.taste_scale >= 0.0 && self.taste_scale.is_finite()) {
            return fail("taste_scale must be finite and non-negative".into());
        }
        if !(self.popularity_sigma >= 0.0 && self.popularity_sigma.is_finite()) {
            return fail("popularity_sigma must be finite and non-negative".into());
        }
        if !(0.0..1.0).contains(&self.cold_fraction) {
            return fail("cold_fraction must lie in [0, 1)".into());
        }
        if self.timespan <= EVAL_WINDOW {
            return fail("timespan must exceed the one-month evaluation window".into());
        }
        Ok(())
    }

    pub fn item_id(i: usize) -> String {
        format!("i{i:05}")
    }

    pub fn user_id(u: usize) -> String {
        format!("u{u:04}")
    }
}

/// The planted quantities behind a generated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub user_latents: Matrix,
    pub item_latents: Matrix,
    pub popularity: Vec<f64>,
    pub popularity_direction: Vec<f64>,
    /// Column-orthonormal `embed_dim × latent_dim` map.
    pub projection: Matrix,
    /// Generator item indices whose events were confined to the final month.
    pub cold_items: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub log: InteractionLog,
    pub table: EmbeddingTable,
    pub truth: GroundTruth,
}

fn gaussian_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    Matrix::new(rows, cols, data).expect("gaussian entries are finite")
}

/// Column-orthonormal map via modified Gram-Schmidt on a Gaussian matrix.
fn orthonormal_columns(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    loop {
        // work on the transpose so each column is a contiguous row
        let mut t = gaussian_matrix(cols, rows, rng);
        let mut ok = true;
        for c in 0..cols {
            for prev in 0..c {
                let (head, tail) = t.as_mut_slice().split_at_mut(c * rows);
                let p = &head[prev * rows..(prev + 1) * rows];
                let v = &mut tail[..rows];
                let proj = dot(p, v);
                v.iter_mut().zip(p).for_each(|(x, &q)| *x -= proj * q);
            }
            if normalize_in_place(t.row_mut(c)) < 1e-8 {
                ok = false;
                break;
            }
        }
        if ok {
            return t.transpose();
        }
    }
}

fn identity_columns(rows: usize, cols: usize) -> Matrix {
    let mut m = Matrix::zeros(rows, cols);
    for c in 0..cols {
        m.set(c, c, 1.0);
    }
    m
}

pub fn generate(config: &SynthConfig) -> Result<SynthData> {
    config.validate()?;
    let stream = |k: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(k);
        rng
    };
    let (n_users, n_items, latent, embed) = (config.n_users, config.n_items, config.latent_dim, config.embed_dim);

    let mut latent_rng = stream(1);
    let item_latents = gaussian_matrix(n_items, latent, &mut latent_rng);
    let user_latents = gaussian_matrix(n_users, latent, &mut latent_rng);
    let projection = if config.identity_projection {
        identity_columns(embed, latent)
    } else {
        orthonormal_columns(embed, latent, &mut stream(2))
    };

    let n_cold = (config.cold_fraction * n_items as f64).round() as usize;
    let mut order: Vec<usize> = (0..n_items).collect();
    order.shuffle(&mut stream(3));
    let mut cold_items = order[..n_cold].to_vec();
    cold_items.sort_unstable();
    let mut is_cold = vec![false; n_items];
    for &i in &cold_items {
        is_cold[i] = true;
    }

    let mut pop_rng = stream(6);
    let mut direction: Vec<f64> = (0..latent).map(|_| pop_rng.sample::<f64, _>(StandardNormal)).collect();
    normalize_in_place(&mut direction);
    let popularity: Vec<f64> = (0..n_items)
        .map(|i| config.popularity_sigma * dot(item_latents.row(i), &direction))
        .collect();
    let scale = config.taste_scale / (latent as f64).sqrt();
    let final_month_start = config.timespan - EVAL_WINDOW;
    let mut event_rng = stream(4);
    let mut events: Vec<(i64, usize, usize)> = Vec::with_capacity(n_users * config.events_per_user);
    let mut logits = vec![0.0; n_items];
    for u in 0..n_users {
        let w = user_latents.row(u);
        for (i, l) in logits.iter_mut().enumerate() {
            *l = dot(w, item_latents.row(i)) * scale + popularity[i];
        }
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let dist = WeightedIndex::new(&weights)
            .map_err(|e| Error::InvalidConfig(format!("softmax weights: {e}")))?;
        for _ in 0..config.events_per_user {
            let item = dist.sample(&mut event_rng);
            let offset = if is_cold[item] {
                final_month_start + event_rng.random_range(0..EVAL_WINDOW)
            } else {
                event_rng.random_range(0..config.timespan)
            };
            events.push((config.start + offset, u, item));
        }
    }
    events.sort_unstable();

    let mut log = InteractionLog::new();
    for &(ts, u, i) in &events {
        log.push(&SynthConfig::user_id(u), &SynthConfig::item_id(i), ts)?;
    }

    let mut noise_rng = stream(5);
    let mut rows = item_latents.matmul_transposed(&projection)?;
    if config.noise_sigma > 0.0 {
        for v in rows.as_mut_slice() {
            *v += config.noise_sigma * noise_rng.sample::<f64, _>(StandardNormal);
        }
    }
    let mut offset_rng = stream(7);
    let mut offset: Vec<f64> = (0..embed).map(|_| offset_rng.sample::<f64, _>(StandardNormal)).collect();
    normalize_in_place(&mut offset);
    for r in 0..n_items {
        rows.row_mut(r).iter_mut().zip(&offset).for_each(|(v, o)| *v += config.offset_norm * o);
    }
    let ids = (0..n_items).map(SynthConfig::item_id).collect();
    let table = EmbeddingTable::new(config.label.clone(), ids, rows)?;

    Ok(SynthData {
        log,
        table,
        truth: GroundTruth {
            user_latents,
            item_latents,
            popularity,
            popularity_direction: direction,
            projection,
            cold_items,
        },
    })
}
