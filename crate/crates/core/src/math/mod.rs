//! Dense numeric primitives shared by every recommender.

mod adam;
mod gradcheck;
mod matrix;
mod topk;

pub use adam::{adam_step, AdamState};
pub use gradcheck::grad_check;
pub use matrix::{l2_normalize_rows, normalize_in_place, DenseMatrix};
pub use topk::{topk, ScoredList};

use crate::error::{Error, Result};
use crate::scalar::{Scalar, DEGENERATE_NORM};

#[inline]
pub fn dot<T: Scalar>(u: &[T], v: &[T]) -> T {
    u.iter().zip(v).fold(T::zero(), |acc, (&a, &b)| acc + a * b)
}

#[inline]
pub fn norm<T: Scalar>(v: &[T]) -> T {
    dot(v, v).sqrt()
}

/// Cosine similarity; zero when either vector is degenerate.
pub fn cosine<T: Scalar>(u: &[T], v: &[T]) -> Result<T> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            context: "cosine",
            expected: u.len(),
            actual: v.len(),
        });
    }
    if u.is_empty() {
        return Err(Error::EmptyInput("cosine of zero-length vectors"));
    }
    Ok(cosine_unchecked(u, v))
}

/// Cosine for callers that already guarantee equal, non-zero lengths.
#[inline]
pub(crate) fn cosine_unchecked<T: Scalar>(u: &[T], v: &[T]) -> T {
    let nu = norm(u);
    let nv = norm(v);
    let eps = T::lit(DEGENERATE_NORM);
    if nu < eps || nv < eps {
        return T::zero();
    }
    dot(u, v) / (nu * nv)
}

/// Gradient of `cosine(a, b)` with respect to `a`, given the cosine value.
/// Zero for degenerate inputs, matching the zero-score convention.
pub(crate) fn cosine_grad_wrt_first(a: &[f64], b: &[f64], cos: f64, out: &mut [f64], scale: f64) {
    let na = norm(a);
    let nb = norm(b);
    if na < DEGENERATE_NORM || nb < DEGENERATE_NORM {
        return;
    }
    let inv = 1.0 / (na * nb);
    let self_term = cos / (na * na);
    for ((o, &ai), &bi) in out.iter_mut().zip(a).zip(b) {
        *o += scale * (bi * inv - self_term * ai);
    }
}
