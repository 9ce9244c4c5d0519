//! Benchmark for frozen pretrained audio representations used as content
//! inputs to hybrid music recommenders.
//!
//! The numeric kernels in [`math`] are generic over [`Scalar`]; models and
//! training run in double precision through the aliases below.

pub mod bimodal;
pub mod data;
pub mod elsa;
pub mod error;
pub mod hybrid;
pub mod eval;
pub mod knn;
pub mod math;
pub mod projection;
pub mod scalar;
pub mod scoring;
pub mod shallow;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Double-precision dense matrix used by every model.
pub type Matrix = math::DenseMatrix<f64>;
/// Single-precision matrix, the storage width of embedding files.
pub type MatrixF32 = math::DenseMatrix<f32>;
/// Ranked list with double-precision scores.
pub type Ranking = math::ScoredList<f64>;
