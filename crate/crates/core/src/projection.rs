//! Linear → ReLU → Linear → L2-normalize projection head.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::data::Checkpoint;
use crate::error::{Error, Result};
use crate::math::{dot, AdamState};
use crate::scalar::DEGENERATE_NORM;
use crate::Matrix;

/// Maps input rows into a unit-norm target space. Weights are stored
/// input-major: `out = x · W + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionHead {
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
}

/// Intermediate activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct HeadCache {
    pre: Matrix,
    hidden: Matrix,
    norms: Vec<f64>,
    pub output: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadGrads {
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
}

fn uniform(rows: usize, cols: usize, bound: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..rows * cols).map(|_| rng.random_range(-bound..bound)).collect()
}

impl ProjectionHead {
    /// Weights and biases uniform in ±1/√fan_in.
    pub fn init(in_dim: usize, hidden: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let b_in = 1.0 / (in_dim as f64).sqrt();
        let b_hid = 1.0 / (hidden as f64).sqrt();
        Self {
            w1: Matrix::new(in_dim, hidden, uniform(in_dim, hidden, b_in, rng)).unwrap(),
            b1: uniform(1, hidden, b_in, rng),
            w2: Matrix::new(hidden, out_dim, uniform(hidden, out_dim, b_hid, rng)).unwrap(),
            b2: uniform(1, out_dim, b_hid, rng),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.w2.cols()
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.forward_cached(x)?.output)
    }

    pub fn forward_cached(&self, x: &Matrix) -> Result<HeadCache> {
        if x.cols() != self.in_dim() {
            return Err(Error::DimensionMismatch {
                context: "projection head input",
                expected: self.in_dim(),
                actual: x.cols(),
            });
        }
        let mut pre = x.matmul(&self.w1)?;
        add_bias(&mut pre, &self.b1);
        let hidden = pre.map(|v| v.max(0.0));
        let mut output = hidden.matmul(&self.w2)?;
        add_bias(&mut output, &self.b2);
        let mut norms = Vec::with_capacity(output.rows());
        for r in 0..output.rows() {
            norms.push(crate::math::normalize_in_place(output.row_mut(r)));
        }
        Ok(HeadCache {
            pre,
            hidden,
            norms,
            output,
        })
    }

    /// Parameter gradients given the upstream gradient on the normalized output.
    pub fn backward(&self, x: &Matrix, cache: &HeadCache, d_out: &Matrix) -> Result<HeadGrads> {
        let mut d_lin = d_out.clone();
        for r in 0..d_lin.rows() {
            let y = cache.output.row(r);
            let n = cache.norms[r];
            let g = d_lin.row_mut(r);
            if n < DEGENERATE_NORM {
                g.iter_mut().for_each(|v| *v = 0.0);
                continue;
            }
            let proj = dot(y, g);
            for (gv, &yv) in g.iter_mut().zip(y) {
                *gv = (*gv - yv * proj) / n;
            }
        }
        let w2 = cache.hidden.transpose_matmul(&d_lin)?;
        let b2 = column_sums(&d_lin);
        let mut d_pre = d_lin.matmul_transposed(&self.w2)?;
        for (g, &p) in d_pre.as_mut_slice().iter_mut().zip(cache.pre.as_slice()) {
            if p <= 0.0 {
                *g = 0.0;
            }
        }
        let w1 = x.transpose_matmul(&d_pre)?;
        let b1 = column_sums(&d_pre);
        Ok(HeadGrads { w1, b1, w2, b2 })
    }

    pub fn param_count(&self) -> usize {
        self.w1.as_slice().len() + self.b1.len() + self.w2.as_slice().len() + self.b2.len()
    }

    /// Parameters flattened in the order w1, b1, w2, b2.
    pub fn pack(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.param_count());
        v.extend_from_slice(self.w1.as_slice());
        v.extend_from_slice(&self.b1);
        v.extend_from_slice(self.w2.as_slice());
        v.extend_from_slice(&self.b2);
        v
    }

    pub fn unpack(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_count());
        let mut rest = flat;
        for dst in [
            self.w1.as_mut_slice(),
            &mut self.b1[..],
            self.w2.as_mut_slice(),
            &mut self.b2[..],
        ] {
            let (head, tail) = rest.split_at(dst.len());
            dst.copy_from_slice(head);
            rest = tail;
        }
    }

    pub fn save(&self, prefix: &str, ckpt: &mut Checkpoint) {
        ckpt.insert(&format!("{prefix}.w1"), self.w1.clone());
        ckpt.insert(&format!("{prefix}.b1"), row_matrix(&self.b1));
        ckpt.insert(&format!("{prefix}.w2"), self.w2.clone());
        ckpt.insert(&format!("{prefix}.b2"), row_matrix(&self.b2));
    }

    pub fn load(prefix: &str, ckpt: &Checkpoint) -> Result<Self> {
        let head = Self {
            w1: ckpt.tensor(&format!("{prefix}.w1"))?.clone(),
            b1: ckpt.tensor(&format!("{prefix}.b1"))?.row(0).to_vec(),
            w2: ckpt.tensor(&format!("{prefix}.w2"))?.clone(),
            b2: ckpt.tensor(&format!("{prefix}.b2"))?.row(0).to_vec(),
        };
        if head.b1.len() != head.w1.cols() || head.w2.rows() != head.w1.cols() || head.b2.len() != head.w2.cols() {
            return Err(Error::Checkpoint(format!("inconsistent shapes in head `{prefix}`")));
        }
        Ok(head)
    }
}

impl HeadGrads {
    pub fn pack(&self) -> Vec<f64> {
        let mut v = Vec::new();
        v.extend_from_slice(self.w1.as_slice());
        v.extend_from_slice(&self.b1);
        v.extend_from_slice(self.w2.as_slice());
        v.extend_from_slice(&self.b2);
        v
    }
}

pub(crate) fn row_matrix(v: &[f64]) -> Matrix {
    Matrix::new(1, v.len(), v.to_vec()).expect("finite parameters")
}

pub(crate) fn add_bias(m: &mut Matrix, b: &[f64]) {
    for r in 0..m.rows() {
        m.row_mut(r).iter_mut().zip(b).for_each(|(x, &bv)| *x += bv);
    }
}

fn column_sums(m: &Matrix) -> Vec<f64> {
    let mut s = vec![0.0; m.cols()];
    for row in m.row_iter() {
        s.iter_mut().zip(row).for_each(|(a, &v)| *a += v);
    }
    s
}

/// One Adam state per head tensor.
#[derive(Debug, Clone)]
pub struct HeadOptimizer {
    states: [AdamState<f64>; 4],
}

impl HeadOptimizer {
    pub fn new(head: &ProjectionHead, lr: f64) -> Self {
        Self {
            states: [
                AdamState::new(head.w1.as_slice().len(), lr),
                AdamState::new(head.b1.len(), lr),
                AdamState::new(head.w2.as_slice().len(), lr),
                AdamState::new(head.b2.len(), lr),
            ],
        }
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.states.iter_mut().for_each(|s| s.lr = lr);
    }

    pub fn step(&mut self, head: &mut ProjectionHead, grads: &HeadGrads) -> Result<()> {
        let [s1, s2, s3, s4] = &mut self.states;
        s1.step(head.w1.as_mut_slice(), grads.w1.as_slice())?;
        s2.step(&mut head.b1, &grads.b1)?;
        s3.step(head.w2.as_mut_slice(), grads.w2.as_slice())?;
        s4.step(&mut head.b2, &grads.b2)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{grad_check, norm};
    use rand::SeedableRng;

    fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
        Matrix::new(rows, cols, uniform(rows, cols, 1.0, rng)).unwrap()
    }

    #[test]
    fn outputs_are_unit_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let head = ProjectionHead::init(5, 7, 4, &mut rng);
        let y = head.forward(&random_matrix(9, 5, &mut rng)).unwrap();
        for row in y.row_iter() {
            assert!((norm(row) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_weights_emit_bias_direction() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut head = ProjectionHead::init(3, 3, 3, &mut rng);
        head.unpack(&vec![0.0; head.param_count()]);
        head.b2 = vec![1.0, 0.0, 0.0];
        let y = head.forward(&random_matrix(4, 3, &mut rng)).unwrap();
        for row in y.row_iter() {
            assert_eq!(row, &[1.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let head = ProjectionHead::init(4, 5, 3, &mut rng);
            let x = random_matrix(6, 4, &mut rng);
            let target = random_matrix(6, 3, &mut rng);
            // loss = <target, head(x)>
            let loss = |p: &[f64]| {
                let mut h = head.clone();
                h.unpack(p);
                let y = h.forward(&x).unwrap();
                y.as_slice().iter().zip(target.as_slice()).map(|(a, b)| a * b).sum::<f64>()
            };
            let cache = head.forward_cached(&x).unwrap();
            let grads = head.backward(&x, &cache, &target).unwrap();
            let err = grad_check(loss, &head.pack(), &grads.pack(), 1e-4);
            assert!(err < 1e-4, "seed {seed}: {err}");
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let head = ProjectionHead::init(2, 3, 2, &mut rng);
        let mut c = Checkpoint::new();
        head.save("h", &mut c);
        let back = ProjectionHead::load("h", &Checkpoint::from_bytes(&c.to_bytes().unwrap()).unwrap()).unwrap();
        for (a, b) in back.pack().iter().zip(head.pack()) {
            assert_eq!(*a, f64::from(b as f32));
        }
    }
}
