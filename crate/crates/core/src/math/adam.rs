use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Adam optimizer state for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub first_moment: Vec<T>,
    pub second_moment: Vec<T>,
    pub step_count: u64,
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub epsilon: T,
}

impl<T: Scalar> AdamState<T> {
    /// Fresh state with the usual defaults (β1 = 0.9, β2 = 0.999, ε = 1e-8).
    pub fn new(len: usize, lr: T) -> Self {
        Self {
            first_moment: vec![T::zero(); len],
            second_moment: vec![T::zero(); len],
            step_count: 0,
            lr,
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            epsilon: T::lit(1e-8),
        }
    }

    pub fn len(&self) -> usize {
        self.first_moment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.first_moment.is_empty()
    }

    pub fn step(&mut self, params: &mut [T], grads: &[T]) -> Result<()> {
        adam_step(params, grads, self)
    }
}

/// One bias-corrected Adam update. Parameters are left untouched if any
/// gradient entry is non-finite.
pub fn adam_step<T: Scalar>(params: &mut [T], grads: &[T], state: &mut AdamState<T>) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.len() {
        return Err(Error::DimensionMismatch {
            context: "adam_step",
            expected: state.len(),
            actual: if params.len() != state.len() {
                params.len()
            } else {
                grads.len()
            },
        });
    }
    if let Some(pos) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite {
            context: format!("adam_step gradient entry {pos}"),
        });
    }
    let one = T::one();
    if !(state.beta1 > T::zero() && state.beta1 < one && state.beta2 > T::zero() && state.beta2 < one) {
        return Err(Error::InvalidConfig("adam betas must lie in (0, 1)".into()));
    }

    state.step_count += 1;
    let t = state.step_count as i32;
    let bias1 = one - state.beta1.powi(t);
    let bias2 = one - state.beta2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        let m = state.beta1 * state.first_moment[i] + (one - state.beta1) * g;
        let v = state.beta2 * state.second_moment[i] + (one - state.beta2) * g * g;
        state.first_moment[i] = m;
        state.second_moment[i] = v;
        let m_hat = m / bias1;
        let v_hat = v / bias2;
        params[i] = params[i] - state.lr * m_hat / (v_hat.sqrt() + state.epsilon);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = vec![0.5_f64, -1.0, 2.0];
        let mut s = AdamState::new(3, 1e-3);
        adam_step(&mut p, &[0.0; 3], &mut s).unwrap();
        assert_eq!(p, vec![0.5, -1.0, 2.0]);
        assert_eq!(s.step_count, 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = vec![0.0_f64];
        let mut s = AdamState::new(1, 1e-3);
        adam_step(&mut p, &[1.0], &mut s).unwrap();
        // m̂ = v̂ = 1, so the update is lr / (1 + ε)
        assert!((p[0] + 1e-3 / (1.0 + 1e-8)).abs() < 1e-18);
        assert!((p[0] + 0.001).abs() < 1e-10);
    }

    #[test]
    fn identical_coordinates_update_identically() {
        let mut p = vec![0.3_f64, 0.3];
        let mut s = AdamState::new(2, 1e-2);
        for _ in 0..5 {
            adam_step(&mut p, &[0.7, 0.7], &mut s).unwrap();
        }
        assert_eq!(p[0].to_bits(), p[1].to_bits());
    }

    #[test]
    fn deterministic_bitwise() {
        let run = || {
            let mut p = vec![0.1_f64, -0.2, 0.3];
            let mut s = AdamState::new(3, 1e-3);
            for k in 0..10 {
                let g: Vec<f64> = p.iter().map(|x| x * 2.0 + k as f64 * 0.01).collect();
                adam_step(&mut p, &g, &mut s).unwrap();
            }
            p.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn rejects_non_finite_and_mismatch() {
        let mut p = vec![1.0_f64, 2.0];
        let mut s = AdamState::new(2, 1e-3);
        assert!(matches!(
            adam_step(&mut p, &[f64::NAN, 0.0], &mut s),
            Err(Error::NonFinite { .. })
        ));
        assert_eq!(p, vec![1.0, 2.0]);
        assert_eq!(s.step_count, 0);
        assert!(adam_step(&mut p, &[0.0], &mut s).is_err());
    }

    #[test]
    fn single_precision_step() {
        let mut p = vec![0.0f32];
        let mut s = AdamState::new(1, 1e-3f32);
        s.step(&mut p, &[1.0]).unwrap();
        assert!((p[0] + 0.001).abs() < 1e-7);
    }
}
