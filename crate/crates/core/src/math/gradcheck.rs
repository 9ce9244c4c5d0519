use crate::scalar::Scalar;

/// Compares `analytic` against central finite differences of `loss` at
/// `theta` and returns the worst per-coordinate relative error.
///
/// The relative error for a coordinate is `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn grad_check<T, F>(mut loss: F, theta: &[T], analytic: &[T], probe_eps: T) -> T
where
    T: Scalar,
    F: FnMut(&[T]) -> T,
{
    assert_eq!(theta.len(), analytic.len(), "gradient length must match parameters");
    assert!(probe_eps > T::zero(), "probe_eps must be positive");
    let floor = T::lit(1e-8);
    let two = T::lit(2.0);
    let mut probe = theta.to_vec();
    let mut worst = T::zero();
    for i in 0..theta.len() {
        probe[i] = theta[i] + probe_eps;
        let up = loss(&probe);
        probe[i] = theta[i] - probe_eps;
        let down = loss(&probe);
        probe[i] = theta[i];
        let numeric = (up - down) / (two * probe_eps);
        let a = analytic[i];
        let denom = a.abs().max(numeric.abs()).max(floor);
        let rel = (a - numeric).abs() / denom;
        if rel > worst || rel.is_nan() {
            worst = rel;
        }
    }
    worst
}
