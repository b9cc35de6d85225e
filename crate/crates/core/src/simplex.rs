//! Euclidean projection onto the probability simplex.

use crate::scalar::Real;

/// `argmin_{λ ∈ Δ} ‖λ − v‖₂` by the sorted-threshold rule: find the largest
/// `k` with `u_k − (Σ_{j≤k} u_j − 1)/k > 0` over the descending sort `u`,
/// then clip `v − θ` at zero.
pub fn project_to_simplex<T: Real>(v: &[T]) -> Vec<T> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite weights"));
    let mut cumulative = T::zero();
    let mut theta = T::zero();
    for (k, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let candidate = (cumulative - T::one()) / T::from_usize(k + 1).unwrap();
        if u - candidate > T::zero() {
            theta = candidate;
        }
    }
    v.iter().map(|&x| (x - theta).max(T::zero())).collect()
}
