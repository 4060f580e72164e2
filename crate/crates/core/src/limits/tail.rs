use crate::error::{Error, Result};

/// Hill estimate of the tail index from the `k` largest samples:
/// `(1/k sum_{i=1}^{k} ln(X_(n-i+1) / X_(n-k)))^-1`.
pub fn hill_estimator(samples: &[f64], k: usize) -> Result<f64> {
    let n = samples.len();
    if k == 0 || k >= n {
        return Err(Error::Domain(format!("need 0 < k < n, got k = {k}, n = {n}")));
    }
    if samples.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::Domain("Hill estimator needs positive samples".into()));
    }
    let mut sorted = samples.to_vec();
    // Only the top k+1 order statistics matter.
    let pivot = n - k - 1;
    sorted.select_nth_unstable_by(pivot, f64::total_cmp);
    let threshold = sorted[pivot];
    let mut top = sorted[pivot + 1..].to_vec();
    top.sort_by(f64::total_cmp);
    let mean = top.iter().map(|x| (x / threshold).ln()).sum::<f64>() / k as f64;
    Ok(1.0 / mean)
}
