//! Small numeric helpers shared across the crate.

/// Floor applied to probabilities before taking a logarithm. Policies are
/// interior by construction, so the floor only guards against denormal
/// underflow in long products.
pub const LOG_FLOOR: f64 = 1e-300;

/// Natural log with the probability floor applied.
pub fn log_floored(p: f64) -> f64 {
    p.max(LOG_FLOOR).ln()
}

/// log(sum(exp(xs))) with max subtraction.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let s: f64 = xs.iter().map(|&x| (x - m).exp()).sum();
    m + s.ln()
}

/// Stable softmax; strictly positive for finite input.
pub fn softmax_slice(xs: &[f64]) -> Vec<f64> {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = xs.iter().map(|&x| (x - m).exp()).collect();
    let s: f64 = out.iter().sum();
    for v in &mut out {
        *v /= s;
    }
    out
}

/// log softmax: xs - log_sum_exp(xs), computed in the log domain.
pub fn log_softmax_slice(xs: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(xs);
    xs.iter().map(|&x| x - lse).collect()
}

/// Maximum absolute difference between two equal-length slices.
pub fn sup_norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// L1 distance between two equal-length slices.
pub fn l1_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}
