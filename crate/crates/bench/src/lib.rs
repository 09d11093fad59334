//! Shared fixtures for the throughput benches.

/// Deterministic `k`-sparse signal of length `n` with spread-out support.
pub fn sparse_signal(n: usize, k: usize) -> Vec<f64> {
    let mut x = vec![0.0; n];
    let stride = (n / k.max(1)).max(1);
    for j in 0..k.min(n) {
        x[(j * stride + j * 7) % n] = if j % 2 == 0 { 1.0 + j as f64 * 0.1 } else { -0.5 - j as f64 * 0.05 };
    }
    x
}

#[cfg(test)]
mod tests {
    #[test]
    fn support_size() {
        let x = super::sparse_signal(1024, 10);
        assert_eq!(x.iter().filter(|v| **v != 0.0).count(), 10);
    }
}
