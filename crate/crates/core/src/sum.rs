//! Deterministic pairwise summation.
//!
//! The reduction tree is fixed by the input length alone: slices of at most
//! [`LEAF`] values are summed left to right, longer slices are split at
//! `len / 2` and the two halves summed recursively. Any partitioning of the
//! work that follows the same tree gives bit-identical results.

pub const LEAF: usize = 8;

pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= LEAF {
        values.iter().fold(0.0, |acc, v| acc + v)
    } else {
        let mid = values.len() / 2;
        pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sums_small_and_large() {
        assert_eq!(pairwise_sum(&[]), 0.0);
        assert_eq!(pairwise_sum(&[1.0, 2.0, 3.0]), 6.0);
        let v: Vec<f64> = (1..=1000).map(f64::from).collect();
        assert_eq!(pairwise_sum(&v), 500_500.0);
    }

    #[test]
    fn less_drift_than_naive() {
        let v = vec![0.1; 1 << 16];
        let exact = 0.1 * (1 << 16) as f64;
        let naive: f64 = v.iter().sum();
        assert!((pairwise_sum(&v) - exact).abs() <= (naive - exact).abs());
    }
}
