//! Quantiles by linear interpolation between order statistics
//! (Hyndman & Fan type 7, the default in R and NumPy).

/// Quantile `p` of data that is already sorted ascending.
///
/// `h = (n - 1) p`; the result interpolates between `sorted[floor(h)]` and
/// the next order statistic.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    assert!((0.0..=1.0).contains(&p));
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = h - lo as f64;
    if frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

/// Copies and sorts with a total order (NaNs last).
pub fn sorted_copy(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Sum in ascending order, so the result does not depend on input order.
pub fn order_independent_sum(values: &[f64]) -> f64 {
    sorted_copy(values).iter().sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_quartiles() {
        let data = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile_sorted(&data, 0.25), 2.0);
        assert_eq!(quantile_sorted(&data, 0.5), 3.0);
        assert_eq!(quantile_sorted(&data, 0.75), 4.0);
    }

    #[test]
    fn interpolates_between_order_statistics() {
        // n = 4: h(0.25) = 0.75, h(0.75) = 2.25
        let data = [10.0, 20.0, 30.0, 40.0];
        assert!((quantile_sorted(&data, 0.25) - 17.5).abs() < 1e-12);
        assert!((quantile_sorted(&data, 0.75) - 32.5).abs() < 1e-12);
        assert_eq!(quantile_sorted(&data, 0.0), 10.0);
        assert_eq!(quantile_sorted(&data, 1.0), 40.0);
    }

    #[test]
    fn sum_ignores_order() {
        let a = [0.1, 1e16, -1e16, 0.3, 0.2];
        let b = [0.2, -1e16, 0.3, 1e16, 0.1];
        assert_eq!(order_independent_sum(&a).to_bits(), order_independent_sum(&b).to_bits());
    }
}
