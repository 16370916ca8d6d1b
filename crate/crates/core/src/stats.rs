//! Small order statistics helpers.

/// Median of `values` (mean of the two middle elements for even counts).
/// Returns `None` for an empty slice.
pub(crate) fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    Some(if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    })
}

/// `(median, MAD)` where MAD is the raw median absolute deviation.
pub(crate) fn median_mad(values: &[f64]) -> Option<(f64, f64)> {
    let med = median(values)?;
    let deviations: Vec<f64> = values.iter().map(|v| (v - med).abs()).collect();
    Some((med, median(&deviations)?))
}

/// 1-based nearest rank `ceil(p * n / 100)`, clamped to `[1, n]`.
pub(crate) fn nearest_rank(p: f64, n: usize) -> usize {
    let rank = (p * n as f64 / 100.0).ceil() as usize;
    rank.clamp(1, n)
}

/// Population mean and standard deviation, accumulated in `f64`.
pub(crate) fn mean_std(values: &[f32]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().map(|&v| f64::from(v)).sum::<f64>() / n;
    let var = values
        .iter()
        .map(|&v| {
            let d = f64::from(v) - mean;
            d * d
        })
        .sum::<f64>()
        / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_odd_and_even() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }

    #[test]
    fn mad_of_symmetric_sample() {
        let (m, mad) = median_mad(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!(m, 3.0);
        assert_eq!(mad, 1.0);
    }

    #[test]
    fn nearest_rank_examples() {
        assert_eq!(nearest_rank(20.0, 10), 2);
        assert_eq!(nearest_rank(80.0, 10), 8);
        assert_eq!(nearest_rank(0.0, 10), 1);
        assert_eq!(nearest_rank(100.0, 10), 10);
        assert_eq!(nearest_rank(2.5, 100), 3);
    }

    #[test]
    fn population_std() {
        let (m, s) = mean_std(&[0.0, 2.0]);
        assert_eq!((m, s), (1.0, 1.0));
    }
}
