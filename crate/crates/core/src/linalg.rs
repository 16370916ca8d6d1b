//! Dense least squares via Householder QR.

use crate::{Error, Result};

/// Columns whose reduced diagonal falls below this fraction of the largest
/// column norm are treated as linearly dependent.
const RANK_TOL: f64 = 1e-10;

/// Solves `min ||A x - y||` for a row-major `rows x cols` matrix `A`.
pub(crate) fn least_squares(a: &[f64], rows: usize, cols: usize, y: &[f64]) -> Result<Vec<f64>> {
    debug_assert_eq!(a.len(), rows * cols);
    debug_assert_eq!(y.len(), rows);
    if rows < cols {
        return Err(Error::RankDeficient(format!(
            "{rows} observations for {cols} unknowns"
        )));
    }
    // Column-major working copy.
    let mut q: Vec<Vec<f64>> = (0..cols)
        .map(|j| (0..rows).map(|i| a[i * cols + j]).collect())
        .collect();
    let mut rhs = y.to_vec();
    let max_norm = q
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    if max_norm == 0.0 {
        return Err(Error::RankDeficient("all-zero design matrix".into()));
    }

    let mut diag = vec![0.0; cols];
    for k in 0..cols {
        let norm = q[k][k..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm <= RANK_TOL * max_norm {
            return Err(Error::RankDeficient(format!(
                "column {k} is (numerically) a combination of earlier columns"
            )));
        }
        let alpha = if q[k][k] > 0.0 { -norm } else { norm };
        // v = x - alpha e1, stored in place of column k.
        q[k][k] -= alpha;
        let vnorm2 = q[k][k..].iter().map(|v| v * v).sum::<f64>();
        let (head, tail) = q.split_at_mut(k + 1);
        let v = &head[k][k..];
        for col in tail.iter_mut() {
            let dot: f64 = v.iter().zip(&col[k..]).map(|(a, b)| a * b).sum();
            let f = 2.0 * dot / vnorm2;
            for (c, vi) in col[k..].iter_mut().zip(v) {
                *c -= f * vi;
            }
        }
        let dot: f64 = v.iter().zip(&rhs[k..]).map(|(a, b)| a * b).sum();
        let f = 2.0 * dot / vnorm2;
        for (r, vi) in rhs[k..].iter_mut().zip(v) {
            *r -= f * vi;
        }
        diag[k] = alpha;
    }

    // Back substitution on R (upper triangle lives above the diagonal of q).
    let mut x = vec![0.0; cols];
    for k in (0..cols).rev() {
        let mut s = rhs[k];
        for (j, xj) in x.iter().enumerate().skip(k + 1) {
            s -= q[j][k] * xj;
        }
        x[k] = s / diag[k];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        // y = 2x + 3
        let a = [1.0, 1.0, 2.0, 1.0, 3.0, 1.0];
        let x = least_squares(&a, 3, 2, &[5.0, 7.0, 9.0]).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-12 && (x[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn overdetermined_mean() {
        let a = [1.0, 1.0, 1.0, 1.0];
        let x = least_squares(&a, 4, 1, &[1.0, 2.0, 3.0, 6.0]).unwrap();
        assert!((x[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn duplicate_columns_are_rank_deficient() {
        let a = [1.0, 1.0, 2.0, 2.0, 3.0, 3.0];
        assert!(matches!(
            least_squares(&a, 3, 2, &[1.0, 2.0, 3.0]),
            Err(Error::RankDeficient(_))
        ));
    }

    #[test]
    fn too_few_rows() {
        assert!(least_squares(&[1.0, 2.0], 1, 2, &[1.0]).is_err());
    }
}
