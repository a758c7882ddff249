//! Dense least squares via Householder QR.
//!
//! Columns are processed left to right. A column whose component orthogonal
//! to the previously accepted columns is negligible is dropped, so callers
//! get a full-rank fit plus the list of redundant regressors.

use crate::error::{Error, Result};

const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct LstsqFit {
    /// One coefficient per input column; `None` for dropped columns.
    pub coef: Vec<Option<f64>>,
    pub dropped: Vec<usize>,
    pub residuals: Vec<f64>,
}

/// Minimises `||y - X b||` where `columns` are the columns of `X`.
pub fn lstsq(columns: &[Vec<f64>], y: &[f64]) -> Result<LstsqFit> {
    let n = y.len();
    if columns.iter().any(|c| c.len() != n) {
        return Err(Error::InvalidInput("design columns and response differ in length".into()));
    }
    let mut a: Vec<Vec<f64>> = columns.to_vec();
    let mut qty = y.to_vec();
    let mut kept: Vec<usize> = Vec::new();
    let mut dropped = Vec::new();
    let mut rank = 0;

    for j in 0..a.len() {
        let scale = norm(&columns[j]);
        let tail = norm(&a[j][rank..]);
        if rank >= n || tail <= RANK_TOL * scale.max(f64::MIN_POSITIVE) || tail == 0.0 {
            dropped.push(j);
            continue;
        }
        // Householder vector v = x + sign(x0)|x| e0, stored in place of the column tail.
        let x0 = a[j][rank];
        let alpha = if x0 >= 0.0 { -tail } else { tail };
        let mut v: Vec<f64> = a[j][rank..].to_vec();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|t| t * t).sum();
        let reflect = |col: &mut [f64]| {
            let dot: f64 = v.iter().zip(col.iter()).map(|(p, q)| p * q).sum();
            let f = 2.0 * dot / vnorm2;
            for (c, vi) in col.iter_mut().zip(&v) {
                *c -= f * vi;
            }
        };
        if vnorm2 > 0.0 {
            for col in a.iter_mut().skip(j + 1) {
                reflect(&mut col[rank..]);
            }
            reflect(&mut qty[rank..]);
        }
        a[j][rank] = alpha;
        for t in a[j][rank + 1..].iter_mut() {
            *t = 0.0;
        }
        kept.push(j);
        rank += 1;
    }

    // Back substitution on the kept columns: R b = Q'y restricted to the first `rank` rows.
    let mut b = vec![0.0; rank];
    for i in (0..rank).rev() {
        let mut s = qty[i];
        for k in i + 1..rank {
            s -= a[kept[k]][i] * b[k];
        }
        b[i] = s / a[kept[i]][i];
    }

    let mut coef = vec![None; columns.len()];
    for (k, &j) in kept.iter().enumerate() {
        coef[j] = Some(b[k]);
    }
    let residuals = (0..n)
        .map(|i| y[i] - kept.iter().enumerate().map(|(k, &j)| columns[j][i] * b[k]).sum::<f64>())
        .collect();
    Ok(LstsqFit { coef, dropped, residuals })
}

/// Euclidean norm with scaling to avoid overflow.
pub fn norm(x: &[f64]) -> f64 {
    let m = x.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    if m == 0.0 || !m.is_finite() {
        return m;
    }
    m * x.iter().map(|v| (v / m).powi(2)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_fit() {
        let ones = vec![1.0; 4];
        let x = vec![0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 + 3.0 * v).collect();
        let fit = lstsq(&[ones, x], &y).unwrap();
        assert!((fit.coef[0].unwrap() - 2.0).abs() < 1e-12);
        assert!((fit.coef[1].unwrap() - 3.0).abs() < 1e-12);
        assert!(fit.residuals.iter().all(|r| r.abs() < 1e-12));
    }

    #[test]
    fn drops_collinear_column() {
        let ones = vec![1.0; 4];
        let a = vec![1.0, 1.0, 0.0, 0.0];
        let b = vec![0.0, 0.0, 1.0, 1.0]; // ones - a
        let y = vec![1.0, 2.0, 3.0, 5.0];
        let fit = lstsq(&[ones, a, b], &y).unwrap();
        assert_eq!(fit.dropped, vec![2]);
        // intercept = mean of second group, a coefficient = difference of group means
        assert!((fit.coef[0].unwrap() - 4.0).abs() < 1e-12);
        assert!((fit.coef[1].unwrap() + 2.5).abs() < 1e-12);
    }

    #[test]
    fn least_squares_matches_normal_equations() {
        let x = vec![1.0, 2.0, 4.0, 7.0, 11.0];
        let y = vec![0.5, 1.7, 2.9, 5.1, 6.0];
        let fit = lstsq(std::slice::from_ref(&x), &y).unwrap();
        let expected = x.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>() / x.iter().map(|a| a * a).sum::<f64>();
        assert!((fit.coef[0].unwrap() - expected).abs() < 1e-13);
    }
}
