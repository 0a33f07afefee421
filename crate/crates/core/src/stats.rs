//! Sample moments, quantiles and a small least-squares helper.
//!
//! Covariances use the n-1 denominator throughout.

use nalgebra::{DMatrix, DVector};

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

pub fn covariance(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let n = x.len();
    if n < 2 {
        return 0.0;
    }
    let mx = mean(x);
    let my = mean(y);
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - mx) * (b - my))
        .sum::<f64>()
        / (n - 1) as f64
}

pub fn variance(x: &[f64]) -> f64 {
    covariance(x, x)
}

pub fn std_dev(x: &[f64]) -> f64 {
    variance(x).sqrt()
}

pub fn correlation(x: &[f64], y: &[f64]) -> f64 {
    covariance(x, y) / (variance(x) * variance(y)).sqrt()
}

/// Linear-interpolation quantile of already sorted data (Hyndman-Fan type 7).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn quantile(x: &[f64], p: f64) -> f64 {
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    quantile_sorted(&s, p)
}

/// Ordinary least squares fit.
#[derive(Debug, Clone)]
pub struct OlsFit {
    /// One coefficient per design column; dropped columns carry 0.
    pub coef: Vec<f64>,
    pub fitted: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Columns removed as (numerically) collinear with earlier columns.
    pub dropped: Vec<usize>,
    /// (X'X)^-1 restricted to the kept columns, embedded at full size.
    pub xtx_inv: DMatrix<f64>,
}

impl OlsFit {
    pub fn residual_variance(&self) -> f64 {
        let kept = self.coef.len() - self.dropped.len();
        let dof = self.residuals.len().saturating_sub(kept).max(1);
        self.residuals.iter().map(|r| r * r).sum::<f64>() / dof as f64
    }
}

/// Least squares of `y` on the columns of `x`, dropping columns whose
/// residual after projection on the columns already kept is below 1e-10 of
/// their norm.
pub fn ols(x: &DMatrix<f64>, y: &[f64]) -> OlsFit {
    let (n, k) = x.shape();
    assert_eq!(n, y.len());
    let mut kept: Vec<usize> = Vec::with_capacity(k);
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(k);
    let mut dropped = Vec::new();
    for j in 0..k {
        let col = x.column(j).into_owned();
        let norm = col.norm();
        let mut r = col.clone();
        for q in &basis {
            let d = q.dot(&r);
            r.axpy(-d, q, 1.0);
        }
        // second pass of Gram-Schmidt for stability
        for q in &basis {
            let d = q.dot(&r);
            r.axpy(-d, q, 1.0);
        }
        let rn = r.norm();
        if norm == 0.0 || rn <= 1e-10 * norm {
            dropped.push(j);
        } else {
            basis.push(r / rn);
            kept.push(j);
        }
    }
    let xk = x.select_columns(kept.iter());
    let yv = DVector::from_column_slice(y);
    let xtx = xk.transpose() * &xk;
    let xty = xk.transpose() * &yv;
    let chol = xtx.clone().cholesky();
    let (beta_k, inv_k) = match chol {
        Some(c) => (c.solve(&xty), c.inverse()),
        None => {
            let pinv = xtx.pseudo_inverse(1e-14).expect("pseudo inverse");
            (&pinv * &xty, pinv)
        }
    };
    let mut coef = vec![0.0; k];
    let mut xtx_inv = DMatrix::zeros(k, k);
    for (a, &ja) in kept.iter().enumerate() {
        coef[ja] = beta_k[a];
        for (b, &jb) in kept.iter().enumerate() {
            xtx_inv[(ja, jb)] = inv_k[(a, b)];
        }
    }
    let fitted_v = &xk * &beta_k;
    let fitted: Vec<f64> = fitted_v.iter().copied().collect();
    let residuals = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
    OlsFit {
        coef,
        fitted,
        residuals,
        dropped,
        xtx_inv,
    }
}
