//! Bernstein polynomial basis and monotone sieve functions
//! g_t(u, z) = sum_l sum_k z_l beta[t][l][k] B_k(u, K).

use serde::{Deserialize, Serialize};

use crate::error::{FeltError, Result};

/// Survey period. Coefficient arrays are indexed by `Period::index()`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Period {
    First,
    Second,
}

impl Period {
    pub const BOTH: [Period; 2] = [Period::First, Period::Second];

    pub fn index(self) -> usize {
        match self {
            Period::First => 0,
            Period::Second => 1,
        }
    }

    /// 1-based period number.
    pub fn number(self) -> usize {
        self.index() + 1
    }

    pub fn from_number(t: usize) -> Result<Period> {
        match t {
            1 => Ok(Period::First),
            2 => Ok(Period::Second),
            _ => Err(FeltError::InvalidInput(format!(
                "period must be 1 or 2, got {t}"
            ))),
        }
    }
}

/// Bernstein basis of degree `degree` at `u`, written into `out` (length K+1).
///
/// Built by repeated convex combination (de Casteljau), which stays accurate
/// near the endpoints where explicit binomial products lose digits.
pub fn basis_into(u: f64, degree: usize, out: &mut [f64]) {
    debug_assert_eq!(out.len(), degree + 1);
    let v = 1.0 - u;
    out.fill(0.0);
    out[0] = 1.0;
    for j in 1..=degree {
        for k in (1..=j).rev() {
            out[k] = v * out[k] + u * out[k - 1];
        }
        out[0] *= v;
    }
}

/// B_k(u, K) = C(K,k) u^k (1-u)^(K-k) for k = 0..=K.
pub fn basis(u: f64, degree: usize) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&u) {
        return Err(FeltError::Domain {
            value: u,
            domain: "[0, 1]",
        });
    }
    if degree == 0 {
        return Err(FeltError::InvalidInput(
            "Bernstein degree must be at least 1".into(),
        ));
    }
    let mut out = vec![0.0; degree + 1];
    basis_into(u, degree, &mut out);
    Ok(out)
}

/// Sieve coefficients beta[t][l][k] for periods t, covariates l = 0..=L
/// (l = 0 is the constant) and basis index k = 0..=K.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SieveCoefficients {
    #[serde(rename = "K")]
    pub degree: usize,
    #[serde(rename = "L")]
    pub covariates: usize,
    pub beta: Vec<Vec<Vec<f64>>>,
}

impl SieveCoefficients {
    pub fn zeros(degree: usize, covariates: usize) -> Self {
        SieveCoefficients {
            degree,
            covariates,
            beta: vec![vec![vec![0.0; degree + 1]; covariates + 1]; 2],
        }
    }

    /// Number of free coefficients, 2(K+1)(L+1).
    pub fn len(&self) -> usize {
        2 * (self.degree + 1) * (self.covariates + 1)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Position of beta[t][l][k] in the flattened parameter vector.
    pub fn flat_index(&self, t: Period, l: usize, k: usize) -> usize {
        (t.index() * (self.covariates + 1) + l) * (self.degree + 1) + k
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.beta.iter().flatten().flatten().copied().collect()
    }

    pub fn from_flat(degree: usize, covariates: usize, theta: &[f64]) -> Result<Self> {
        let mut c = Self::zeros(degree, covariates);
        if theta.len() != c.len() {
            return Err(FeltError::Dimension {
                expected: c.len(),
                got: theta.len(),
            });
        }
        for t in Period::BOTH {
            for l in 0..=covariates {
                for k in 0..=degree {
                    c.beta[t.index()][l][k] = theta[c.flat_index(t, l, k)];
                }
            }
        }
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.degree == 0 {
            return Err(FeltError::InvalidInput(
                "Bernstein degree must be at least 1".into(),
            ));
        }
        let shape_ok = self.beta.len() == 2
            && self.beta.iter().all(|b| {
                b.len() == self.covariates + 1 && b.iter().all(|r| r.len() == self.degree + 1)
            });
        if !shape_ok {
            return Err(FeltError::InvalidInput(format!(
                "beta must have shape [2][{}][{}]",
                self.covariates + 1,
                self.degree + 1
            )));
        }
        Ok(())
    }

    fn check_z(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.covariates + 1 {
            return Err(FeltError::Dimension {
                expected: self.covariates + 1,
                got: z.len(),
            });
        }
        Ok(())
    }

    /// beta_kt(z) = sum_l z_l beta[t][l][k].
    pub fn coef_at(&self, t: Period, k: usize, z: &[f64]) -> f64 {
        self.beta[t.index()]
            .iter()
            .zip(z)
            .map(|(row, zl)| zl * row[k])
            .sum()
    }

    /// All K+1 coefficients at covariate row z.
    pub fn coefs_at(&self, t: Period, z: &[f64]) -> Vec<f64> {
        (0..=self.degree).map(|k| self.coef_at(t, k, z)).collect()
    }

    /// Evaluate g_t(u, z).
    pub fn eval(&self, t: Period, u: f64, z: &[f64]) -> Result<f64> {
        self.check_z(z)?;
        let b = basis(u, self.degree)?;
        Ok(self.eval_with_basis(t, &b, z))
    }

    /// Evaluate with a precomputed basis vector.
    pub fn eval_with_basis(&self, t: Period, basis: &[f64], z: &[f64]) -> f64 {
        let mut s = 0.0;
        for (row, zl) in self.beta[t.index()].iter().zip(z) {
            if *zl == 0.0 {
                continue;
            }
            let inner: f64 = row.iter().zip(basis).map(|(b, p)| b * p).sum();
            s += zl * inner;
        }
        s
    }

    /// Successive coefficient gaps beta_kt(z) - beta_{k-1,t}(z), k = 1..=K.
    pub fn gaps_at(&self, t: Period, z: &[f64]) -> Vec<f64> {
        let c = self.coefs_at(t, z);
        c.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Whether the coefficients are non-decreasing in k at z (within `tol`).
    pub fn is_monotone_at(&self, t: Period, z: &[f64], tol: f64) -> bool {
        self.gaps_at(t, z).iter().all(|&g| g >= -tol)
    }

    /// Solve g_t(u, z) = target for u by bisection.
    ///
    /// Requires non-negative coefficient gaps at z (within 1e-12) with at
    /// least one gap above 1e-12; such a polynomial is strictly increasing
    /// on [0, 1].
    pub fn invert(&self, t: Period, target: f64, z: &[f64]) -> Result<f64> {
        self.check_z(z)?;
        const GAP_TOL: f64 = 1e-12;
        let gaps = self.gaps_at(t, z);
        let max_gap = gaps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if gaps.iter().any(|&g| g < -GAP_TOL) || max_gap <= GAP_TOL {
            return Err(FeltError::NotInvertible);
        }
        let lo_val = self.coef_at(t, 0, z);
        let hi_val = self.coef_at(t, self.degree, z);
        if !(lo_val..=hi_val).contains(&target) {
            return Err(FeltError::OutOfRange {
                target,
                low: lo_val,
                high: hi_val,
            });
        }
        if target == hi_val {
            return Ok(1.0);
        }
        if target == lo_val {
            return Ok(0.0);
        }
        let mut buf = vec![0.0; self.degree + 1];
        let mut f = |u: f64| {
            basis_into(u, self.degree, &mut buf);
            self.eval_with_basis(t, &buf, z)
        };
        let (mut a, mut b) = (0.0_f64, 1.0_f64);
        let mut mid = 0.5;
        for _ in 0..200 {
            mid = 0.5 * (a + b);
            let v = f(mid);
            if (v - target).abs() <= 1e-13 || b - a <= f64::EPSILON {
                break;
            }
            if v < target {
                a = mid;
            } else {
                b = mid;
            }
        }
        Ok(mid)
    }

    /// Add `delta[l]` to beta[t][l][k] for every t and k. This shifts both
    /// g_1 and g_2 by the covariate profile sum_l delta_l z_l.
    pub fn shift_profile(&mut self, delta: &[f64]) {
        for per in &mut self.beta {
            for (row, d) in per.iter_mut().zip(delta) {
                row.iter_mut().for_each(|b| *b += d);
            }
        }
    }

    /// Canonical representative of the coefficients' location class:
    /// subtract beta[1][l][0] from every coefficient of covariate l in both
    /// periods, so that g_1(0, z) = 0 for all z.
    pub fn normalized(&self) -> Self {
        let mut out = self.clone();
        let delta: Vec<f64> = self.beta[0].iter().map(|row| -row[0]).collect();
        out.shift_profile(&delta);
        for row in &mut out.beta[0] {
            row[0] = 0.0;
        }
        out
    }
}

/// Corners of the covariate box {0,1}^L with the constant 1 prepended.
pub fn box_vertices(covariates: usize) -> Vec<Vec<f64>> {
    (0..(1usize << covariates))
        .map(|mask| {
            let mut v = vec![1.0];
            v.extend((0..covariates).map(|j| ((mask >> j) & 1) as f64));
            v
        })
        .collect()
}
