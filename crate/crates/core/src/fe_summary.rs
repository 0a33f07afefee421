//! Fixed-effect distribution statistics and the resource-share regression.
//!
//! All inputs are `v_it = g_hat_it - X_it`, which estimates `alpha_i - U_it`
//! up to a common location. Every reported quantity is location-free.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::bernstein::Period;
use crate::error::{FeltError, Result};
use crate::panel::Panel;
use crate::sieve_gmm::GHat;
use crate::stats::{covariance, mean, ols, variance};

/// A standard deviation derived from a variance estimate that may come out
/// negative; the std is `None` exactly when the variance is negative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlaggedStd {
    pub variance: f64,
    pub std: Option<f64>,
}

impl FlaggedStd {
    pub fn from_variance(variance: f64) -> Self {
        FlaggedStd {
            variance,
            std: (variance >= 0.0).then(|| variance.sqrt()),
        }
    }

    pub fn is_flagged(&self) -> bool {
        self.std.is_none()
    }

    /// Table cell: the std to 4 decimals, or "X" for a negative variance.
    pub fn cell(&self) -> String {
        match self.std {
            Some(s) => format!("{s:.4}"),
            None => "X".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedEffectSummary {
    pub std_alpha: FlaggedStd,
    pub std_e: FlaggedStd,
    pub cov_alpha_x1: f64,
    pub cov_alpha_x2: f64,
    pub std_alpha_plus_x1: FlaggedStd,
    pub std_alpha_plus_x2: FlaggedStd,
    /// Var(X_t) - Var(alpha + X_t), t = 1, 2.
    pub var_diff_x1: f64,
    pub var_diff_x2: f64,
}

impl FixedEffectSummary {
    /// (label, cell) rows in table order.
    pub fn rows(&self) -> Vec<(&'static str, String)> {
        vec![
            ("std(alpha)", self.std_alpha.cell()),
            ("std(e)", self.std_e.cell()),
            ("cov(alpha,X1)", format!("{:.4}", self.cov_alpha_x1)),
            ("cov(alpha,X2)", format!("{:.4}", self.cov_alpha_x2)),
            ("std(alpha+X1)", self.std_alpha_plus_x1.cell()),
            ("std(alpha+X2)", self.std_alpha_plus_x2.cell()),
            ("var(X1)-var(alpha+X1)", format!("{:.4}", self.var_diff_x1)),
            ("var(X2)-var(alpha+X2)", format!("{:.4}", self.var_diff_x2)),
        ]
    }

    /// Numeric fields in a fixed order, flagged stds as `None`.
    pub fn values(&self) -> Vec<(&'static str, Option<f64>)> {
        vec![
            ("std_alpha", self.std_alpha.std),
            ("std_e", self.std_e.std),
            ("cov_alpha_x1", Some(self.cov_alpha_x1)),
            ("cov_alpha_x2", Some(self.cov_alpha_x2)),
            ("std_alpha_plus_x1", self.std_alpha_plus_x1.std),
            ("std_alpha_plus_x2", self.std_alpha_plus_x2.std),
            ("var_diff_x1", Some(self.var_diff_x1)),
            ("var_diff_x2", Some(self.var_diff_x2)),
        ]
    }

    /// Two-column CSV (statistic, value).
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["statistic", "value"])?;
        for (label, cell) in self.rows() {
            w.write_record([label, cell.as_str()])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn residual_index(ghat: &GHat, panel: &Panel, t: Period) -> Vec<f64> {
    ghat.period(t)
        .iter()
        .zip(panel.x(t.number()))
        .map(|(g, x)| g - x)
        .collect()
}

fn check(ghat: &GHat, panel: &Panel) -> Result<()> {
    if ghat.n() != panel.n() {
        return Err(FeltError::Dimension {
            expected: panel.n(),
            got: ghat.n(),
        });
    }
    if panel.n() < 3 {
        return Err(FeltError::InsufficientData(format!(
            "summary statistics need at least 3 households, got {}",
            panel.n()
        )));
    }
    if !ghat.g1.iter().chain(&ghat.g2).all(|v| v.is_finite()) {
        return Err(FeltError::InvalidInput("non-finite predicted index".into()));
    }
    Ok(())
}

/// Design (1, X_bar, z_1..z_L).
fn share_design(panel: &Panel) -> DMatrix<f64> {
    let n = panel.n();
    let l = panel.n_covariates();
    let xbar = panel.x_bar();
    DMatrix::from_fn(n, l + 2, |i, j| match j {
        0 => 1.0,
        1 => xbar[i],
        _ => panel.z[(i, j - 1)],
    })
}

fn coef_names(panel: &Panel) -> Vec<String> {
    let mut names = vec!["const".to_string(), "x_bar".to_string()];
    names.extend(panel.covariate_names.iter().cloned());
    names
}

/// Assemble the summary from per-household alpha-type series `a1`, `a2`
/// (whose cross covariance is Var(alpha)) and the pooled-projection
/// residual covariance.
fn assemble(
    var_alpha: f64,
    var_e: f64,
    a1: &[f64],
    a2: &[f64],
    panel: &Panel,
) -> FixedEffectSummary {
    let x1 = panel.x(1);
    let x2 = panel.x(2);
    let cov1 = covariance(a1, x1);
    let cov2 = covariance(a2, x2);
    let vx1 = variance(x1);
    let vx2 = variance(x2);
    let v_ax1 = var_alpha + vx1 + 2.0 * cov1;
    let v_ax2 = var_alpha + vx2 + 2.0 * cov2;
    FixedEffectSummary {
        std_alpha: FlaggedStd::from_variance(var_alpha),
        std_e: FlaggedStd::from_variance(var_e),
        cov_alpha_x1: cov1,
        cov_alpha_x2: cov2,
        std_alpha_plus_x1: FlaggedStd::from_variance(v_ax1),
        std_alpha_plus_x2: FlaggedStd::from_variance(v_ax2),
        var_diff_x1: vx1 - v_ax1,
        var_diff_x2: vx2 - v_ax2,
    }
}

pub fn summarize(ghat: &GHat, panel: &Panel) -> Result<FixedEffectSummary> {
    check(ghat, panel)?;
    let v1 = residual_index(ghat, panel, Period::First);
    let v2 = residual_index(ghat, panel, Period::Second);
    let var_alpha = covariance(&v2, &v1);

    // pooled regression of v_it on (1, X_bar, z), stacked over periods
    let n = panel.n();
    let base = share_design(panel);
    let design = DMatrix::from_fn(2 * n, base.ncols(), |r, j| base[(r % n, j)]);
    let y: Vec<f64> = v1.iter().chain(&v2).copied().collect();
    let fit = ols(&design, &y);
    let var_e = covariance(&fit.residuals[..n], &fit.residuals[n..]);

    Ok(assemble(var_alpha, var_e, &v1, &v2, panel))
}

/// Ground-truth counterpart of `summarize` computed from known fixed effects.
pub fn summarize_true_alpha(alpha: &[f64], panel: &Panel) -> Result<FixedEffectSummary> {
    if alpha.len() != panel.n() {
        return Err(FeltError::Dimension {
            expected: panel.n(),
            got: alpha.len(),
        });
    }
    let fit = ols(&share_design(panel), alpha);
    Ok(assemble(
        variance(alpha),
        variance(&fit.residuals),
        alpha,
        alpha,
        panel,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShareRegression {
    pub eta: Vec<f64>,
    pub coef_names: Vec<String>,
    pub coef: Vec<f64>,
    pub se: Vec<f64>,
    /// ESS / TSS when the alpha variance estimate is positive.
    pub r_squared: Option<f64>,
    /// True when R^2 is undefined or the ratio exceeds 1.
    pub r_squared_flagged: bool,
    pub ess: f64,
    pub tss: Option<f64>,
    pub target_mean: f64,
    /// Regressors dropped as collinear.
    pub dropped: Vec<String>,
}

/// eta_i = exp((v_i1 + v_i2) / 2), rescaled to `target_mean`, regressed on
/// (1, X_bar, z). The R^2 denominator is the lognormal-implied total sum of
/// squares n m^2 (exp(Var(alpha)) - 1).
pub fn share_regression(
    ghat: &GHat,
    panel: &Panel,
    summary: &FixedEffectSummary,
    target_mean: f64,
) -> Result<ShareRegression> {
    check(ghat, panel)?;
    if !(target_mean > 0.0 && target_mean.is_finite()) {
        return Err(FeltError::InvalidInput(format!(
            "target mean must be positive, got {target_mean}"
        )));
    }
    let v1 = residual_index(ghat, panel, Period::First);
    let v2 = residual_index(ghat, panel, Period::Second);
    let avg: Vec<f64> = v1.iter().zip(&v2).map(|(a, b)| 0.5 * (a + b)).collect();
    // subtract the max before exponentiating; the rescale absorbs it
    let top = avg.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = avg.iter().map(|a| (a - top).exp()).collect();
    let m = mean(&raw);
    let eta: Vec<f64> = raw.iter().map(|r| r * target_mean / m).collect();

    let design = share_design(panel);
    let fit = ols(&design, &eta);
    let names = coef_names(panel);
    let dropped: Vec<String> = fit.dropped.iter().map(|&j| names[j].clone()).collect();
    for d in &dropped {
        log::warn!("share regression: dropped collinear regressor {d}");
    }
    let s2 = fit.residual_variance();
    let se = (0..fit.coef.len())
        .map(|j| (s2 * fit.xtx_inv[(j, j)]).max(0.0).sqrt())
        .collect();
    let eta_mean = mean(&eta);
    let ess: f64 = fit.fitted.iter().map(|f| (f - eta_mean).powi(2)).sum();
    let var_alpha = summary.std_alpha.variance;
    let n = panel.n() as f64;
    let (tss, r2, flagged) = if var_alpha > 0.0 {
        let tss = n * target_mean * target_mean * var_alpha.exp_m1();
        let r2 = ess / tss;
        (Some(tss), Some(r2), r2 > 1.0)
    } else {
        (None, None, true)
    };
    Ok(ShareRegression {
        eta,
        coef_names: names,
        coef: fit.coef,
        se,
        r_squared: r2,
        r_squared_flagged: flagged,
        ess,
        tss,
        target_mean,
        dropped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionSlope {
    /// Period of g_hat - X.
    pub s: usize,
    /// Period of the budget regressor.
    pub t: usize,
    pub slope: f64,
    pub se: f64,
    /// s == t: the slope also picks up Cov(U_t, X_t), assumed zero.
    pub contaminated: bool,
}

/// Var(X_t)^-1 Cov(g_hat_s - X_s, X_t) for all four (s, t) pairs.
pub fn projection_coefficients(ghat: &GHat, panel: &Panel) -> Result<Vec<ProjectionSlope>> {
    check(ghat, panel)?;
    let n = panel.n() as f64;
    let mut out = Vec::with_capacity(4);
    for s in Period::BOTH {
        let v = residual_index(ghat, panel, s);
        for t in Period::BOTH {
            let x = panel.x(t.number());
            let vx = variance(x);
            if vx.is_nan() || vx <= 0.0 {
                return Err(FeltError::InvalidInput(format!(
                    "X{} has zero variance",
                    t.number()
                )));
            }
            let slope = covariance(&v, x) / vx;
            let intercept = mean(&v) - slope * mean(x);
            let rss: f64 = v
                .iter()
                .zip(x)
                .map(|(vi, xi)| (vi - intercept - slope * xi).powi(2))
                .sum();
            let s2 = rss / (n - 2.0).max(1.0);
            let se = (s2 / ((n - 1.0) * vx)).sqrt();
            out.push(ProjectionSlope {
                s: s.number(),
                t: t.number(),
                slope,
                se,
                contaminated: s == t,
            });
        }
    }
    Ok(out)
}
