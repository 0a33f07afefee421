//! End-to-end runs: sieve estimate, fixed-effect summaries, sieve-order
//! sweeps, transform tracing and plot-ready curve grids.

use serde::{Deserialize, Serialize};

use crate::bernstein::Period;
use crate::binarize::{
    decile_grid, fit_composite_logit, trace_transforms, CompositeLogit, TracedTransforms,
};
use crate::bootstrap::{BootstrapResult, Statistic};
use crate::error::{FeltError, Result};
use crate::fe_summary::{
    projection_coefficients, share_regression, summarize, FixedEffectSummary, ProjectionSlope,
    ShareRegression,
};
use crate::panel::Panel;
use crate::par::map_slice;
use crate::sieve_gmm::{estimate, predict_g, EstimateOptions, GHat, GmmEstimate, Weighting};

pub const DEFAULT_DEGREE: usize = 8;
pub const DEFAULT_TARGET_MEAN: f64 = 0.33;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    #[serde(rename = "K")]
    pub degree: usize,
    pub weighting: Weighting,
    pub target_mean: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            degree: DEFAULT_DEGREE,
            weighting: Weighting::Identity,
            target_mean: DEFAULT_TARGET_MEAN,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FeltFit {
    pub config: PipelineConfig,
    pub estimate: GmmEstimate,
    #[serde(skip)]
    pub ghat: GHat,
    pub summary: FixedEffectSummary,
    pub shares: ShareRegression,
    pub projections: Vec<ProjectionSlope>,
}

/// Summaries of an estimate. Coefficients are first moved to their
/// canonical location so that every statistic depends only on the location
/// class of g.
pub fn summarize_estimate(
    est: &GmmEstimate,
    panel: &Panel,
    cfg: &PipelineConfig,
) -> Result<FeltFit> {
    let mut est = est.clone();
    est.coeffs = est.coeffs.normalized();
    let ghat = predict_g(&est, panel)?;
    let summary = summarize(&ghat, panel)?;
    let shares = share_regression(&ghat, panel, &summary, cfg.target_mean)?;
    let projections = projection_coefficients(&ghat, panel)?;
    Ok(FeltFit {
        config: *cfg,
        estimate: est,
        ghat,
        summary,
        shares,
        projections,
    })
}

pub fn fit(panel: &Panel, cfg: &PipelineConfig) -> Result<FeltFit> {
    let est = estimate(
        panel,
        cfg.degree,
        &EstimateOptions {
            weighting: cfg.weighting,
        },
    )?;
    summarize_estimate(&est, panel, cfg)
}

impl FeltFit {
    /// Flat named statistics: summary fields, share-regression coefficients
    /// and R^2, projection slopes.
    pub fn statistics(&self) -> Vec<(String, Option<f64>)> {
        let mut out: Vec<(String, Option<f64>)> = self
            .summary
            .values()
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        for (name, c) in self.shares.coef_names.iter().zip(&self.shares.coef) {
            out.push((format!("share_{name}"), Some(*c)));
        }
        out.push((
            "share_r_squared".into(),
            self.shares
                .r_squared
                .filter(|_| !self.shares.r_squared_flagged),
        ));
        for p in &self.projections {
            out.push((format!("projection_{}{}", p.s, p.t), Some(p.slope)));
        }
        out
    }
}

/// The full pipeline as a bootstrap statistic.
pub struct SummaryStatistic {
    pub config: PipelineConfig,
    names: Vec<String>,
}

impl SummaryStatistic {
    /// Statistic names depend on the covariate names, hence the reference fit.
    pub fn new(config: PipelineConfig, reference: &FeltFit) -> Self {
        SummaryStatistic {
            config,
            names: reference.statistics().into_iter().map(|(k, _)| k).collect(),
        }
    }
}

impl Statistic for SummaryStatistic {
    fn names(&self) -> Vec<String> {
        self.names.clone()
    }

    fn compute(&self, panel: &Panel) -> Result<Vec<Option<f64>>> {
        let f = fit(panel, &self.config)?;
        let stats = f.statistics();
        if stats.len() != self.names.len() {
            return Err(FeltError::Dimension {
                expected: self.names.len(),
                got: stats.len(),
            });
        }
        Ok(stats.into_iter().map(|(_, v)| v).collect())
    }
}

/// Evenly spaced interior quantile levels 1/(m+1), ..., m/(m+1).
pub fn quantile_levels(m: usize) -> Vec<f64> {
    (1..=m).map(|j| j as f64 / (m + 1) as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub period: usize,
    pub q: f64,
    /// Outcome level at within-period quantile q.
    pub y: f64,
    pub g: f64,
}

/// g_hat_t as a function of the outcome quantile q, at covariates `z`,
/// plus `shift`.
pub fn curve(est: &GmmEstimate, levels: &[f64], z: &[f64], shift: f64) -> Result<Vec<CurvePoint>> {
    let coeffs = est.coeffs.normalized();
    let mut out = Vec::with_capacity(2 * levels.len());
    for t in Period::BOTH {
        for &q in levels {
            out.push(CurvePoint {
                period: t.number(),
                q,
                y: est.y_maps[t.index()].unmap(q),
                g: coeffs.eval(t, q, z)? + shift,
            });
        }
    }
    Ok(out)
}

/// Curve values on a fixed quantile grid as a bootstrap statistic, so the
/// replications give pointwise bands.
pub struct CurveStatistic {
    pub config: PipelineConfig,
    pub levels: Vec<f64>,
    pub z: Vec<f64>,
}

impl Statistic for CurveStatistic {
    fn names(&self) -> Vec<String> {
        Period::BOTH
            .iter()
            .flat_map(|t| {
                self.levels
                    .iter()
                    .map(move |q| format!("g{}_q{q:.4}", t.number()))
            })
            .collect()
    }

    fn compute(&self, panel: &Panel) -> Result<Vec<Option<f64>>> {
        let est = estimate(
            panel,
            self.config.degree,
            &EstimateOptions {
                weighting: self.config.weighting,
            },
        )?;
        Ok(curve(&est, &self.levels, &self.z, 0.0)?
            .into_iter()
            .map(|p| Some(p.g))
            .collect())
    }
}

/// CSV with columns period, q, y, g and, when `bands` is given (from a
/// [`CurveStatistic`] run on the same grid), lower and upper.
pub fn write_curve_csv<W: std::io::Write>(
    points: &[CurvePoint],
    bands: Option<&BootstrapResult>,
    writer: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["period", "q", "y", "g"];
    if let Some(b) = bands {
        if b.names.len() != points.len() {
            return Err(FeltError::Dimension {
                expected: points.len(),
                got: b.names.len(),
            });
        }
        header.extend(["lower", "upper"]);
    }
    w.write_record(&header)?;
    for (j, p) in points.iter().enumerate() {
        let mut rec = vec![
            p.period.to_string(),
            format!("{:?}", p.q),
            format!("{:?}", p.y),
            format!("{:?}", p.g),
        ];
        if let Some(b) = bands {
            let cell = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
            rec.push(cell(b.q025[j]));
            rec.push(cell(b.q975[j]));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    #[serde(rename = "K")]
    pub degree: usize,
    pub summary: Option<FixedEffectSummary>,
    pub objective: Option<f64>,
    pub active_constraints: Option<usize>,
    pub error: Option<String>,
}

pub const SWEEP_DEGREES: [usize; 12] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12];

/// Fit every sieve order in `degrees`, in parallel. Failures are recorded
/// per row.
pub fn sweep(panel: &Panel, degrees: &[usize], weighting: Weighting) -> Vec<SweepRow> {
    map_slice(degrees, |&k| {
        let res = estimate(panel, k, &EstimateOptions { weighting }).and_then(|mut e| {
            e.coeffs = e.coeffs.normalized();
            let ghat = predict_g(&e, panel)?;
            summarize(&ghat, panel).map(|s| (e, s))
        });
        match res {
            Ok((e, s)) => SweepRow {
                degree: k,
                summary: Some(s),
                objective: Some(e.objective),
                active_constraints: Some(e.active_monotonicity_constraints),
                error: None,
            },
            Err(err) => SweepRow {
                degree: k,
                summary: None,
                objective: None,
                active_constraints: None,
                error: Some(err.to_string()),
            },
        }
    })
}

/// Largest pairwise difference in std_alpha among the rows with the given
/// degrees. `None` if any of them failed or is flagged.
pub fn std_alpha_spread(rows: &[SweepRow], degrees: &[usize]) -> Option<f64> {
    let vals: Option<Vec<f64>> = degrees
        .iter()
        .map(|k| {
            rows.iter()
                .find(|r| r.degree == *k)?
                .summary
                .as_ref()?
                .std_alpha
                .std
        })
        .collect();
    let vals = vals?;
    let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    Some(hi - lo)
}

/// Stability table: one row per statistic, one column per K. Flagged
/// negative variances print as "X", failed fits as "fail".
pub fn write_sweep_csv<W: std::io::Write>(rows: &[SweepRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["statistic".to_string()];
    header.extend(rows.iter().map(|r| format!("K={}", r.degree)));
    w.write_record(&header)?;
    let labels: Vec<&str> = match rows.iter().find_map(|r| r.summary.as_ref()) {
        Some(s) => s.rows().into_iter().map(|(l, _)| l).collect(),
        None => Vec::new(),
    };
    for (j, label) in labels.iter().enumerate() {
        let mut rec = vec![label.to_string()];
        for r in rows {
            rec.push(match &r.summary {
                Some(s) => s.rows()[j].1.clone(),
                None => "fail".into(),
            });
        }
        w.write_record(&rec)?;
    }
    let mut obj = vec!["objective".to_string()];
    obj.extend(rows.iter().map(|r| {
        r.objective
            .map(|v| format!("{v:.6e}"))
            .unwrap_or_else(|| "fail".into())
    }));
    w.write_record(&obj)?;
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TraceConfig {
    /// Period-1 thresholds; deciles above the minimum when absent.
    pub grid1: Option<Vec<f64>>,
    pub grid2: Option<Vec<f64>>,
    /// Must be a grid1 point; the middle grid1 point when absent.
    pub anchor: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceFit {
    pub logit: CompositeLogit,
    pub traced: TracedTransforms,
}

pub fn trace(panel: &Panel, cfg: &TraceConfig) -> Result<TraceFit> {
    let grid1 = cfg.grid1.clone().unwrap_or_else(|| decile_grid(panel.y(1)));
    let grid2 = cfg.grid2.clone().unwrap_or_else(|| decile_grid(panel.y(2)));
    if grid1.is_empty() || grid2.is_empty() {
        return Err(FeltError::InsufficientData(
            "outcome has no thresholds above its minimum".into(),
        ));
    }
    let anchor = cfg.anchor.unwrap_or(grid1[grid1.len() / 2]);
    let logit = fit_composite_logit(panel, &grid1, &grid2)?;
    let traced = trace_transforms(&logit.gamma, &grid1, &grid2, anchor)?;
    Ok(TraceFit { logit, traced })
}
