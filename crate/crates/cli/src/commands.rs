use std::path::PathBuf;

use felt_core::bernstein::{box_vertices, Period};
use felt_core::binarize::decile_grid;
use felt_core::bootstrap::{bootstrap, BootstrapResult, FnStatistic};
use felt_core::panel::{load_panel, standardize_covariates, write_panel, Panel};
use felt_core::pipeline::{
    curve, fit, quantile_levels, std_alpha_spread, sweep, trace, write_curve_csv, write_sweep_csv,
    CurveStatistic, PipelineConfig, SummaryStatistic, TraceConfig,
};
use felt_core::sieve_gmm::{estimate, predict_g, relocation_shift, EstimateOptions};
use felt_core::synth::{generate, oracle_summaries, DgpConfig};
use felt_core::FeltError;
use serde::Serialize;

use crate::config::{BootstrapTarget, RunConfig};
use crate::output::RunDir;
use crate::CliError;

type CmdResult = Result<PathBuf, CliError>;

fn pipeline_config(cfg: &RunConfig) -> PipelineConfig {
    PipelineConfig {
        degree: cfg.degree,
        weighting: cfg.weighting,
        target_mean: cfg.target_mean,
    }
}

/// Load, report rejected rows, and standardize covariates if configured.
fn load(cfg: &RunConfig, run: &mut RunDir) -> Result<Panel, CliError> {
    let path = cfg.data.as_ref().ok_or_else(|| {
        CliError::Usage("no input data: pass --data or set \"data\" in the config".into())
    })?;
    let loaded = load_panel(path, &cfg.schema)?;
    run.record_input(path, "panel data")?;
    if !loaded.rejected.is_empty() {
        log::warn!(
            "{} rows rejected while reading {}",
            loaded.rejected.len(),
            path.display()
        );
        run.write_json(
            "rejected_rows.json",
            "rows skipped during ingestion",
            &loaded.rejected,
        )?;
    }
    let panel = loaded.panel;
    match &cfg.standardize {
        Some(opts) if panel.n_covariates() > 0 => Ok(standardize_covariates(&panel, opts)?.panel),
        _ => Ok(panel),
    }
}

pub fn simulate(cfg: &RunConfig) -> CmdResult {
    let dgp = cfg.dgp.clone().unwrap_or_else(|| DgpConfig::dgp_s(5000, 0));
    let sim = generate(&dgp)?;
    let mut run = RunDir::create(&cfg.out, "simulate")?;
    run.write_with(
        "panel.csv",
        "simulated panel: id, Y1, Y2, X1, X2, covariates",
        |b| write_panel(&sim.panel, b),
    )?;
    run.write_with(
        "latent.csv",
        "latent draws: id, alpha, U1, U2, Ystar1, Ystar2",
        |b| sim.latent.write_csv(&sim.panel.ids, b),
    )?;
    let oracle = oracle_summaries(&sim.latent, &sim.panel)?;
    run.write_with(
        "oracle_summary.csv",
        "summaries computed from the true fixed effects",
        |b| oracle.write_csv(b),
    )?;
    let mut resolved = cfg.clone();
    resolved.dgp = Some(dgp);
    Ok(run.finish(&resolved)?)
}

#[derive(Serialize)]
struct EstimateReport<'a> {
    estimate: &'a felt_core::sieve_gmm::GmmEstimate,
    monotone_at_vertices: bool,
    curve_shift: f64,
}

pub fn estimate_cmd(cfg: &RunConfig) -> CmdResult {
    let mut run = RunDir::create(&cfg.out, "estimate")?;
    let panel = load(cfg, &mut run)?;
    let mut est = estimate(
        &panel,
        cfg.degree,
        &EstimateOptions {
            weighting: cfg.weighting,
        },
    )?;
    est.coeffs = est.coeffs.normalized();
    let monotone = box_vertices(panel.n_covariates()).iter().all(|v| {
        Period::BOTH
            .iter()
            .all(|&t| est.coeffs.is_monotone_at(t, v, 1e-9))
    });
    let ghat = predict_g(&est, &panel)?;
    let shift = if cfg.relocate {
        relocation_shift(&ghat, &panel)
    } else {
        0.0
    };
    run.write_json(
        "estimate.json",
        "sieve coefficients, objective, J statistic and QP diagnostics",
        &EstimateReport {
            estimate: &est,
            monotone_at_vertices: monotone,
            curve_shift: shift,
        },
    )?;
    let points = curve(
        &est,
        &quantile_levels(cfg.curve_points),
        &panel.z_mean(),
        shift,
    )?;
    run.write_with(
        "g_curve.csv",
        "g_hat by period on an outcome-quantile grid at mean covariates",
        |b| write_curve_csv(&points, None, b),
    )?;
    run.write_with("ghat.csv", "g_hat per household and period", |b| {
        write_ghat(&panel, &ghat, b)
    })?;
    Ok(run.finish(cfg)?)
}

fn write_ghat(
    panel: &Panel,
    ghat: &felt_core::sieve_gmm::GHat,
    b: &mut Vec<u8>,
) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(b);
    w.write_record(["id", "g1", "g2"])
        .map_err(FeltError::from)?;
    for i in 0..panel.n() {
        w.write_record([
            panel.ids[i].clone(),
            format!("{:?}", ghat.g1[i]),
            format!("{:?}", ghat.g2[i]),
        ])
        .map_err(FeltError::from)?;
    }
    w.flush()?;
    Ok(())
}

/// Fill missing threshold grids from the data so the resolved config pins them.
fn resolved_trace(cfg: &TraceConfig, panel: &Panel) -> TraceConfig {
    let grid1 = cfg.grid1.clone().unwrap_or_else(|| decile_grid(panel.y(1)));
    let grid2 = cfg.grid2.clone().unwrap_or_else(|| decile_grid(panel.y(2)));
    let anchor = cfg.anchor.or_else(|| grid1.get(grid1.len() / 2).copied());
    TraceConfig {
        grid1: Some(grid1),
        grid2: Some(grid2),
        anchor,
    }
}

pub fn trace_cmd(cfg: &RunConfig) -> CmdResult {
    let mut run = RunDir::create(&cfg.out, "trace")?;
    let panel = load(cfg, &mut run)?;
    let tcfg = resolved_trace(&cfg.trace, &panel);
    let t = trace(&panel, &tcfg)?;
    run.write_json(
        "logit.json",
        "composite conditional logit: beta, clustered se, warnings",
        &serde_json::json!({
            "beta": t.logit.beta,
            "se_beta": t.logit.se_beta,
            "grid1": t.logit.grid1,
            "grid2": t.logit.grid2,
            "log_likelihood": t.logit.log_likelihood,
            "iterations": t.logit.iterations,
            "warnings": t.logit.warnings,
        }),
    )?;
    run.write_with(
        "gamma_matrix.csv",
        "gamma(y1, y2): rows grid1, columns grid2",
        |b| t.logit.write_gamma_csv(b),
    )?;
    run.write_with(
        "h1_inverse.csv",
        "traced inverse transform, period 1",
        |b| t.traced.write_csv(1, b),
    )?;
    run.write_with(
        "h2_inverse.csv",
        "traced inverse transform, period 2",
        |b| t.traced.write_csv(2, b),
    )?;
    let mut resolved = cfg.clone();
    resolved.trace = tcfg;
    Ok(run.finish(&resolved)?)
}

pub fn summarize_cmd(cfg: &RunConfig) -> CmdResult {
    let mut run = RunDir::create(&cfg.out, "summarize")?;
    let panel = load(cfg, &mut run)?;
    let f = fit(&panel, &pipeline_config(cfg))?;
    run.write_with(
        "fe_summary.csv",
        "fixed-effect summary table; X marks a negative variance",
        |b| f.summary.write_csv(b),
    )?;
    run.write_with(
        "share_regression.csv",
        "share regression coefficients and standard errors",
        |b| {
            let mut w = csv::Writer::from_writer(b);
            w.write_record(["regressor", "coef", "se"])
                .map_err(FeltError::from)?;
            for ((n, c), s) in f
                .shares
                .coef_names
                .iter()
                .zip(&f.shares.coef)
                .zip(&f.shares.se)
            {
                w.write_record([n.clone(), format!("{c:?}"), format!("{s:?}")])
                    .map_err(FeltError::from)?;
            }
            let r2 = match (f.shares.r_squared, f.shares.r_squared_flagged) {
                (Some(r), false) => format!("{r:?}"),
                _ => "X".into(),
            };
            w.write_record(["R2".to_string(), r2, String::new()])
                .map_err(FeltError::from)?;
            w.flush()?;
            Ok::<(), CliError>(())
        },
    )?;
    run.write_json(
        "summary.json",
        "summary, share regression and projection slopes",
        &serde_json::json!({
            "config": f.config,
            "summary": f.summary,
            "share_regression": {
                "coef_names": f.shares.coef_names,
                "coef": f.shares.coef,
                "se": f.shares.se,
                "r_squared": f.shares.r_squared,
                "r_squared_flagged": f.shares.r_squared_flagged,
                "target_mean": f.shares.target_mean,
                "dropped": f.shares.dropped,
            },
            "projections": f.projections,
            "statistics": f.statistics().into_iter().collect::<std::collections::BTreeMap<_, _>>(),
        }),
    )?;
    Ok(run.finish(cfg)?)
}

fn write_bootstrap_table(r: &BootstrapResult, b: &mut Vec<u8>) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(b);
    w.write_record([
        "statistic",
        "point",
        "bias_corrected",
        "q025",
        "q975",
        "n_valid",
    ])
    .map_err(FeltError::from)?;
    let cell = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_else(|| "X".into());
    for (j, name) in r.names.iter().enumerate() {
        w.write_record([
            name.clone(),
            cell(r.point[j]),
            cell(r.bias_corrected[j]),
            cell(r.q025[j]),
            cell(r.q975[j]),
            r.n_valid[j].to_string(),
        ])
        .map_err(FeltError::from)?;
    }
    w.flush()?;
    Ok(())
}

pub fn bootstrap_cmd(cfg: &RunConfig) -> CmdResult {
    let mut run = RunDir::create(&cfg.out, "bootstrap")?;
    let panel = load(cfg, &mut run)?;
    let pcfg = pipeline_config(cfg);
    let bc = &cfg.bootstrap;
    let mut resolved = cfg.clone();
    let result = match bc.target {
        BootstrapTarget::Summary => {
            let reference = fit(&panel, &pcfg)?;
            let stat = SummaryStatistic::new(pcfg, &reference);
            bootstrap(&panel, &stat, bc.b, bc.seed)?
        }
        BootstrapTarget::Curve => {
            let stat = CurveStatistic {
                config: pcfg,
                levels: quantile_levels(cfg.curve_points),
                z: panel.z_mean(),
            };
            let r = bootstrap(&panel, &stat, bc.b, bc.seed)?;
            let est = estimate(
                &panel,
                pcfg.degree,
                &EstimateOptions {
                    weighting: pcfg.weighting,
                },
            )?;
            let points = curve(&est, &stat.levels, &stat.z, 0.0)?;
            run.write_with(
                "g_curve_bands.csv",
                "g_hat on the quantile grid with pointwise 95% bands",
                |b| write_curve_csv(&points, Some(&r), b),
            )?;
            r
        }
        BootstrapTarget::Trace => {
            let tcfg = resolved_trace(&cfg.trace, &panel);
            resolved.trace = tcfg.clone();
            let mut names = vec!["beta".to_string()];
            names.extend(
                tcfg.grid1
                    .as_ref()
                    .unwrap()
                    .iter()
                    .map(|y| format!("h1_inverse@{y:?}")),
            );
            names.extend(
                tcfg.grid2
                    .as_ref()
                    .unwrap()
                    .iter()
                    .map(|y| format!("h2_inverse@{y:?}")),
            );
            let stat = FnStatistic {
                names,
                f: |p: &Panel| {
                    let t = trace(p, &tcfg)?;
                    let mut v = vec![Some(t.logit.beta)];
                    v.extend(t.traced.h1_inverse.iter().copied());
                    v.extend(t.traced.h2_inverse.iter().copied());
                    Ok(v)
                },
            };
            bootstrap(&panel, &stat, bc.b, bc.seed)?
        }
    };
    run.write_json(
        "bootstrap.json",
        "point, bias-corrected and percentile bounds per statistic",
        &result,
    )?;
    run.write_with(
        "bootstrap_table.csv",
        "bootstrap results as a table; X marks unavailable",
        |b| write_bootstrap_table(&result, b),
    )?;
    if bc.dump_replications {
        run.write_with("replications.csv", "every replication's statistics", |b| {
            result.write_replications_csv(b)
        })?;
    }
    Ok(run.finish(&resolved)?)
}

pub fn sweep_cmd(cfg: &RunConfig) -> CmdResult {
    let mut run = RunDir::create(&cfg.out, "sweep")?;
    let panel = load(cfg, &mut run)?;
    if cfg.sweep.degrees.is_empty() {
        return Err(CliError::Usage("sweep needs at least one K".into()));
    }
    let rows = sweep(&panel, &cfg.sweep.degrees, cfg.weighting);
    run.write_with(
        "sweep.csv",
        "stability table: statistics by K; X marks a negative variance",
        |b| write_sweep_csv(&rows, b),
    )?;
    let spread = std_alpha_spread(&rows, &cfg.sweep.stability);
    run.write_json(
        "sweep.json",
        "per-K summaries and the std_alpha spread over the stability orders",
        &serde_json::json!({
            "rows": rows,
            "stability_degrees": cfg.sweep.stability,
            "std_alpha_spread": spread,
        }),
    )?;
    Ok(run.finish(cfg)?)
}
