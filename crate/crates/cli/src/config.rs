//! Run configuration: one JSON document, every field optional, unknown keys
//! rejected. Command-line flags override the file.

use std::path::PathBuf;

use felt_core::panel::{PanelSchema, StandardizeOptions};
use felt_core::pipeline::{TraceConfig, DEFAULT_DEGREE, DEFAULT_TARGET_MEAN, SWEEP_DEGREES};
use felt_core::sieve_gmm::Weighting;
use felt_core::synth::DgpConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Panel CSV for every command except `simulate`.
    pub data: Option<PathBuf>,
    pub schema: PanelSchema,
    /// Covariate winsorizing and rescaling; `null` uses covariates as given.
    pub standardize: Option<StandardizeOptions>,
    #[serde(rename = "K")]
    pub degree: usize,
    pub weighting: Weighting,
    pub target_mean: f64,
    /// Shift plotted curves so the mean of g is mean(X) - ln 2.
    pub relocate: bool,
    /// Number of interior quantile levels in curve grids.
    pub curve_points: usize,
    pub trace: TraceConfig,
    pub dgp: Option<DgpConfig>,
    pub bootstrap: BootstrapConfig,
    pub sweep: SweepConfig,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: None,
            schema: PanelSchema::default(),
            standardize: Some(StandardizeOptions::default()),
            degree: DEFAULT_DEGREE,
            weighting: Weighting::Identity,
            target_mean: DEFAULT_TARGET_MEAN,
            relocate: false,
            curve_points: 99,
            trace: TraceConfig::default(),
            dgp: None,
            bootstrap: BootstrapConfig::default(),
            sweep: SweepConfig::default(),
            out: PathBuf::from("felt_out"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum BootstrapTarget {
    /// Fixed-effect summaries, share regression and projection slopes.
    #[default]
    Summary,
    /// g_hat on the quantile grid, for pointwise bands.
    Curve,
    /// Composite-logit beta and traced transforms on fixed grids.
    Trace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BootstrapConfig {
    #[serde(rename = "B")]
    pub b: usize,
    pub seed: u64,
    pub target: BootstrapTarget,
    pub dump_replications: bool,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            b: 1000,
            seed: 0,
            target: BootstrapTarget::Summary,
            dump_replications: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub degrees: Vec<usize>,
    /// Orders whose std_alpha spread is reported.
    pub stability: Vec<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            degrees: SWEEP_DEGREES.to_vec(),
            stability: vec![8, 9, 10],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_default() {
        let c: RunConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(c, RunConfig::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"k": 3}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"bootstrap": {"reps": 3}}"#).is_err());
    }

    #[test]
    fn round_trip() {
        let mut c = RunConfig {
            dgp: Some(DgpConfig::dgp_s(100, 3)),
            ..Default::default()
        };
        c.bootstrap.b = 50;
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&s).unwrap(), c);
    }
}
