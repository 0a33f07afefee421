//! Household-level nonparametric bootstrap.
//!
//! Each replication draws n households with replacement (both periods kept
//! together) from its own ChaCha8 stream, so replication b sees the same
//! resample whatever the worker count. The statistic is recomputed from
//! scratch on every resample, rank transforms included.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{FeltError, Result};
use crate::panel::Panel;
use crate::par::map_indexed;
use crate::stats::{mean, quantile_sorted};

/// A vector of named statistics computed from a panel. `None` entries mark
/// values that exist but are unusable, such as a standard deviation whose
/// estimated variance came out negative.
pub trait Statistic: Sync {
    fn names(&self) -> Vec<String>;
    fn compute(&self, panel: &Panel) -> Result<Vec<Option<f64>>>;
}

/// Adapter turning a closure into a [`Statistic`].
pub struct FnStatistic<F> {
    pub names: Vec<String>,
    pub f: F,
}

impl<F> Statistic for FnStatistic<F>
where
    F: Fn(&Panel) -> Result<Vec<Option<f64>>> + Sync,
{
    fn names(&self) -> Vec<String> {
        self.names.clone()
    }

    fn compute(&self, panel: &Panel) -> Result<Vec<Option<f64>>> {
        (self.f)(panel)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    #[serde(rename = "B")]
    pub b: usize,
    pub seed: u64,
    pub names: Vec<String>,
    pub point: Vec<Option<f64>>,
    /// 2 * point - mean(replications); only when fewer than half the
    /// replications failed for that statistic.
    pub bias_corrected: Vec<Option<f64>>,
    pub replication_mean: Vec<Option<f64>>,
    pub q025: Vec<Option<f64>>,
    pub q975: Vec<Option<f64>>,
    /// Usable replications per statistic.
    pub n_valid: Vec<usize>,
    /// Replications that errored or flagged at least one statistic.
    pub failure_count: usize,
    #[serde(skip)]
    pub replications: Vec<Option<Vec<Option<f64>>>>,
}

impl BootstrapResult {
    /// One row per replication: index, status, then each statistic (empty
    /// when unusable).
    pub fn write_replications_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["replication".to_string(), "status".to_string()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header)?;
        for (b, rep) in self.replications.iter().enumerate() {
            let mut rec = vec![b.to_string()];
            match rep {
                None => {
                    rec.push("error".into());
                    rec.extend(self.names.iter().map(|_| String::new()));
                }
                Some(vals) => {
                    rec.push(
                        if vals.iter().all(Option::is_some) {
                            "ok"
                        } else {
                            "flagged"
                        }
                        .into(),
                    );
                    rec.extend(
                        vals.iter()
                            .map(|v| v.map(|x| format!("{x:?}")).unwrap_or_default()),
                    );
                }
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Index of a statistic by name.
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// Household indices for replication `rep`.
pub fn resample_indices(n: usize, seed: u64, rep: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep as u64);
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

pub fn bootstrap<S: Statistic + ?Sized>(
    panel: &Panel,
    stat: &S,
    b: usize,
    seed: u64,
) -> Result<BootstrapResult> {
    if b < 2 {
        return Err(FeltError::InvalidInput(format!(
            "bootstrap needs B >= 2, got {b}"
        )));
    }
    let names = stat.names();
    let point = stat.compute(panel)?;
    if point.len() != names.len() {
        return Err(FeltError::Dimension {
            expected: names.len(),
            got: point.len(),
        });
    }
    let n = panel.n();
    let replications: Vec<Option<Vec<Option<f64>>>> = map_indexed(b, |rep| {
        let sample = panel.resample(&resample_indices(n, seed, rep));
        match stat.compute(&sample) {
            Ok(v) if v.len() == names.len() => Some(v),
            Ok(_) => None,
            Err(e) => {
                log::debug!("replication {rep} failed: {e}");
                None
            }
        }
    });
    let failure_count = replications
        .iter()
        .filter(|r| {
            r.as_ref()
                .is_none_or(|v| v.iter().any(|x| x.is_none() || !x.unwrap().is_finite()))
        })
        .count();

    let k = names.len();
    let mut bias_corrected = vec![None; k];
    let mut replication_mean = vec![None; k];
    let mut q025 = vec![None; k];
    let mut q975 = vec![None; k];
    let mut n_valid = vec![0; k];
    for s in 0..k {
        let mut vals: Vec<f64> = replications
            .iter()
            .filter_map(|r| r.as_ref().and_then(|v| v[s]))
            .filter(|x| x.is_finite())
            .collect();
        n_valid[s] = vals.len();
        if vals.is_empty() {
            continue;
        }
        vals.sort_by(f64::total_cmp);
        let m = mean(&vals);
        replication_mean[s] = Some(m);
        q025[s] = Some(quantile_sorted(&vals, 0.025));
        q975[s] = Some(quantile_sorted(&vals, 0.975));
        if 2 * vals.len() > b {
            bias_corrected[s] = point[s].filter(|p| p.is_finite()).map(|p| 2.0 * p - m);
        }
    }
    if failure_count > 0 {
        log::warn!("{failure_count} of {b} bootstrap replications failed or were flagged");
    }
    Ok(BootstrapResult {
        b,
        seed,
        names,
        point,
        bias_corrected,
        replication_mean,
        q025,
        q975,
        n_valid,
        failure_count,
        replications,
    })
}
