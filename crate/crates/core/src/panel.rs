//! Two-period household panels: container, CSV ingestion, covariate
//! standardization and empirical-CDF rank transforms.

use std::collections::HashMap;
use std::path::Path;

use log::warn;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{FeltError, Result};

/// Balanced two-period panel of households.
///
/// `z` always carries the constant in column 0; columns `1..=L` hold the
/// covariates named in `covariate_names`.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub ids: Vec<String>,
    pub y1: Vec<f64>,
    pub y2: Vec<f64>,
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    pub z: DMatrix<f64>,
    pub covariate_names: Vec<String>,
}

impl Panel {
    /// Build a panel from raw columns. `covariates` is n x L, without the
    /// constant; it is prepended here.
    pub fn new(
        ids: Vec<String>,
        y1: Vec<f64>,
        y2: Vec<f64>,
        x1: Vec<f64>,
        x2: Vec<f64>,
        covariates: DMatrix<f64>,
        covariate_names: Vec<String>,
    ) -> Result<Self> {
        let n = ids.len();
        if n < 2 {
            return Err(FeltError::InsufficientData(format!(
                "panel needs at least 2 households, got {n}"
            )));
        }
        for (name, col) in [("Y1", &y1), ("Y2", &y2), ("X1", &x1), ("X2", &x2)] {
            if col.len() != n {
                return Err(FeltError::Dimension {
                    expected: n,
                    got: col.len(),
                });
            }
            if col.iter().any(|v| !v.is_finite()) {
                return Err(FeltError::InvalidInput(format!(
                    "non-finite value in {name}"
                )));
            }
        }
        if covariates.nrows() != n && covariates.ncols() > 0 {
            return Err(FeltError::Dimension {
                expected: n,
                got: covariates.nrows(),
            });
        }
        if covariates.ncols() != covariate_names.len() {
            return Err(FeltError::Dimension {
                expected: covariates.ncols(),
                got: covariate_names.len(),
            });
        }
        if covariates.iter().any(|v| !v.is_finite()) {
            return Err(FeltError::InvalidInput("non-finite covariate".into()));
        }
        let l = covariates.ncols();
        let z = DMatrix::from_fn(
            n,
            l + 1,
            |i, j| if j == 0 { 1.0 } else { covariates[(i, j - 1)] },
        );
        Ok(Panel {
            ids,
            y1,
            y2,
            x1,
            x2,
            z,
            covariate_names,
        })
    }

    pub fn n(&self) -> usize {
        self.ids.len()
    }

    /// Number of covariates L (excluding the constant).
    pub fn n_covariates(&self) -> usize {
        self.z.ncols() - 1
    }

    pub fn y(&self, period: usize) -> &[f64] {
        match period {
            1 => &self.y1,
            2 => &self.y2,
            _ => panic!("period must be 1 or 2"),
        }
    }

    pub fn x(&self, period: usize) -> &[f64] {
        match period {
            1 => &self.x1,
            2 => &self.x2,
            _ => panic!("period must be 1 or 2"),
        }
    }

    /// Row i of z, constant included.
    pub fn z_row(&self, i: usize) -> Vec<f64> {
        self.z.row(i).iter().copied().collect()
    }

    pub fn delta_x(&self) -> Vec<f64> {
        self.x2.iter().zip(&self.x1).map(|(b, a)| b - a).collect()
    }

    pub fn x_bar(&self) -> Vec<f64> {
        self.x2
            .iter()
            .zip(&self.x1)
            .map(|(b, a)| 0.5 * (a + b))
            .collect()
    }

    /// Covariates without the constant column.
    pub fn covariates(&self) -> DMatrix<f64> {
        self.z.columns(1, self.n_covariates()).into_owned()
    }

    /// Sample column means of z (constant included).
    pub fn z_mean(&self) -> Vec<f64> {
        (0..self.z.ncols())
            .map(|j| self.z.column(j).mean())
            .collect()
    }

    /// True when every covariate lies in [0, 1].
    pub fn is_standardized(&self) -> bool {
        self.z
            .columns(1, self.n_covariates())
            .iter()
            .all(|v| (0.0..=1.0).contains(v))
    }

    /// New panel made of the households at `indices` (repeats allowed).
    pub fn resample(&self, indices: &[usize]) -> Panel {
        let pick = |v: &[f64]| indices.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Panel {
            ids: indices.iter().map(|&i| self.ids[i].clone()).collect(),
            y1: pick(&self.y1),
            y2: pick(&self.y2),
            x1: pick(&self.x1),
            x2: pick(&self.x2),
            z: self.z.select_rows(indices.iter()),
            covariate_names: self.covariate_names.clone(),
        }
    }
}

/// Column names of a panel CSV file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PanelSchema {
    pub id: String,
    pub y1: String,
    pub y2: String,
    pub x1: String,
    pub x2: String,
    /// Covariate columns, in order. `None` means every column not named above.
    #[serde(default)]
    pub covariates: Option<Vec<String>>,
}

impl Default for PanelSchema {
    fn default() -> Self {
        PanelSchema {
            id: "id".into(),
            y1: "Y1".into(),
            y2: "Y2".into(),
            x1: "X1".into(),
            x2: "X2".into(),
            covariates: None,
        }
    }
}

/// A data row that was skipped during ingestion.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowRejection {
    /// 1-based data row number (header excluded).
    pub row: usize,
    pub column: String,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct LoadedPanel {
    pub panel: Panel,
    pub rejected: Vec<RowRejection>,
}

fn is_missing(cell: &str) -> bool {
    let c = cell.trim();
    c.is_empty() || c == "NA"
}

/// Read a panel from a comma-delimited CSV with a header row.
///
/// Rows with a missing ("NA" or empty) or non-numeric cell in any used column
/// are skipped and reported; row order is file order.
pub fn load_panel(path: impl AsRef<Path>, schema: &PanelSchema) -> Result<LoadedPanel> {
    let file = std::fs::File::open(path.as_ref())?;
    read_panel(file, schema)
}

pub fn read_panel<R: std::io::Read>(reader: R, schema: &PanelSchema) -> Result<LoadedPanel> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let index: HashMap<&str, usize> = headers
        .iter()
        .enumerate()
        .map(|(i, h)| (h.trim(), i))
        .collect();
    let col = |name: &str| -> Result<usize> {
        index
            .get(name)
            .copied()
            .ok_or_else(|| FeltError::Schema(format!("missing column '{name}'")))
    };
    let id_col = col(&schema.id)?;
    let numeric = [
        (schema.y1.as_str(), col(&schema.y1)?),
        (schema.y2.as_str(), col(&schema.y2)?),
        (schema.x1.as_str(), col(&schema.x1)?),
        (schema.x2.as_str(), col(&schema.x2)?),
    ];
    let cov_names: Vec<String> = match &schema.covariates {
        Some(c) => c.clone(),
        None => {
            let used = [&schema.id, &schema.y1, &schema.y2, &schema.x1, &schema.x2];
            headers
                .iter()
                .map(|h| h.trim().to_string())
                .filter(|h| !used.iter().any(|u| u.as_str() == h))
                .collect()
        }
    };
    let cov_cols = cov_names
        .iter()
        .map(|c| col(c))
        .collect::<Result<Vec<_>>>()?;

    let mut ids = Vec::new();
    let mut cols: [Vec<f64>; 4] = Default::default();
    let mut cov_vals: Vec<f64> = Vec::new();
    let mut rejected = Vec::new();
    'rows: for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let mut vals = [0.0; 4];
        for (slot, (name, c)) in numeric.iter().enumerate() {
            match parse_cell(rec.get(*c).unwrap_or("")) {
                Ok(v) => vals[slot] = v,
                Err(reason) => {
                    rejected.push(RowRejection {
                        row: r + 1,
                        column: name.to_string(),
                        reason,
                    });
                    continue 'rows;
                }
            }
        }
        let mut covs = Vec::with_capacity(cov_cols.len());
        for (name, &c) in cov_names.iter().zip(&cov_cols) {
            match parse_cell(rec.get(c).unwrap_or("")) {
                Ok(v) => covs.push(v),
                Err(reason) => {
                    rejected.push(RowRejection {
                        row: r + 1,
                        column: name.clone(),
                        reason,
                    });
                    continue 'rows;
                }
            }
        }
        ids.push(rec.get(id_col).unwrap_or("").trim().to_string());
        for (dst, v) in cols.iter_mut().zip(vals) {
            dst.push(v);
        }
        cov_vals.extend(covs);
    }
    if ids.is_empty() {
        return Err(FeltError::NoUsableRows);
    }
    if !rejected.is_empty() {
        warn!("{} rows rejected during panel ingestion", rejected.len());
    }
    let n = ids.len();
    let covariates = DMatrix::from_row_slice(n, cov_names.len(), &cov_vals);
    let [y1, y2, x1, x2] = cols;
    let panel = Panel::new(ids, y1, y2, x1, x2, covariates, cov_names)?;
    Ok(LoadedPanel { panel, rejected })
}

fn parse_cell(cell: &str) -> std::result::Result<f64, String> {
    if is_missing(cell) {
        return Err("missing value".into());
    }
    match cell.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        Ok(_) => Err(format!("non-finite value '{cell}'")),
        Err(_) => Err(format!("non-numeric value '{cell}'")),
    }
}

/// Write the panel as CSV using the default schema's column names.
///
/// Values are written in shortest round-trip form, so reading the file back
/// reproduces every finite value bit for bit.
pub fn write_panel<W: std::io::Write>(panel: &Panel, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec![
        "id".to_string(),
        "Y1".into(),
        "Y2".into(),
        "X1".into(),
        "X2".into(),
    ];
    header.extend(panel.covariate_names.iter().cloned());
    w.write_record(&header)?;
    for i in 0..panel.n() {
        let mut rec = vec![
            panel.ids[i].clone(),
            fmt_f64(panel.y1[i]),
            fmt_f64(panel.y2[i]),
            fmt_f64(panel.x1[i]),
            fmt_f64(panel.x2[i]),
        ];
        for j in 1..panel.z.ncols() {
            rec.push(fmt_f64(panel.z[(i, j)]));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_panel(panel: &Panel, path: impl AsRef<Path>) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_panel(panel, std::io::BufWriter::new(f))
}

pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// Which covariates are binary and must not be rescaled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StandardizeOptions {
    /// Lower and upper winsorizing probabilities.
    pub caps: (f64, f64),
    #[serde(default)]
    pub binary: Vec<String>,
}

impl Default for StandardizeOptions {
    fn default() -> Self {
        StandardizeOptions {
            caps: (0.05, 0.95),
            binary: Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Standardized {
    pub panel: Panel,
    pub warnings: Vec<String>,
}

/// Inward order statistics used as winsorizing caps: the lower cap is the
/// order statistic at ceil((n-1)p_low), the upper at floor((n-1)p_high).
///
/// Both caps are sample values, which makes winsorize-then-rescale idempotent.
pub fn winsor_caps(values: &[f64], low: f64, high: f64) -> (f64, f64) {
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    let last = (s.len() - 1) as f64;
    let lo = ((last * low).ceil() as usize).min(s.len() - 1);
    let hi = ((last * high).floor() as usize).min(s.len() - 1);
    (s[lo], s[hi.max(lo)])
}

/// Top- and bottom-code each continuous covariate at the cap percentiles and
/// map it affinely onto [0, 1]. Binary covariates pass through unchanged.
pub fn standardize_covariates(panel: &Panel, opts: &StandardizeOptions) -> Result<Standardized> {
    let (low, high) = opts.caps;
    if !(0.0 < low && low < high && high < 1.0) {
        return Err(FeltError::InvalidInput(format!(
            "percentile caps must satisfy 0 < low < high < 1, got ({low}, {high})"
        )));
    }
    for b in &opts.binary {
        if !panel.covariate_names.contains(b) {
            return Err(FeltError::Schema(format!("unknown binary covariate '{b}'")));
        }
    }
    let mut out = panel.clone();
    let mut warnings = Vec::new();
    for (j, name) in panel.covariate_names.iter().enumerate() {
        let col: Vec<f64> = panel.z.column(j + 1).iter().copied().collect();
        if opts.binary.contains(name) {
            if col.iter().any(|&v| v != 0.0 && v != 1.0) {
                return Err(FeltError::InvalidInput(format!(
                    "covariate '{name}' flagged binary but has values outside {{0,1}}"
                )));
            }
            continue;
        }
        let (lo, hi) = winsor_caps(&col, low, high);
        let scaled: Vec<f64> = if hi > lo {
            col.iter()
                .map(|&v| (v.clamp(lo, hi) - lo) / (hi - lo))
                .collect()
        } else {
            let msg = format!("covariate '{name}' has zero spread after winsorizing; set to 0");
            warn!("{msg}");
            warnings.push(msg);
            vec![0.0; col.len()]
        };
        for (i, v) in scaled.into_iter().enumerate() {
            out.z[(i, j + 1)] = v;
        }
    }
    Ok(Standardized {
        panel: out,
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankRule {
    /// (r - 0.5) / n with tie-averaged ranks r.
    MidRank,
}

/// Empirical-CDF map built from a sample.
///
/// Sample points map to their mid-rank value; other points are linearly
/// interpolated between neighbouring sample values and clamped to
/// [0.5/n, 1 - 0.5/n] outside the sample range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankMap {
    pub rule: RankRule,
    pub n: usize,
    /// Distinct sorted sample values.
    pub knots: Vec<f64>,
    /// Transformed value at each knot.
    pub levels: Vec<f64>,
}

impl RankMap {
    pub fn from_sample(values: &[f64]) -> Result<Self> {
        rank_transform(values).map(|(m, _)| m)
    }

    pub fn map(&self, y: f64) -> f64 {
        let lo = 0.5 / self.n as f64;
        let hi = 1.0 - lo;
        let k = &self.knots;
        if y < k[0] {
            return lo;
        }
        if y > k[k.len() - 1] {
            return hi;
        }
        match k.binary_search_by(|p| p.total_cmp(&y)) {
            Ok(j) => self.levels[j],
            Err(j) => {
                // k[j-1] < y < k[j]
                let (a, b) = (k[j - 1], k[j]);
                let w = (y - a) / (b - a);
                self.levels[j - 1] + w * (self.levels[j] - self.levels[j - 1])
            }
        }
    }

    /// Inverse of `map` on the knot range (used to report results on the
    /// original outcome scale).
    pub fn unmap(&self, u: f64) -> f64 {
        let l = &self.levels;
        if u <= l[0] {
            return self.knots[0];
        }
        if u >= l[l.len() - 1] {
            return self.knots[l.len() - 1];
        }
        let j = l.partition_point(|&v| v < u);
        if l[j] == u {
            return self.knots[j];
        }
        let w = (u - l[j - 1]) / (l[j] - l[j - 1]);
        self.knots[j - 1] + w * (self.knots[j] - self.knots[j - 1])
    }
}

/// Mid-rank empirical CDF transform: the value with (tie-averaged, 1-based)
/// rank r maps to (r - 0.5)/n, strictly inside (0, 1).
pub fn rank_transform(values: &[f64]) -> Result<(RankMap, Vec<f64>)> {
    let n = values.len();
    if n < 2 {
        return Err(FeltError::InsufficientData(format!(
            "rank transform needs at least 2 values, got {n}"
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(FeltError::InvalidInput(
            "non-finite value in rank transform".into(),
        ));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; n];
    let mut knots = Vec::new();
    let mut levels = Vec::new();
    let nf = n as f64;
    let mut start = 0;
    while start < n {
        let v = values[order[start]];
        let mut end = start + 1;
        while end < n && values[order[end]] == v {
            end += 1;
        }
        // 1-based ranks start+1..=end, averaged
        let avg_rank = 0.5 * ((start + 1) + end) as f64;
        let u = (avg_rank - 0.5) / nf;
        for &i in &order[start..end] {
            out[i] = u;
        }
        knots.push(v);
        levels.push(u);
        start = end;
    }
    Ok((
        RankMap {
            rule: RankRule::MidRank,
            n,
            knots,
            levels,
        },
        out,
    ))
}
