//! Threshold binarization and the switcher-based estimators.
//!
//! Cutting period-t outcomes at y_t gives `D_t = 1{Y_t >= y_t}`. Among
//! switchers (D_1 + D_2 = 1) with logistic errors,
//! `P(D_2 = 1 | switch, X) = Lambda(dX beta - gamma(y_1, y_2))` where
//! `gamma(y_1, y_2) = h_2^-(y_2) - h_1^-(y_1)`, free of the fixed effect.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{FeltError, Result};
use crate::panel::Panel;
use crate::par::map_slice;
use crate::stats::quantile;
use crate::synth::logistic_cdf;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinarizedPair {
    pub y1: f64,
    pub y2: f64,
    pub d1: Vec<u8>,
    pub d2: Vec<u8>,
    pub n_switchers: usize,
    pub warnings: Vec<String>,
}

impl BinarizedPair {
    pub fn is_switcher(&self, i: usize) -> bool {
        self.d1[i] + self.d2[i] == 1
    }

    pub fn switchers(&self) -> Vec<usize> {
        (0..self.d1.len())
            .filter(|&i| self.is_switcher(i))
            .collect()
    }
}

pub fn binarize(panel: &Panel, y1: f64, y2: f64) -> BinarizedPair {
    let mut warnings = Vec::new();
    let mut cut = |ys: &[f64], thr: f64, t: usize| -> Vec<u8> {
        let min = ys.iter().cloned().fold(f64::INFINITY, f64::min);
        if thr <= min {
            warnings.push(format!(
                "threshold {thr} at or below the period-{t} minimum {min}; D{t} is all ones"
            ));
        }
        ys.iter().map(|&y| (y >= thr) as u8).collect()
    };
    let d1 = cut(panel.y(1), y1, 1);
    let d2 = cut(panel.y(2), y2, 2);
    let n_switchers = d1.iter().zip(&d2).filter(|(a, b)| *a + *b == 1).count();
    BinarizedPair {
        y1,
        y2,
        d1,
        d2,
        n_switchers,
        warnings,
    }
}

/// Within-period quantile thresholds at 0.1, ..., 0.9, keeping only distinct
/// values strictly above the sample minimum.
pub fn decile_grid(values: &[f64]) -> Vec<f64> {
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut g: Vec<f64> = (1..=9)
        .map(|j| quantile(values, j as f64 / 10.0))
        .filter(|&q| q > min)
        .collect();
    g.dedup();
    g
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaEstimate {
    pub beta: Vec<f64>,
    pub gamma: f64,
    pub se_beta: Vec<f64>,
    pub se_gamma: f64,
    pub n_switchers: usize,
    pub log_likelihood: f64,
    pub iterations: usize,
}

/// Logistic log-likelihood of binary `s` on rows of `w`.
struct LogitSample {
    w: DMatrix<f64>,
    s: Vec<f64>,
}

struct LogitFit {
    theta: DVector<f64>,
    hessian: DMatrix<f64>,
    log_likelihood: f64,
    iterations: usize,
}

fn log_lambda(v: f64) -> f64 {
    // ln Lambda(v) = -ln(1 + e^-v), stable for both signs
    if v >= 0.0 {
        -(-v).exp().ln_1p()
    } else {
        v - v.exp().ln_1p()
    }
}

/// Accumulates log-likelihood, gradient and negative Hessian.
trait Likelihood {
    fn dim(&self) -> usize;
    fn n_obs(&self) -> usize;
    fn eval(&self, theta: &DVector<f64>) -> (f64, DVector<f64>, DMatrix<f64>);
}

impl Likelihood for LogitSample {
    fn dim(&self) -> usize {
        self.w.ncols()
    }

    fn n_obs(&self) -> usize {
        self.s.len()
    }

    fn eval(&self, theta: &DVector<f64>) -> (f64, DVector<f64>, DMatrix<f64>) {
        let k = self.dim();
        let mut ll = 0.0;
        let mut g = DVector::zeros(k);
        let mut h = DMatrix::zeros(k, k);
        for (i, &s) in self.s.iter().enumerate() {
            let w = self.w.row(i).transpose();
            let v = w.dot(theta);
            let p = logistic_cdf(v);
            ll += s * log_lambda(v) + (1.0 - s) * log_lambda(-v);
            g.axpy(s - p, &w, 1.0);
            h.ger(p * (1.0 - p), &w, &w, 1.0);
        }
        (ll, g, h)
    }
}

/// Damped Newton ascent. Separation is declared when step halving cannot
/// improve the likelihood while some coefficient exceeds 50 in absolute
/// value; the same stall at moderate coefficients is a convergence failure.
fn newton<L: Likelihood>(lik: &L, start: DVector<f64>) -> Result<LogitFit> {
    const DIVERGED: f64 = 50.0;
    let mut theta = start;
    let nobs = lik.n_obs().max(1) as f64;
    let (mut ll, mut g, mut h) = lik.eval(&theta);
    for iter in 0..200 {
        if g.amax() / nobs <= 1e-9 {
            return Ok(LogitFit {
                theta,
                hessian: h,
                log_likelihood: ll,
                iterations: iter,
            });
        }
        let step = match h.clone().cholesky() {
            Some(c) => c.solve(&g),
            None => match h.clone().lu().solve(&g) {
                Some(s) => s,
                None => return Err(FeltError::Separation),
            },
        };
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand = &theta + &step * t;
            let (ll_c, g_c, h_c) = lik.eval(&cand);
            if ll_c.is_finite() && ll_c >= ll - 1e-12 * ll.abs().max(1.0) {
                theta = cand;
                ll = ll_c;
                g = g_c;
                h = h_c;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            return Err(if theta.amax() > DIVERGED {
                FeltError::Separation
            } else {
                FeltError::NoConvergence(format!("logit step halving failed at iteration {iter}"))
            });
        }
    }
    Err(if theta.amax() > DIVERGED {
        FeltError::Separation
    } else {
        FeltError::NoConvergence("logit Newton iterations exhausted".into())
    })
}

fn symmetric_inverse(h: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    h.clone()
        .cholesky()
        .map(|c| c.inverse())
        .or_else(|| h.clone().try_inverse())
}

/// Switcher logit for one threshold pair with regressors W = (dX, -1).
pub fn fit_pair_logit(pair: &BinarizedPair, panel: &Panel) -> Result<ThetaEstimate> {
    let dx = panel.delta_x();
    let sw = pair.switchers();
    let min_switchers = 3; // dim(W) + 1
    if sw.len() < min_switchers {
        return Err(FeltError::InsufficientData(format!(
            "{} switchers at thresholds ({}, {}); need at least {min_switchers}",
            sw.len(),
            pair.y1,
            pair.y2
        )));
    }
    let s: Vec<f64> = sw.iter().map(|&i| pair.d2[i] as f64).collect();
    let ups = s.iter().filter(|&&v| v == 1.0).count();
    if ups == 0 || ups == s.len() {
        return Err(FeltError::Separation);
    }
    // constant dX among switchers: beta is not identified apart from gamma,
    // so it is normalized to 0 and only gamma is fitted
    if sw.iter().all(|&i| dx[i] == dx[sw[0]]) {
        log::warn!(
            "dX is constant among switchers at ({}, {}); beta fixed at 0",
            pair.y1,
            pair.y2
        );
        let lik = LogitSample {
            w: DMatrix::from_element(sw.len(), 1, -1.0),
            s,
        };
        let fit = newton(&lik, DVector::zeros(1))?;
        let cov = symmetric_inverse(&fit.hessian).ok_or(FeltError::Separation)?;
        return Ok(ThetaEstimate {
            beta: vec![0.0],
            gamma: fit.theta[0],
            se_beta: vec![f64::NAN],
            se_gamma: cov[(0, 0)].max(0.0).sqrt(),
            n_switchers: sw.len(),
            log_likelihood: fit.log_likelihood,
            iterations: fit.iterations,
        });
    }
    // with one regressor and an intercept the sample is separable exactly
    // when the dX ranges of up- and down-movers do not overlap
    let range = |up: f64| {
        sw.iter()
            .zip(&s)
            .filter(|(_, &v)| v == up)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (&i, _)| {
                (lo.min(dx[i]), hi.max(dx[i]))
            })
    };
    let (up_lo, up_hi) = range(1.0);
    let (dn_lo, dn_hi) = range(0.0);
    if !up_lo.is_finite() || !dn_lo.is_finite() || dn_hi <= up_lo || up_hi <= dn_lo {
        return Err(FeltError::Separation);
    }
    let w = DMatrix::from_fn(sw.len(), 2, |r, c| if c == 0 { dx[sw[r]] } else { -1.0 });
    let lik = LogitSample { w, s };
    let fit = newton(&lik, DVector::zeros(2))?;
    let cov = symmetric_inverse(&fit.hessian).ok_or(FeltError::Separation)?;
    Ok(ThetaEstimate {
        beta: vec![fit.theta[0]],
        gamma: fit.theta[1],
        se_beta: vec![cov[(0, 0)].max(0.0).sqrt()],
        se_gamma: cov[(1, 1)].max(0.0).sqrt(),
        n_switchers: sw.len(),
        log_likelihood: fit.log_likelihood,
        iterations: fit.iterations,
    })
}

/// Independent pair fits over a threshold grid, in grid1-major order.
pub fn fit_pair_grid(panel: &Panel, grid1: &[f64], grid2: &[f64]) -> Vec<Result<ThetaEstimate>> {
    let pairs: Vec<(f64, f64)> = grid1
        .iter()
        .flat_map(|&a| grid2.iter().map(move |&b| (a, b)))
        .collect();
    map_slice(&pairs, |&(a, b)| {
        fit_pair_logit(&binarize(panel, a, b), panel)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositeLogit {
    pub beta: f64,
    pub se_beta: f64,
    pub grid1: Vec<f64>,
    pub grid2: Vec<f64>,
    /// gamma[i][j] for (grid1[i], grid2[j]); `None` for dropped pairs.
    pub gamma: Vec<Vec<Option<f64>>>,
    pub gamma_se: Vec<Vec<Option<f64>>>,
    /// Parameter index of each kept pair's gamma (0 is beta).
    pub param_index: Vec<Vec<Option<usize>>>,
    /// Household-clustered sandwich covariance of (beta, gammas).
    pub covariance: DMatrix<f64>,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub warnings: Vec<String>,
}

impl CompositeLogit {
    /// Standard error of sum_c w_c gamma[i_c][j_c]; `None` if a cell is missing.
    pub fn contrast_se(&self, terms: &[(usize, usize, f64)]) -> Option<f64> {
        let k = self.covariance.nrows();
        let mut a = DVector::zeros(k);
        for &(i, j, w) in terms {
            a[self.param_index[i][j]?] += w;
        }
        Some(a.dot(&(&self.covariance * &a)).max(0.0).sqrt())
    }

    /// gamma matrix as CSV: header row of grid2 thresholds, one row per grid1
    /// threshold; dropped cells are empty.
    pub fn write_gamma_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["y1\\y2".to_string()];
        header.extend(self.grid2.iter().map(|v| format!("{v:?}")));
        w.write_record(&header)?;
        for (i, row) in self.gamma.iter().enumerate() {
            let mut rec = vec![format!("{:?}", self.grid1[i])];
            rec.extend(
                row.iter()
                    .map(|c| c.map(|v| format!("{v:?}")).unwrap_or_default()),
            );
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

struct CompositeSample {
    /// (household, pair parameter index, dX, D2) per switcher observation.
    obs: Vec<(usize, usize, f64, f64)>,
    dim: usize,
}

impl Likelihood for CompositeSample {
    fn dim(&self) -> usize {
        self.dim
    }

    fn n_obs(&self) -> usize {
        self.obs.len()
    }

    fn eval(&self, theta: &DVector<f64>) -> (f64, DVector<f64>, DMatrix<f64>) {
        let k = self.dim;
        let mut ll = 0.0;
        let mut g = DVector::zeros(k);
        let mut h = DMatrix::zeros(k, k);
        for &(_, j, dx, s) in &self.obs {
            let v = dx * theta[0] - theta[j];
            let p = logistic_cdf(v);
            ll += s * log_lambda(v) + (1.0 - s) * log_lambda(-v);
            let r = s - p;
            g[0] += r * dx;
            g[j] -= r;
            let wgt = p * (1.0 - p);
            h[(0, 0)] += wgt * dx * dx;
            h[(0, j)] -= wgt * dx;
            h[(j, 0)] -= wgt * dx;
            h[(j, j)] += wgt;
        }
        (ll, g, h)
    }
}

/// Composite switcher logit: one beta shared by every threshold pair, one
/// gamma per pair. Pairs with fewer than 3 switchers or no variation in D2
/// among switchers are dropped with a warning.
pub fn fit_composite_logit(panel: &Panel, grid1: &[f64], grid2: &[f64]) -> Result<CompositeLogit> {
    if grid1.is_empty() || grid2.is_empty() {
        return Err(FeltError::InvalidInput("empty threshold grid".into()));
    }
    let dx = panel.delta_x();
    let mut warnings = Vec::new();
    let mut obs = Vec::new();
    let mut param_index = vec![vec![None; grid2.len()]; grid1.len()];
    let mut next = 1;
    for (i, &a) in grid1.iter().enumerate() {
        for (j, &b) in grid2.iter().enumerate() {
            let pair = binarize(panel, a, b);
            let sw = pair.switchers();
            let ups = sw.iter().filter(|&&h| pair.d2[h] == 1).count();
            if sw.len() < 3 || ups == 0 || ups == sw.len() {
                warnings.push(format!(
                    "dropped pair ({a}, {b}): {} switchers, {ups} moving up",
                    sw.len()
                ));
                continue;
            }
            param_index[i][j] = Some(next);
            for &h in &sw {
                obs.push((h, next, dx[h], pair.d2[h] as f64));
            }
            next += 1;
        }
    }
    if next == 1 {
        return Err(FeltError::InsufficientData(
            "every threshold pair was dropped".into(),
        ));
    }
    let dim = next;
    let sample = CompositeSample { obs, dim };
    let fit = newton(&sample, DVector::zeros(dim))?;
    let hinv = symmetric_inverse(&fit.hessian).ok_or(FeltError::Separation)?;

    // household-clustered scores
    let mut scores: Vec<DVector<f64>> = vec![DVector::zeros(dim); panel.n()];
    for &(hh, j, d, s) in &sample.obs {
        let v = d * fit.theta[0] - fit.theta[j];
        let r = s - logistic_cdf(v);
        scores[hh][0] += r * d;
        scores[hh][j] -= r;
    }
    let mut meat = DMatrix::zeros(dim, dim);
    for sc in &scores {
        if sc.amax() > 0.0 {
            meat.ger(1.0, sc, sc, 1.0);
        }
    }
    let covariance = &hinv * meat * &hinv;

    let gamma = param_index
        .iter()
        .map(|row| row.iter().map(|p| p.map(|k| fit.theta[k])).collect())
        .collect();
    let gamma_se = param_index
        .iter()
        .map(|row| {
            row.iter()
                .map(|p| p.map(|k| covariance[(k, k)].max(0.0).sqrt()))
                .collect()
        })
        .collect();
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(CompositeLogit {
        beta: fit.theta[0],
        se_beta: covariance[(0, 0)].max(0.0).sqrt(),
        grid1: grid1.to_vec(),
        grid2: grid2.to_vec(),
        gamma,
        gamma_se,
        param_index,
        covariance,
        log_likelihood: fit.log_likelihood,
        iterations: fit.iterations,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracedTransforms {
    pub anchor: f64,
    pub grid1: Vec<f64>,
    /// h_1^- on grid1, anchored so that h_1^-(anchor) = 0.
    pub h1_inverse: Vec<Option<f64>>,
    pub grid2: Vec<f64>,
    pub h2_inverse: Vec<Option<f64>>,
    pub warnings: Vec<String>,
}

impl TracedTransforms {
    /// Two-column CSV (y, h_inverse) for period t; untraced points omitted.
    pub fn write_csv<W: std::io::Write>(&self, period: usize, writer: W) -> Result<()> {
        let (grid, h) = if period == 1 {
            (&self.grid1, &self.h1_inverse)
        } else {
            (&self.grid2, &self.h2_inverse)
        };
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["y", "h_inverse"])?;
        for (y, v) in grid.iter().zip(h) {
            if let Some(v) = v {
                w.write_record([format!("{y:?}"), format!("{v:?}")])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// h_2^-(y_2) = gamma(y_0, y_2) and h_1^-(y_1) = mean over y_2 of
/// gamma(y_0, y_2) - gamma(y_1, y_2), with h_1^-(y_0) = 0.
pub fn trace_transforms(
    gamma: &[Vec<Option<f64>>],
    grid1: &[f64],
    grid2: &[f64],
    anchor: f64,
) -> Result<TracedTransforms> {
    let a = grid1.iter().position(|&g| g == anchor).ok_or_else(|| {
        FeltError::InvalidInput(format!("anchor {anchor} is not a grid1 threshold"))
    })?;
    if gamma.len() != grid1.len() || gamma.iter().any(|r| r.len() != grid2.len()) {
        return Err(FeltError::InvalidInput(
            "gamma matrix does not match the grids".into(),
        ));
    }
    let mut warnings = Vec::new();
    let h2: Vec<Option<f64>> = gamma[a].clone();
    let missing2 = h2.iter().filter(|v| v.is_none()).count();
    if missing2 > 0 {
        warnings.push(format!(
            "{missing2} grid2 points untraced (anchor row has missing cells)"
        ));
    }
    let h1: Vec<Option<f64>> = (0..grid1.len())
        .map(|i| {
            if i == a {
                return Some(0.0);
            }
            let diffs: Vec<f64> = (0..grid2.len())
                .filter_map(|j| Some(gamma[a][j]? - gamma[i][j]?))
                .collect();
            if diffs.is_empty() {
                warnings.push(format!(
                    "grid1 point {} untraced (no overlapping cells)",
                    grid1[i]
                ));
                None
            } else {
                Some(diffs.iter().sum::<f64>() / diffs.len() as f64)
            }
        })
        .collect();
    Ok(TracedTransforms {
        anchor,
        grid1: grid1.to_vec(),
        h1_inverse: h1,
        grid2: grid2.to_vec(),
        h2_inverse: h2,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxScore {
    /// Unit-norm coefficient direction.
    pub direction: Vec<f64>,
    pub gamma: f64,
    pub score: i64,
    pub n_switchers: usize,
}

fn sgn(v: f64) -> i64 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// Manski score sum_i m_i sgn(w_i' beta - gamma), m_i = D2 - D1 in {-1, 1}.
pub fn manski_score(w: &DMatrix<f64>, m: &[f64], beta: &[f64], gamma: f64) -> i64 {
    (0..w.nrows())
        .map(|i| {
            let v: f64 = w.row(i).iter().zip(beta).map(|(a, b)| a * b).sum();
            (m[i] as i64) * sgn(v - gamma)
        })
        .sum()
}

/// Unit directions on the sphere: {-1, 1} in one dimension, `resolution`
/// equally spaced angles in two.
pub fn sphere_grid(dim: usize, resolution: usize) -> Result<Vec<Vec<f64>>> {
    match dim {
        1 => Ok(vec![vec![-1.0], vec![1.0]]),
        2 => {
            let r = resolution.max(4);
            Ok((0..r)
                .map(|k| {
                    let a = 2.0 * std::f64::consts::PI * k as f64 / r as f64;
                    vec![a.cos(), a.sin()]
                })
                .collect())
        }
        d => Err(FeltError::Unsupported(format!(
            "maximum score grid search in dimension {d} (max 2)"
        ))),
    }
}

/// Grid maximization of the Manski score. For each direction every distinct
/// score level in gamma is visited exactly (candidates are midpoints between
/// sorted index values plus one point beyond each end). Ties: first direction
/// in grid order, then the midpoint of the first contiguous run of maximal
/// gamma candidates.
pub fn max_score(w: &DMatrix<f64>, m: &[f64], resolution: usize) -> Result<MaxScore> {
    let n = w.nrows();
    if n == 0 {
        return Err(FeltError::InsufficientData("no switchers".into()));
    }
    let dirs = sphere_grid(w.ncols(), resolution)?;
    let mut best: Option<MaxScore> = None;
    for b in dirs {
        let mut idx: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                (
                    w.row(i).iter().zip(&b).map(|(a, c)| a * c).sum::<f64>(),
                    m[i],
                )
            })
            .collect();
        idx.sort_by(|a, c| a.0.total_cmp(&c.0));
        // score at gamma below every index value: all sgn = +1
        let total: f64 = idx.iter().map(|p| p.1).sum();
        let mut cands = vec![(idx[0].0 - 1.0, total as i64)];
        let mut below = 0.0;
        let mut j = 0;
        while j < n {
            let v = idx[j].0;
            let mut k = j;
            while k < n && idx[k].0 == v {
                below += idx[k].1;
                k += 1;
            }
            // gamma just above v: points <= v have sgn -1
            let gpos = if k < n { 0.5 * (v + idx[k].0) } else { v + 1.0 };
            cands.push((gpos, (total - 2.0 * below) as i64));
            j = k;
        }
        let top = cands.iter().map(|c| c.1).max().unwrap();
        let first = cands.iter().position(|c| c.1 == top).unwrap();
        let mut last = first;
        while last + 1 < cands.len() && cands[last + 1].1 == top {
            last += 1;
        }
        let gamma = 0.5 * (cands[first].0 + cands[last].0);
        if best.as_ref().is_none_or(|bs| top > bs.score) {
            best = Some(MaxScore {
                direction: b,
                gamma,
                score: top,
                n_switchers: n,
            });
        }
    }
    Ok(best.unwrap())
}

/// Maximum score for a binarized pair with W = dX.
pub fn max_score_direction(
    pair: &BinarizedPair,
    panel: &Panel,
    resolution: usize,
) -> Result<MaxScore> {
    let dx = panel.delta_x();
    let sw = pair.switchers();
    let w = DMatrix::from_fn(sw.len(), 1, |r, _| dx[sw[r]]);
    let m: Vec<f64> = sw
        .iter()
        .map(|&i| pair.d2[i] as f64 - pair.d1[i] as f64)
        .collect();
    max_score(&w, &m, resolution)
}

/// Normalized sum of unit directions (the circular mean in two dimensions).
/// `None` when the directions cancel.
pub fn circular_mean(directions: &[Vec<f64>]) -> Option<Vec<f64>> {
    let d = directions.first()?.len();
    let mut s = vec![0.0; d];
    for v in directions {
        for (a, b) in s.iter_mut().zip(v) {
            *a += b;
        }
    }
    let norm = s.iter().map(|v| v * v).sum::<f64>().sqrt();
    (norm > 1e-12).then(|| s.iter().map(|v| v / norm).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn panel(y1: Vec<f64>, y2: Vec<f64>, x1: Vec<f64>, x2: Vec<f64>) -> Panel {
        let n = y1.len();
        Panel::new(
            (0..n).map(|i| i.to_string()).collect(),
            y1,
            y2,
            x1,
            x2,
            DMatrix::zeros(n, 0),
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn indicator_construction() {
        let p = panel(
            vec![1.0, 2.0, 3.0],
            vec![5.0, 5.0, 5.0],
            vec![0.0; 3],
            vec![0.0; 3],
        );
        let b = binarize(&p, 2.0, 10.0);
        assert_eq!(b.d1, vec![0, 1, 1]);
        assert_eq!(b.d2, vec![0, 0, 0]);
        assert_eq!(b.n_switchers, 2);
        let none = binarize(&p, 9.0, 10.0);
        assert_eq!(none.n_switchers, 0);
        assert!(binarize(&p, 0.5, 10.0).warnings.len() == 1);
    }

    #[test]
    fn all_up_switchers_separate() {
        let p = panel(
            vec![0.0, 0.0, 0.0, 1.0],
            vec![1.0, 1.0, 1.0, 1.0],
            vec![0.0, 1.0, 2.0, 0.0],
            vec![1.0, 1.0, 1.0, 0.0],
        );
        let b = binarize(&p, 0.5, 0.5);
        assert!(matches!(fit_pair_logit(&b, &p), Err(FeltError::Separation)));
    }

    #[test]
    fn pair_logit_matches_closed_form_on_saturated_design() {
        // dX in {0, 1}: the MLE reproduces the cell frequencies exactly.
        // dX = 0: 3 up of 4 -> -gamma = logit(3/4); dX = 1: 1 up of 4.
        let mut y1 = vec![];
        let mut y2 = vec![];
        let mut x2 = vec![];
        for (dx, up) in [(0.0, [1, 1, 1, 0]), (1.0, [1, 0, 0, 0])] {
            for u in up {
                y1.push(if u == 1 { 0.0 } else { 1.0 });
                y2.push(if u == 1 { 1.0 } else { 0.0 });
                x2.push(dx);
            }
        }
        let p = panel(y1, y2, vec![0.0; 8], x2);
        let est = fit_pair_logit(&binarize(&p, 0.5, 0.5), &p).unwrap();
        let logit = |q: f64| (q / (1.0 - q)).ln();
        assert_relative_eq!(est.gamma, -logit(0.75), epsilon = 1e-8);
        assert_relative_eq!(est.beta[0], logit(0.25) + est.gamma, epsilon = 1e-8);
    }

    #[test]
    fn trace_exact_gamma_recovers_transforms() {
        let g1 = [0.0, 1.0, 2.0, 3.0];
        let g2 = [0.5, 1.5, 2.5];
        let h1 = |y: f64| y * y;
        let h2 = |y: f64| 2.0 * y;
        let gamma: Vec<Vec<Option<f64>>> = g1
            .iter()
            .map(|&a| g2.iter().map(|&b| Some(h2(b) - h1(a))).collect())
            .collect();
        let tr = trace_transforms(&gamma, &g1, &g2, 1.0).unwrap();
        for (j, &b) in g2.iter().enumerate() {
            assert_relative_eq!(tr.h2_inverse[j].unwrap(), h2(b) - h1(1.0), epsilon = 1e-12);
        }
        for (i, &a) in g1.iter().enumerate() {
            assert_relative_eq!(tr.h1_inverse[i].unwrap(), h1(a) - h1(1.0), epsilon = 1e-12);
        }
        assert_eq!(tr.h1_inverse[1], Some(0.0));
        assert!(trace_transforms(&gamma, &g1, &g2, 7.0).is_err());
    }

    #[test]
    fn trace_with_missing_cells() {
        let gamma = vec![vec![Some(1.0), None], vec![None, None]];
        let tr = trace_transforms(&gamma, &[1.0, 2.0], &[1.0, 2.0], 1.0).unwrap();
        assert_eq!(tr.h2_inverse, vec![Some(1.0), None]);
        assert_eq!(tr.h1_inverse, vec![Some(0.0), None]);
        assert_eq!(tr.warnings.len(), 2);
    }

    #[test]
    fn score_scale_invariant() {
        let w = DMatrix::from_row_slice(4, 2, &[0.3, -1.0, 1.2, 0.4, -0.7, 0.1, 2.0, 2.0]);
        let m = [1.0, -1.0, 1.0, -1.0];
        let a = manski_score(&w, &m, &[0.6, 0.8], 0.2);
        let b = manski_score(&w, &m, &[1.2, 1.6], 0.4);
        assert_eq!(a, b);
    }

    #[test]
    fn max_score_separable_sample() {
        // m = sgn(x - 0.5) exactly: best direction +1, gamma in (0.4, 0.6)
        let xs = [0.1, 0.2, 0.4, 0.6, 0.9, 1.3];
        let w = DMatrix::from_column_slice(6, 1, &xs);
        let m: Vec<f64> = xs
            .iter()
            .map(|&x| if x > 0.5 { 1.0 } else { -1.0 })
            .collect();
        let ms = max_score(&w, &m, 0).unwrap();
        assert_eq!(ms.direction, vec![1.0]);
        assert_eq!(ms.score, 6);
        assert_relative_eq!(ms.gamma, 0.5, epsilon = 1e-12);
        // deterministic on repeat
        assert_eq!(max_score(&w, &m, 0).unwrap(), ms);
    }

    #[test]
    fn max_score_tie_takes_midpoint_of_first_run() {
        // all moving up: score is maximal for every gamma below min(x)
        let xs = [1.0, 2.0, 3.0];
        let w = DMatrix::from_column_slice(3, 1, &xs);
        let ms = max_score(&w, &[1.0, 1.0, 1.0], 0).unwrap();
        // direction -1 is tried first and also reaches 3 (gamma below -3)
        assert_eq!(ms.score, 3);
        assert_eq!(ms.direction, vec![-1.0]);
        assert_relative_eq!(ms.gamma, -4.0, epsilon = 1e-12);
    }

    #[test]
    fn sphere_dimension_limit() {
        assert!(matches!(sphere_grid(3, 10), Err(FeltError::Unsupported(_))));
        assert_eq!(sphere_grid(2, 8).unwrap().len(), 8);
    }

    #[test]
    fn circular_mean_of_directions() {
        let m = circular_mean(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_relative_eq!(m[0], std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-12);
        assert!(circular_mean(&[vec![1.0], vec![-1.0]]).is_none());
    }

    #[test]
    fn decile_grid_excludes_minimum() {
        let v: Vec<f64> = (0..100).map(|i| (i / 20) as f64).collect();
        let g = decile_grid(&v);
        assert!(g.iter().all(|&x| x > 0.0));
        assert!(g.windows(2).all(|w| w[1] > w[0]));
    }
}
