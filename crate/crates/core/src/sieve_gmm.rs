//! Monotone Bernstein-sieve GMM.
//!
//! The residual for household i is
//! `r_i(theta) = g_2(u^Y_i2, z_i) - g_1(u^Y_i1, z_i) - (X_i2 - X_i1)`, linear in
//! the flattened sieve coefficients theta. Instruments, per period t, are the
//! Bernstein basis of the rank-transformed budget interacted with z, and the
//! budget itself interacted with z. Minimizing `m(theta)' W m(theta)` under
//! vertex monotonicity and a location pin is a convex QP.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::bernstein::{basis_into, box_vertices, Period, SieveCoefficients};
use crate::error::{FeltError, Result};
use crate::panel::{rank_transform, Panel, RankMap};
use crate::par::chunked_fold;
use crate::qp::{solve_qp, QpError, QpProblem, QpStatus};

/// Households per chunk in the moment reductions.
const CHUNK: usize = 256;

pub const MAX_COVARIATES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    #[default]
    Identity,
    TwoStep,
}

impl std::str::FromStr for Weighting {
    type Err = FeltError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Weighting::Identity),
            "two_step" | "two-step" => Ok(Weighting::TwoStep),
            other => Err(FeltError::Config(format!("unknown weighting '{other}'"))),
        }
    }
}

/// Rank-transformed inputs shared by the moment builders.
#[derive(Debug, Clone)]
struct Ranked {
    uy: [Vec<f64>; 2],
    ux: [Vec<f64>; 2],
    y_maps: [RankMap; 2],
}

impl Ranked {
    fn new(panel: &Panel) -> Result<Self> {
        let (my1, uy1) = rank_transform(panel.y(1))?;
        let (my2, uy2) = rank_transform(panel.y(2))?;
        let (_, ux1) = rank_transform(panel.x(1))?;
        let (_, ux2) = rank_transform(panel.x(2))?;
        Ok(Ranked {
            uy: [uy1, uy2],
            ux: [ux1, ux2],
            y_maps: [my1, my2],
        })
    }
}

/// Per-household regressor (d) and instrument (w) rows.
struct RowBuilder<'a> {
    panel: &'a Panel,
    ranked: &'a Ranked,
    degree: usize,
    covariates: usize,
}

impl RowBuilder<'_> {
    fn p(&self) -> usize {
        2 * (self.degree + 1) * (self.covariates + 1)
    }

    fn m(&self) -> usize {
        self.p() + 2 * (self.covariates + 1)
    }

    fn fill(&self, i: usize, d: &mut [f64], w: &mut [f64], b: &mut [f64]) {
        let kk = self.degree + 1;
        let ll = self.covariates + 1;
        let z = self.panel.z.row(i);
        // regressors: +z_l B_k(u^Y_2) for period 2, -z_l B_k(u^Y_1) for period 1
        for t in Period::BOTH {
            let sign = if t == Period::First { -1.0 } else { 1.0 };
            basis_into(self.ranked.uy[t.index()][i], self.degree, b);
            for l in 0..ll {
                let base = (t.index() * ll + l) * kk;
                for k in 0..kk {
                    d[base + k] = sign * z[l] * b[k];
                }
            }
        }
        // instruments: per period, B_k'(u^X_t) z_l' then X_t z_l'
        let block = kk * ll + ll;
        for t in Period::BOTH {
            let off = t.index() * block;
            basis_into(self.ranked.ux[t.index()][i], self.degree, b);
            for l in 0..ll {
                for k in 0..kk {
                    w[off + l * kk + k] = b[k] * z[l];
                }
            }
            let xt = self.panel.x(t.number())[i];
            for l in 0..ll {
                w[off + kk * ll + l] = xt * z[l];
            }
        }
    }

    /// Sample averages G = mean(w d') and g0 = mean(w dX).
    fn jacobian(&self) -> (DMatrix<f64>, DVector<f64>) {
        let (p, m, n) = (self.p(), self.m(), self.panel.n());
        let dx = self.panel.delta_x();
        let (g, g0) = chunked_fold(
            n,
            CHUNK,
            || (DMatrix::<f64>::zeros(m, p), DVector::<f64>::zeros(m)),
            |acc, i| {
                let mut d = vec![0.0; p];
                let mut w = vec![0.0; m];
                let mut b = vec![0.0; self.degree + 1];
                self.fill(i, &mut d, &mut w, &mut b);
                let wv = DVector::from_column_slice(&w);
                let dv = DVector::from_column_slice(&d);
                acc.0.ger(1.0, &wv, &dv, 1.0);
                acc.1.axpy(dx[i], &wv, 1.0);
            },
            |mut a, b| {
                a.0 += b.0;
                a.1 += b.1;
                a
            },
        );
        let nf = n as f64;
        (g / nf, g0 / nf)
    }

    /// Centered outer product of the per-household moment contributions at theta.
    fn moment_covariance(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        let (p, m, n) = (self.p(), self.m(), self.panel.n());
        let dx = self.panel.delta_x();
        let contribution = |i: usize| {
            let mut d = vec![0.0; p];
            let mut w = vec![0.0; m];
            let mut b = vec![0.0; self.degree + 1];
            self.fill(i, &mut d, &mut w, &mut b);
            let r: f64 = d.iter().zip(theta.iter()).map(|(a, t)| a * t).sum::<f64>() - dx[i];
            DVector::from_iterator(m, w.into_iter().map(|v| v * r))
        };
        let (s, mean) = chunked_fold(
            n,
            CHUNK,
            || (DMatrix::<f64>::zeros(m, m), DVector::<f64>::zeros(m)),
            |acc, i| {
                let h = contribution(i);
                acc.0.ger(1.0, &h, &h, 1.0);
                acc.1 += h;
            },
            |mut a, b| {
                a.0 += b.0;
                a.1 += b.1;
                a
            },
        );
        let nf = n as f64;
        let mean = mean / nf;
        s / nf - &mean * mean.transpose()
    }
}

/// Linear moment system `m(theta) = G theta - g0` with its weighting matrix.
#[derive(Debug, Clone)]
pub struct MomentSystem {
    pub degree: usize,
    pub covariates: usize,
    pub n: usize,
    pub g: DMatrix<f64>,
    pub g0: DVector<f64>,
    pub wmat: DMatrix<f64>,
    pub weighting: Weighting,
    pub y_maps: [RankMap; 2],
}

impl MomentSystem {
    pub fn n_params(&self) -> usize {
        self.g.ncols()
    }

    pub fn n_moments(&self) -> usize {
        self.g.nrows()
    }

    pub fn moments(&self, theta: &DVector<f64>) -> DVector<f64> {
        &self.g * theta - &self.g0
    }

    pub fn objective(&self, theta: &DVector<f64>) -> f64 {
        let m = self.moments(theta);
        m.dot(&(&self.wmat * &m))
    }

    /// Moments as CSV rows (moment index, g0, then one column per parameter).
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec!["moment".to_string(), "g0".to_string()];
        header.extend((0..self.n_params()).map(|j| format!("G{j}")));
        wtr.write_record(&header)?;
        for r in 0..self.n_moments() {
            let mut rec = vec![r.to_string(), format!("{:?}", self.g0[r])];
            rec.extend(self.g.row(r).iter().map(|v| format!("{v:?}")));
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

fn check_inputs(panel: &Panel, degree: usize) -> Result<()> {
    if degree == 0 {
        return Err(FeltError::InvalidInput(
            "sieve degree K must be at least 1".into(),
        ));
    }
    let l = panel.n_covariates();
    if l > MAX_COVARIATES {
        return Err(FeltError::TooManyCovariates(l));
    }
    if !panel.is_standardized() {
        return Err(FeltError::InvalidInput(
            "covariates must be standardized to [0, 1] before estimation".into(),
        ));
    }
    let p = 2 * (degree + 1) * (l + 1);
    if panel.n() <= p {
        return Err(FeltError::UnderIdentified {
            moments: panel.n(),
            params: p,
        });
    }
    Ok(())
}

/// Assemble the moment system. `TwoStep` runs an identity-weighted first
/// step and uses the (pseudo-)inverse of the moment covariance at that
/// estimate.
pub fn build_moments(panel: &Panel, degree: usize, weighting: Weighting) -> Result<MomentSystem> {
    check_inputs(panel, degree)?;
    let ranked = Ranked::new(panel)?;
    let rows = RowBuilder {
        panel,
        ranked: &ranked,
        degree,
        covariates: panel.n_covariates(),
    };
    let (g, g0) = rows.jacobian();
    let m = g.nrows();
    let mut system = MomentSystem {
        degree,
        covariates: panel.n_covariates(),
        n: panel.n(),
        g,
        g0,
        wmat: DMatrix::identity(m, m),
        weighting: Weighting::Identity,
        y_maps: ranked.y_maps.clone(),
    };
    if weighting == Weighting::TwoStep {
        let first = estimate_system(&system)?;
        let theta = DVector::from_vec(first.coeffs.to_flat());
        let s = rows.moment_covariance(&theta);
        system.wmat = pseudo_inverse_sym(&s);
        system.weighting = Weighting::TwoStep;
    }
    Ok(system)
}

/// Inverse on the numerically nonzero eigenspace. Instrument blocks share
/// the partition-of-unity direction, so the covariance is always singular.
fn pseudo_inverse_sym(s: &DMatrix<f64>) -> DMatrix<f64> {
    let s = (s + s.transpose()) * 0.5;
    let eig = SymmetricEigen::new(s);
    let cut = 1e-10 * eig.eigenvalues.amax();
    let m = eig.eigenvalues.len();
    let mut out = DMatrix::zeros(m, m);
    for j in 0..m {
        let l = eig.eigenvalues[j];
        if l > cut {
            let v = eig.eigenvectors.column(j);
            out.ger(1.0 / l, &v, &v, 1.0);
        }
    }
    (&out + out.transpose()) * 0.5
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GmmEstimate {
    pub coeffs: SieveCoefficients,
    pub objective: f64,
    pub j_stat: f64,
    pub active_monotonicity_constraints: usize,
    pub n_monotonicity_constraints: usize,
    pub weighting: Weighting,
    pub n: usize,
    pub status: QpStatus,
    pub kkt_residual: f64,
    pub ridge: f64,
    pub iterations: usize,
    /// Outcome rank maps for periods 1 and 2.
    pub y_maps: [RankMap; 2],
}

impl GmmEstimate {
    /// g_t at outcome level y (original scale) and covariate row z.
    pub fn g_at(&self, t: Period, y: f64, z: &[f64]) -> Result<f64> {
        self.coeffs.eval(t, self.y_maps[t.index()].map(y), z)
    }
}

/// Predicted inverse transforms per household and period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GHat {
    pub g1: Vec<f64>,
    pub g2: Vec<f64>,
}

impl GHat {
    pub fn new(g1: Vec<f64>, g2: Vec<f64>) -> Result<Self> {
        if g1.len() != g2.len() {
            return Err(FeltError::Dimension {
                expected: g1.len(),
                got: g2.len(),
            });
        }
        Ok(GHat { g1, g2 })
    }

    pub fn n(&self) -> usize {
        self.g1.len()
    }

    pub fn period(&self, t: Period) -> &[f64] {
        match t {
            Period::First => &self.g1,
            Period::Second => &self.g2,
        }
    }

    /// Add `shift[i]` to both periods.
    pub fn shifted(&self, shift: &[f64]) -> GHat {
        GHat {
            g1: self.g1.iter().zip(shift).map(|(g, s)| g + s).collect(),
            g2: self.g2.iter().zip(shift).map(|(g, s)| g + s).collect(),
        }
    }
}

/// Options beyond the weighting choice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimateOptions {
    pub weighting: Weighting,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        EstimateOptions {
            weighting: Weighting::Identity,
        }
    }
}

pub fn estimate(panel: &Panel, degree: usize, opts: &EstimateOptions) -> Result<GmmEstimate> {
    let system = build_moments(panel, degree, opts.weighting)?;
    estimate_system(&system)
}

/// Monotonicity rows: for each vertex v, period t and k = 1..K,
/// sum_l v_l (beta[t][l][k] - beta[t][l][k-1]) >= 0.
fn monotonicity_constraints(degree: usize, covariates: usize) -> DMatrix<f64> {
    let coeffs = SieveCoefficients::zeros(degree, covariates);
    let p = coeffs.len();
    let verts = box_vertices(covariates);
    let mut a = DMatrix::zeros(verts.len() * 2 * degree, p);
    let mut row = 0;
    for v in &verts {
        for t in Period::BOTH {
            for k in 1..=degree {
                for (l, &vl) in v.iter().enumerate() {
                    if vl != 0.0 {
                        a[(row, coeffs.flat_index(t, l, k))] += vl;
                        a[(row, coeffs.flat_index(t, l, k - 1))] -= vl;
                    }
                }
                row += 1;
            }
        }
    }
    a
}

/// Pin beta[1][l][0] = 0 for every l.
fn location_constraints(degree: usize, covariates: usize) -> DMatrix<f64> {
    let coeffs = SieveCoefficients::zeros(degree, covariates);
    let mut a = DMatrix::zeros(covariates + 1, coeffs.len());
    for l in 0..=covariates {
        a[(l, coeffs.flat_index(Period::First, l, 0))] = 1.0;
    }
    a
}

pub fn estimate_system(system: &MomentSystem) -> Result<GmmEstimate> {
    let (k, l) = (system.degree, system.covariates);
    let gtw = system.g.transpose() * &system.wmat;
    let q = &gtw * &system.g * 2.0;
    let q = (&q + q.transpose()) * 0.5;
    let c = -(&gtw * &system.g0) * 2.0;
    // rescaling leaves the argmin unchanged and makes the ridge relative
    let scale = q.diagonal().amax().max(c.amax()).max(f64::MIN_POSITIVE);
    let q = q / scale;
    let c = c / scale;

    let a_in = monotonicity_constraints(k, l);
    let b_in = DVector::zeros(a_in.nrows());
    let a_eq = location_constraints(k, l);
    let b_eq = DVector::zeros(a_eq.nrows());
    let problem = QpProblem::new(q, c)
        .with_equalities(a_eq, b_eq)
        .with_inequalities(a_in, b_in);

    let (sol, ridge) = match solve_qp(&problem) {
        Ok(s) => (s, 0.0),
        Err(QpError::Indefinite(_)) => {
            let ridge = 1e-10;
            log::warn!(
                "moment Hessian not PSD at working precision; retrying with ridge {ridge:e}"
            );
            (solve_qp(&problem.clone().with_ridge(ridge))?, ridge)
        }
        Err(e) => return Err(e.into()),
    };
    match sol.status {
        QpStatus::Optimal => {}
        QpStatus::Infeasible => {
            // theta = 0 satisfies every constraint
            return Err(FeltError::NoConvergence(
                "QP reported infeasible at a feasible problem".into(),
            ));
        }
        QpStatus::Unbounded => {
            return Err(FeltError::NoConvergence(
                "QP reported unbounded for a nonnegative objective".into(),
            ));
        }
    }

    let mut theta = sol.theta.clone();
    let mut coeffs = SieveCoefficients::zeros(k, l);
    for li in 0..=l {
        theta[coeffs.flat_index(Period::First, li, 0)] = 0.0;
    }
    coeffs = SieveCoefficients::from_flat(k, l, theta.as_slice())?;
    let objective = system.objective(&theta);
    Ok(GmmEstimate {
        coeffs,
        objective,
        j_stat: system.n as f64 * objective,
        active_monotonicity_constraints: sol.active_set.len(),
        n_monotonicity_constraints: problem.b_in.len(),
        weighting: system.weighting,
        n: system.n,
        status: sol.status,
        kkt_residual: sol.kkt_residual,
        ridge,
        iterations: sol.iterations,
        y_maps: system.y_maps.clone(),
    })
}

/// g_hat_it = g_t(rank_t(Y_it), z_i) using the estimate's rank maps.
pub fn predict_g(est: &GmmEstimate, panel: &Panel) -> Result<GHat> {
    if panel.n_covariates() != est.coeffs.covariates {
        return Err(FeltError::Dimension {
            expected: est.coeffs.covariates,
            got: panel.n_covariates(),
        });
    }
    let mut b = vec![0.0; est.coeffs.degree + 1];
    let mut out = [Vec::with_capacity(panel.n()), Vec::with_capacity(panel.n())];
    for i in 0..panel.n() {
        let z = panel.z_row(i);
        for t in Period::BOTH {
            let u = est.y_maps[t.index()].map(panel.y(t.number())[i]);
            basis_into(u, est.coeffs.degree, &mut b);
            out[t.index()].push(est.coeffs.eval_with_basis(t, &b, &z));
        }
    }
    let [g1, g2] = out;
    GHat::new(g1, g2)
}

/// Constant that moves the pooled mean of g_hat to mean(X) - ln 2, i.e. the
/// average log member budget to half the geometric-mean household budget.
pub fn relocation_shift(ghat: &GHat, panel: &Panel) -> f64 {
    let n2 = 2.0 * ghat.n() as f64;
    let mean_g = (ghat.g1.iter().sum::<f64>() + ghat.g2.iter().sum::<f64>()) / n2;
    let mean_x = (panel.x(1).iter().sum::<f64>() + panel.x(2).iter().sum::<f64>()) / n2;
    mean_x - std::f64::consts::LN_2 - mean_g
}

/// Sample moments `mean(w_i (v2_i - v1_i - dX_i))` for given per-household
/// values of g_1 and g_2 (for example the true latent indices).
pub fn moments_from_values(
    panel: &Panel,
    degree: usize,
    v1: &[f64],
    v2: &[f64],
) -> Result<DVector<f64>> {
    if v1.len() != panel.n() || v2.len() != panel.n() {
        return Err(FeltError::Dimension {
            expected: panel.n(),
            got: v1.len().min(v2.len()),
        });
    }
    let ranked = Ranked::new(panel)?;
    let rows = RowBuilder {
        panel,
        ranked: &ranked,
        degree,
        covariates: panel.n_covariates(),
    };
    let (p, m) = (rows.p(), rows.m());
    let dx = panel.delta_x();
    let sum = chunked_fold(
        panel.n(),
        CHUNK,
        || DVector::<f64>::zeros(m),
        |acc, i| {
            let mut d = vec![0.0; p];
            let mut w = vec![0.0; m];
            let mut b = vec![0.0; degree + 1];
            rows.fill(i, &mut d, &mut w, &mut b);
            let r = v2[i] - v1[i] - dx[i];
            for (a, wv) in acc.iter_mut().zip(&w) {
                *a += wv * r;
            }
        },
        |a, b| a + b,
    );
    Ok(sum / panel.n() as f64)
}
