//! Dense convex quadratic programming.
//!
//! Solves
//!
//! ```text
//!     minimize    1/2 theta' (Q + ridge I) theta + c' theta
//!     subject to  A_eq theta  = b_eq
//!                 A_in theta >= b_in
//! ```
//!
//! with a primal active-set method. Each iteration works in an orthonormal
//! basis Z of the null space of the working constraints; the reduced Hessian
//! Z'QZ may be singular, in which case zero-curvature descent directions are
//! followed until a constraint blocks (or the problem is reported unbounded).
//! A feasible starting point comes from a phase-1 problem that minimizes the
//! largest inequality violation.
//!
//! Only the objective value is guaranteed stable when the minimizer is not
//! unique; among ties the solver returns whatever deterministic constraint
//! ordering (input order) produces.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("Q is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("Q + ridge*I is not positive semidefinite (min eigenvalue {0:e})")]
    Indefinite(f64),
    #[error("non-finite problem data")]
    NonFinite,
    #[error("iteration limit {0} reached")]
    IterationLimit(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct QpProblem {
    pub q: DMatrix<f64>,
    pub c: DVector<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    pub a_in: DMatrix<f64>,
    pub b_in: DVector<f64>,
    pub ridge: f64,
}

impl QpProblem {
    pub fn new(q: DMatrix<f64>, c: DVector<f64>) -> Self {
        let p = c.len();
        QpProblem {
            q,
            c,
            a_eq: DMatrix::zeros(0, p),
            b_eq: DVector::zeros(0),
            a_in: DMatrix::zeros(0, p),
            b_in: DVector::zeros(0),
            ridge: 0.0,
        }
    }

    pub fn with_equalities(mut self, a: DMatrix<f64>, b: DVector<f64>) -> Self {
        self.a_eq = a;
        self.b_eq = b;
        self
    }

    pub fn with_inequalities(mut self, a: DMatrix<f64>, b: DVector<f64>) -> Self {
        self.a_in = a;
        self.b_in = b;
        self
    }

    pub fn with_ridge(mut self, ridge: f64) -> Self {
        self.ridge = ridge;
        self
    }

    pub fn dim(&self) -> usize {
        self.c.len()
    }

    /// Objective including the ridge term.
    pub fn objective(&self, theta: &DVector<f64>) -> f64 {
        0.5 * theta.dot(&(&self.q * theta))
            + 0.5 * self.ridge * theta.norm_squared()
            + self.c.dot(theta)
    }

    pub fn validate(&self) -> Result<(), QpError> {
        let p = self.dim();
        if self.q.shape() != (p, p) {
            return Err(QpError::Dimension(format!(
                "Q is {:?}, expected {p}x{p}",
                self.q.shape()
            )));
        }
        if self.a_eq.ncols() != p || self.a_eq.nrows() != self.b_eq.len() {
            return Err(QpError::Dimension("equality constraints".into()));
        }
        if self.a_in.ncols() != p || self.a_in.nrows() != self.b_in.len() {
            return Err(QpError::Dimension("inequality constraints".into()));
        }
        let finite = |m: &DMatrix<f64>| m.iter().all(|v| v.is_finite());
        if !finite(&self.q)
            || !self.c.iter().all(|v| v.is_finite())
            || !finite(&self.a_eq)
            || !finite(&self.a_in)
            || !self.b_eq.iter().all(|v| v.is_finite())
            || !self.b_in.iter().all(|v| v.is_finite())
            || !self.ridge.is_finite()
            || self.ridge < 0.0
        {
            return Err(QpError::NonFinite);
        }
        let qmax = self.q.amax().max(1.0);
        let asym = (&self.q - self.q.transpose()).amax();
        if asym > 1e-12 * qmax {
            return Err(QpError::NotSymmetric(asym));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct QpSolution {
    pub theta: DVector<f64>,
    pub multipliers_eq: DVector<f64>,
    pub multipliers_in: DVector<f64>,
    /// Inequality constraints in the final working set, ascending.
    pub active_set: Vec<usize>,
    pub status: QpStatus,
    /// Stationarity residual, infinity norm.
    pub kkt_residual: f64,
    /// max_i |lambda_i (a_i theta - b_i)| over inequalities.
    pub complementarity: f64,
    /// Largest constraint violation.
    pub primal_infeasibility: f64,
    pub objective: f64,
    pub iterations: usize,
}

impl QpSolution {
    /// Check the optimality certificate at the given tolerance.
    pub fn certified(&self, tol: f64) -> bool {
        self.status == QpStatus::Optimal
            && self.kkt_residual <= tol
            && self.complementarity <= tol
            && self.primal_infeasibility <= tol
            && self.multipliers_in.iter().all(|&l| l >= -1e-10)
    }
}

/// Solve a convex QP. Infeasible and unbounded problems are reported through
/// `QpSolution::status`; malformed or nonconvex input is an error.
pub fn solve_qp(problem: &QpProblem) -> Result<QpSolution, QpError> {
    problem.validate()?;
    let p = problem.dim();
    let mut q = problem.q.clone();
    for i in 0..p {
        q[(i, i)] += problem.ridge;
    }
    // symmetrize exactly before the eigen check
    let q = (&q + q.transpose()) * 0.5;
    check_psd(&q)?;

    let rows = Constraints::new(&problem.a_eq, &problem.b_eq, &problem.a_in, &problem.b_in);
    if let Some(bad) = rows.trivially_infeasible() {
        return Ok(infeasible(problem, bad));
    }

    // Minimum-norm point on the equality manifold.
    let x0 = if rows.n_eq > 0 {
        let pinv = problem
            .a_eq
            .clone()
            .pseudo_inverse(1e-13)
            .map_err(|e| QpError::Dimension(e.to_string()))?;
        let x = pinv * &problem.b_eq;
        let resid = (&problem.a_eq * &x - &problem.b_eq).amax();
        if resid > 1e-9 * (1.0 + problem.b_eq.amax()) {
            return Ok(infeasible(problem, resid));
        }
        x
    } else {
        DVector::zeros(p)
    };
    let eq_work = rows.independent_equalities();

    let start = match phase_one(&rows, &eq_work, x0)? {
        Some(x) => x,
        None => {
            let viol = rows.max_violation_original(problem, &DVector::zeros(p));
            return Ok(infeasible(problem, viol));
        }
    };

    let core = ActiveSet {
        q: &q,
        c: &problem.c,
        rows: &rows,
    };
    let outcome = core.run(start, eq_work.clone(), None)?;
    let (mut x, working, iterations, status) = match outcome {
        Outcome::Optimal {
            x,
            working,
            iterations,
        } => (x, working, iterations, QpStatus::Optimal),
        Outcome::Unbounded { x, iterations } => (x, eq_work, iterations, QpStatus::Unbounded),
        Outcome::Stopped { .. } => unreachable!("no stop rule in phase 2"),
    };

    if status == QpStatus::Optimal {
        if let Some(polished) = core.polish(&working) {
            let feasible = rows.max_violation(&polished) <= 1e-10 * (1.0 + polished.amax());
            if feasible {
                x = polished;
            }
        }
    }
    Ok(certificate(
        problem, &q, &rows, x, &working, status, iterations,
    ))
}

fn infeasible(problem: &QpProblem, violation: f64) -> QpSolution {
    let p = problem.dim();
    QpSolution {
        theta: DVector::zeros(p),
        multipliers_eq: DVector::zeros(problem.b_eq.len()),
        multipliers_in: DVector::zeros(problem.b_in.len()),
        active_set: vec![],
        status: QpStatus::Infeasible,
        kkt_residual: f64::INFINITY,
        complementarity: f64::INFINITY,
        primal_infeasibility: violation,
        objective: f64::NAN,
        iterations: 0,
    }
}

fn check_psd(q: &DMatrix<f64>) -> Result<(), QpError> {
    if q.nrows() == 0 {
        return Ok(());
    }
    let eig = SymmetricEigen::new(q.clone());
    let max_abs = eig.eigenvalues.amax();
    let min = eig.eigenvalues.min();
    if min < -1e-10 * max_abs.max(f64::MIN_POSITIVE) {
        return Err(QpError::Indefinite(min));
    }
    Ok(())
}

/// Constraint rows scaled to unit norm; equalities first, then inequalities.
struct Constraints {
    a: DMatrix<f64>,
    b: DVector<f64>,
    norms: Vec<f64>,
    n_eq: usize,
}

/// Early exit test evaluated at each feasible iterate.
type StopRule<'a> = &'a dyn Fn(&DVector<f64>) -> bool;

impl Constraints {
    fn new(
        a_eq: &DMatrix<f64>,
        b_eq: &DVector<f64>,
        a_in: &DMatrix<f64>,
        b_in: &DVector<f64>,
    ) -> Self {
        let n_eq = a_eq.nrows();
        let m = n_eq + a_in.nrows();
        let p = a_eq.ncols();
        let mut a = DMatrix::zeros(m, p);
        let mut b = DVector::zeros(m);
        let mut norms = vec![0.0; m];
        for i in 0..m {
            let (row, rhs) = if i < n_eq {
                (a_eq.row(i), b_eq[i])
            } else {
                (a_in.row(i - n_eq), b_in[i - n_eq])
            };
            let nrm = row.norm();
            norms[i] = nrm;
            if nrm > 0.0 {
                a.row_mut(i).copy_from(&(row / nrm));
                b[i] = rhs / nrm;
            } else {
                b[i] = rhs;
            }
        }
        Constraints { a, b, norms, n_eq }
    }

    fn m(&self) -> usize {
        self.a.nrows()
    }

    fn is_zero_row(&self, i: usize) -> bool {
        self.norms[i] == 0.0
    }

    /// A zero row whose right-hand side cannot be met.
    fn trivially_infeasible(&self) -> Option<f64> {
        (0..self.m()).find_map(|i| {
            if !self.is_zero_row(i) {
                return None;
            }
            let bad = if i < self.n_eq {
                self.b[i].abs() > 1e-12
            } else {
                self.b[i] > 1e-12
            };
            bad.then(|| self.b[i].abs())
        })
    }

    /// Maximal linearly independent subset of the equality rows.
    fn independent_equalities(&self) -> Vec<usize> {
        let mut basis: Vec<DVector<f64>> = Vec::new();
        let mut keep = Vec::new();
        for i in 0..self.n_eq {
            if self.is_zero_row(i) {
                continue;
            }
            let mut r: DVector<f64> = self.a.row(i).transpose();
            for _ in 0..2 {
                for q in &basis {
                    let d = q.dot(&r);
                    r.axpy(-d, q, 1.0);
                }
            }
            let nrm = r.norm();
            if nrm > 1e-10 {
                basis.push(r / nrm);
                keep.push(i);
            }
        }
        keep
    }

    fn max_violation(&self, x: &DVector<f64>) -> f64 {
        let ax = &self.a * x;
        let mut v: f64 = 0.0;
        for i in 0..self.m() {
            let s = ax[i] - self.b[i];
            v = v.max(if i < self.n_eq {
                s.abs()
            } else {
                (-s).max(0.0)
            });
        }
        v
    }

    fn max_violation_original(&self, problem: &QpProblem, x: &DVector<f64>) -> f64 {
        let e = (&problem.a_eq * x - &problem.b_eq).amax();
        let r = &problem.a_in * x - &problem.b_in;
        let i = r.iter().fold(0.0_f64, |a, &s| a.max(-s));
        e.max(i)
    }
}

enum Outcome {
    Optimal {
        x: DVector<f64>,
        working: Vec<usize>,
        iterations: usize,
    },
    Unbounded {
        x: DVector<f64>,
        iterations: usize,
    },
    Stopped {
        x: DVector<f64>,
    },
}

struct ActiveSet<'a> {
    q: &'a DMatrix<f64>,
    c: &'a DVector<f64>,
    rows: &'a Constraints,
}

/// Orthonormal bases for range(A_W') and its complement, plus the triangular
/// factor of A_W' = Y R.
struct WorkingFactor {
    y: DMatrix<f64>,
    z: DMatrix<f64>,
    r: DMatrix<f64>,
}

fn factor_working(a: &DMatrix<f64>, working: &[usize]) -> WorkingFactor {
    let p = a.ncols();
    let w = working.len();
    // QR of [A_W' | I] yields a full orthonormal basis whose first w columns
    // span range(A_W').
    let mut aug = DMatrix::zeros(p, w + p);
    for (j, &i) in working.iter().enumerate() {
        aug.column_mut(j).copy_from(&a.row(i).transpose());
    }
    for i in 0..p {
        aug[(i, w + i)] = 1.0;
    }
    let qr = aug.qr();
    let qfull = qr.q();
    let rfull = qr.r();
    WorkingFactor {
        y: qfull.columns(0, w).into_owned(),
        z: qfull.columns(w, p - w).into_owned(),
        r: rfull.view((0, 0), (w, w)).into_owned(),
    }
}

impl ActiveSet<'_> {
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        self.q * x + self.c
    }

    fn grad_scale(&self, x: &DVector<f64>) -> f64 {
        (self.q.amax() * x.amax().max(1.0))
            .max(self.c.amax())
            .max(f64::MIN_POSITIVE)
    }

    fn run(
        &self,
        mut x: DVector<f64>,
        mut working: Vec<usize>,
        stop: Option<StopRule<'_>>,
    ) -> Result<Outcome, QpError> {
        let p = x.len();
        let m = self.rows.m();
        let n_eq = self.rows.n_eq;
        let max_iter = 20 * (p + m) + 200;
        let mut zero_steps = 0usize;
        // set after an unblocked Newton step: x minimizes on the working face
        let mut at_face_min = false;
        let mut last_dropped: Option<usize> = None;
        for iter in 0..max_iter {
            let g = self.gradient(&x);
            let gscale = self.grad_scale(&x);
            let f = factor_working(&self.rows.a, &working);
            let r = f.z.ncols();

            let mut unbounded_search = false;
            let d: DVector<f64> = if r == 0 || at_face_min {
                DVector::zeros(p)
            } else {
                let h = f.z.transpose() * self.q * &f.z;
                let h = (&h + h.transpose()) * 0.5;
                let rg = f.z.transpose() * &g;
                let eig = SymmetricEigen::new(h);
                let emax = eig.eigenvalues.amax().max(self.q.amax() * 1e-3);
                let etol = 1e-10 * emax.max(f64::MIN_POSITIVE);
                let mut null_part = DVector::zeros(r);
                let mut newton = DVector::zeros(r);
                for j in 0..r {
                    let v = eig.eigenvectors.column(j);
                    let coef = v.dot(&rg);
                    if eig.eigenvalues[j] <= etol {
                        null_part.axpy(coef, &v, 1.0);
                    } else {
                        newton.axpy(coef / eig.eigenvalues[j], &v, 1.0);
                    }
                }
                if null_part.amax() > 1e-9 * gscale {
                    unbounded_search = true;
                    -(&f.z * null_part)
                } else {
                    -(&f.z * newton)
                }
            };

            let step_small =
                at_face_min || (!unbounded_search && d.amax() <= 1e-13 * (1.0 + x.amax()));
            at_face_min = false;
            if step_small {
                // Multipliers from A_W' lambda = g.
                let w = working.len();
                let lambda = if w == 0 {
                    DVector::zeros(0)
                } else {
                    let rhs = f.y.transpose() * &g;
                    f.r.solve_upper_triangular(&rhs)
                        .unwrap_or_else(|| DVector::zeros(w))
                };
                let lam_tol = 1e-10 * gscale;
                let bland = zero_steps > 50;
                let mut drop: Option<(usize, f64)> = None;
                for (pos, &ci) in working.iter().enumerate() {
                    if ci < n_eq {
                        continue;
                    }
                    let l = lambda[pos];
                    if l < -lam_tol {
                        let better = match drop {
                            None => true,
                            Some((_, best)) => !bland && l < best,
                        };
                        if better {
                            drop = Some((pos, l));
                        }
                    }
                }
                match drop {
                    None => {
                        return Ok(Outcome::Optimal {
                            x,
                            working,
                            iterations: iter,
                        })
                    }
                    Some((pos, _)) => {
                        last_dropped = Some(working[pos]);
                        working.remove(pos);
                        continue;
                    }
                }
            }

            // Ratio test over inactive inequalities.
            let ad = &self.rows.a * &d;
            let ax = &self.rows.a * &x;
            let dnorm = d.amax();
            let mut alpha = if unbounded_search { f64::INFINITY } else { 1.0 };
            let mut blocking = None;
            for i in n_eq..m {
                if self.rows.is_zero_row(i) || working.contains(&i) {
                    continue;
                }
                if ad[i] < -1e-14 * dnorm {
                    let slack = (ax[i] - self.rows.b[i]).max(0.0);
                    let a_i = slack / -ad[i];
                    if a_i < alpha {
                        alpha = a_i;
                        blocking = Some(i);
                    }
                }
            }
            if alpha.is_infinite() {
                return Ok(Outcome::Unbounded {
                    x,
                    iterations: iter,
                });
            }
            // The constraint just released blocks again at once: its negative
            // multiplier was rounding noise and x is already optimal.
            if let Some(b) = blocking
                .filter(|_| blocking == last_dropped && alpha * dnorm <= 1e-8 * (1.0 + x.amax()))
            {
                working.push(b);
                return Ok(Outcome::Optimal {
                    x,
                    working,
                    iterations: iter,
                });
            }
            last_dropped = None;
            x.axpy(alpha, &d, 1.0);
            if alpha == 0.0 {
                zero_steps += 1;
            } else {
                zero_steps = 0;
            }
            match blocking {
                Some(i) => working.push(i),
                None => at_face_min = !unbounded_search,
            }
            if let Some(s) = stop {
                if s(&x) {
                    return Ok(Outcome::Stopped { x });
                }
            }
        }
        Err(QpError::IterationLimit(max_iter))
    }

    /// Solve the KKT system for the final working set to clean up the last
    /// iterate. Returns None when the system is singular.
    fn polish(&self, working: &[usize]) -> Option<DVector<f64>> {
        let p = self.c.len();
        let w = working.len();
        let mut kkt = DMatrix::zeros(p + w, p + w);
        kkt.view_mut((0, 0), (p, p)).copy_from(self.q);
        let mut rhs = DVector::zeros(p + w);
        rhs.rows_mut(0, p).copy_from(&(-self.c));
        for (j, &i) in working.iter().enumerate() {
            let row = self.rows.a.row(i);
            kkt.view_mut((p + j, 0), (1, p)).copy_from(&row);
            kkt.view_mut((0, p + j), (p, 1))
                .copy_from(&(-row.transpose()));
            rhs[p + j] = self.rows.b[i];
        }
        let lu = kkt.clone().lu();
        let sol = lu.solve(&rhs)?;
        if !sol.iter().all(|v| v.is_finite()) {
            return None;
        }
        // reject near-singular solves
        let resid = (&kkt * &sol - &rhs).amax();
        if resid > 1e-9 * (1.0 + rhs.amax()) {
            return None;
        }
        Some(sol.rows(0, p).into_owned())
    }
}

/// Find a feasible point by minimizing the largest inequality violation t
/// over (x, t) subject to A_eq x = b_eq, A_in x + t >= b_in, t >= 0.
fn phase_one(
    rows: &Constraints,
    eq_work: &[usize],
    x0: DVector<f64>,
) -> Result<Option<DVector<f64>>, QpError> {
    let p = x0.len();
    let feas_tol = 1e-10 * (1.0 + rows.b.amax());
    if rows.max_violation(&x0) <= feas_tol {
        return Ok(Some(x0));
    }
    let m = rows.m();
    let n_eq = rows.n_eq;
    let mut a_eq = DMatrix::zeros(n_eq, p + 1);
    let mut b_eq = DVector::zeros(n_eq);
    for i in 0..n_eq {
        a_eq.view_mut((i, 0), (1, p)).copy_from(&rows.a.row(i));
        b_eq[i] = rows.b[i];
    }
    let n_in = m - n_eq + 1;
    let mut a_in = DMatrix::zeros(n_in, p + 1);
    let mut b_in = DVector::zeros(n_in);
    for i in n_eq..m {
        let r = i - n_eq;
        a_in.view_mut((r, 0), (1, p)).copy_from(&rows.a.row(i));
        a_in[(r, p)] = 1.0;
        b_in[r] = rows.b[i];
    }
    a_in[(n_in - 1, p)] = 1.0;
    let aug = Constraints::new(&a_eq, &b_eq, &a_in, &b_in);
    let ax = &rows.a * &x0;
    let t0 = (n_eq..m).map(|i| rows.b[i] - ax[i]).fold(0.0_f64, f64::max);
    let mut start = DVector::zeros(p + 1);
    start.rows_mut(0, p).copy_from(&x0);
    start[p] = t0;
    let q = DMatrix::zeros(p + 1, p + 1);
    let mut c = DVector::zeros(p + 1);
    c[p] = 1.0;
    let core = ActiveSet {
        q: &q,
        c: &c,
        rows: &aug,
    };
    let stop = |x: &DVector<f64>| x[p] <= feas_tol;
    let x = match core.run(start, eq_work.to_vec(), Some(&stop))? {
        Outcome::Optimal { x, .. } | Outcome::Stopped { x } => x,
        Outcome::Unbounded { .. } => unreachable!("t >= 0 bounds the phase-1 objective"),
    };
    if x[p] > feas_tol {
        return Ok(None);
    }
    Ok(Some(x.rows(0, p).into_owned()))
}

fn certificate(
    problem: &QpProblem,
    q: &DMatrix<f64>,
    rows: &Constraints,
    x: DVector<f64>,
    working: &[usize],
    status: QpStatus,
    iterations: usize,
) -> QpSolution {
    let n_eq = rows.n_eq;
    let n_in = problem.b_in.len();
    let g = q * &x + &problem.c;
    // Least-squares multipliers on the working set, in normalized rows.
    let mut lam_eq = DVector::zeros(n_eq);
    let mut lam_in = DVector::zeros(n_in);
    if !working.is_empty() {
        let f = factor_working(&rows.a, working);
        let rhs = f.y.transpose() * &g;
        if let Some(l) = f.r.solve_upper_triangular(&rhs) {
            for (pos, &i) in working.iter().enumerate() {
                // undo row scaling: a_i = norm_i * a~_i
                let val = l[pos] / rows.norms[i];
                if i < n_eq {
                    lam_eq[i] = val;
                } else {
                    lam_in[i - n_eq] = val;
                }
            }
        }
    }
    // multipliers within rounding of zero on the wrong side are zero
    let g_scale = g.amax().max(problem.c.amax()).max(f64::MIN_POSITIVE);
    for l in lam_in.iter_mut() {
        if *l < 0.0 && *l > -1e-8 * g_scale {
            *l = 0.0;
        }
    }
    let stat = &g - problem.a_eq.transpose() * &lam_eq - problem.a_in.transpose() * &lam_in;
    let slack = &problem.a_in * &x - &problem.b_in;
    let complementarity = lam_in
        .iter()
        .zip(slack.iter())
        .fold(0.0_f64, |a, (l, s)| a.max((l * s).abs()));
    let mut active_set: Vec<usize> = working
        .iter()
        .filter(|&&i| i >= n_eq)
        .map(|&i| i - n_eq)
        .collect();
    active_set.sort_unstable();
    let primal_infeasibility = rows.max_violation_original(problem, &x);
    let objective = 0.5 * x.dot(&(q * &x)) + problem.c.dot(&x);
    QpSolution {
        kkt_residual: if status == QpStatus::Optimal {
            stat.amax()
        } else {
            f64::INFINITY
        },
        theta: x,
        multipliers_eq: lam_eq,
        multipliers_in: lam_in,
        active_set,
        status,
        complementarity,
        primal_infeasibility,
        objective,
        iterations,
    }
}
