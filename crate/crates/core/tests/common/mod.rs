//! Oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use felt_core::panel::{rank_transform, Panel};
use felt_core::qp::QpProblem;
use felt_core::sieve_gmm::GHat;
use felt_core::stats::ols;
use felt_core::synth::LatentRecord;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// RMSE of g_hat against the true latent index once the best common
/// z-affine location profile is removed, over observations whose
/// within-period rank lies in [0.05, 0.95].
pub fn pinned_rmse(ghat: &GHat, latent: &LatentRecord, panel: &Panel) -> f64 {
    let mut rows = Vec::new();
    let mut diffs = Vec::new();
    for t in 1..=2 {
        let (_, u) = rank_transform(panel.y(t)).unwrap();
        let g = if t == 1 { &ghat.g1 } else { &ghat.g2 };
        for i in 0..panel.n() {
            if (0.05..=0.95).contains(&u[i]) {
                rows.push(panel.z_row(i));
                diffs.push(g[i] - latent.ystar(t)[i]);
            }
        }
    }
    let x = DMatrix::from_fn(rows.len(), rows[0].len(), |r, c| rows[r][c]);
    let fit = ols(&x, &diffs);
    (fit.residuals.iter().map(|r| r * r).sum::<f64>() / diffs.len() as f64).sqrt()
}

/// Random strictly convex box-constrained QP written with inequality rows.
pub struct BoxQp {
    pub problem: QpProblem,
    pub lb: DVector<f64>,
    pub ub: DVector<f64>,
}

pub fn random_box_qp<R: Rng>(rng: &mut R) -> BoxQp {
    let p = rng.random_range(2..=6);
    let m = DMatrix::from_fn(p + 2, p, |_, _| rng.random_range(-1.0..1.0));
    let q = m.transpose() * &m + DMatrix::identity(p, p) * 0.1;
    let c = DVector::from_fn(p, |_, _| rng.random_range(-3.0..3.0));
    let lb = DVector::from_fn(p, |_, _| rng.random_range(-1.0..0.0));
    let ub = DVector::from_fn(p, |i, _| lb[i] + rng.random_range(0.2..2.0));
    let mut a = DMatrix::zeros(2 * p, p);
    let mut b = DVector::zeros(2 * p);
    for i in 0..p {
        a[(2 * i, i)] = 1.0;
        b[2 * i] = lb[i];
        a[(2 * i + 1, i)] = -1.0;
        b[2 * i + 1] = -ub[i];
    }
    BoxQp {
        problem: QpProblem::new(q, c).with_inequalities(a, b),
        lb,
        ub,
    }
}

/// Accelerated projected gradient on the box; returns the minimizer.
pub fn projected_gradient(bq: &BoxQp) -> DVector<f64> {
    let q = &bq.problem.q;
    let c = &bq.problem.c;
    let project =
        |x: DVector<f64>| DVector::from_fn(x.len(), |i, _| x[i].clamp(bq.lb[i], bq.ub[i]));
    let lmax = q.clone().symmetric_eigen().eigenvalues.max();
    let step = 1.0 / lmax;
    let mut x = project(DVector::zeros(c.len()));
    let mut y = x.clone();
    let mut t = 1.0f64;
    for _ in 0..200_000 {
        let g = q * &y + c;
        let xn = project(&y - g * step);
        let tn = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        y = &xn + (&xn - &x) * ((t - 1.0) / tn);
        let moved = (&xn - &x).amax();
        x = xn;
        t = tn;
        if moved < 1e-14 {
            break;
        }
    }
    x
}
