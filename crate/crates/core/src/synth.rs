//! Simulated panels with known latent structure.
//!
//! `Y*_it = alpha_i + beta X_it - U_it` and `Y_it = h_t(Y*_it)`. Each
//! household draws from its own ChaCha8 stream (stream index = household
//! index), so output does not depend on the worker count.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{FeltError, Result};
use crate::fe_summary::{summarize_true_alpha, FixedEffectSummary};
use crate::panel::Panel;
use crate::par::map_indexed;

/// Monotone outcome map h_t.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Transform {
    /// Y = Y* + d.
    LinearShift { d: f64 },
    /// Y = scale Y* + shift, scale > 0.
    Affine { scale: f64, shift: f64 },
    /// Y = c exp((1 - r) Y*) + b exp(Y*).
    Pigl { c: f64, b: f64, r: f64 },
    /// Y = number of thresholds at or below Y*.
    Ordered { thresholds: Vec<f64> },
    /// Y = min(Y*, cutoff).
    Censored { cutoff: f64 },
    /// Piecewise linear through (x, y), extended linearly past the ends.
    Table { x: Vec<f64>, y: Vec<f64> },
}

impl Transform {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(FeltError::Config(m.to_string()));
        match self {
            Transform::LinearShift { d } if !d.is_finite() => bad("linear_shift: d must be finite"),
            Transform::Affine { scale, shift }
                if !(*scale > 0.0 && scale.is_finite() && shift.is_finite()) =>
            {
                bad("affine: scale must be positive")
            }
            Transform::Pigl { c, b, r } if !(*c > 0.0 && *b > 0.0 && (0.0..1.0).contains(r)) => {
                bad("pigl: requires c > 0, b > 0 and 0 <= r < 1")
            }
            Transform::Ordered { thresholds }
                if thresholds.is_empty() || thresholds.windows(2).any(|w| w[1] <= w[0]) =>
            {
                bad("ordered: thresholds must be non-empty and strictly increasing")
            }
            Transform::Censored { cutoff } if !cutoff.is_finite() => {
                bad("censored: cutoff must be finite")
            }
            Transform::Table { x, y } => {
                if x.len() < 2 || x.len() != y.len() {
                    return bad("table: need at least two (x, y) points of equal length");
                }
                if x.windows(2).any(|w| w[1] <= w[0]) || y.windows(2).any(|w| w[1] < w[0]) {
                    return bad("table: x strictly increasing and y non-decreasing required");
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn apply(&self, ystar: f64) -> f64 {
        match self {
            Transform::LinearShift { d } => ystar + d,
            Transform::Affine { scale, shift } => scale * ystar + shift,
            Transform::Pigl { c, b, r } => c * ((1.0 - r) * ystar).exp() + b * ystar.exp(),
            Transform::Ordered { thresholds } => thresholds.partition_point(|&t| t <= ystar) as f64,
            Transform::Censored { cutoff } => ystar.min(*cutoff),
            Transform::Table { x, y } => {
                let m = x.len();
                let seg = if ystar <= x[0] {
                    0
                } else if ystar >= x[m - 1] {
                    m - 2
                } else {
                    x.partition_point(|&v| v <= ystar) - 1
                };
                let (x0, x1, y0, y1) = (x[seg], x[seg + 1], y[seg], y[seg + 1]);
                y0 + (ystar - x0) * (y1 - y0) / (x1 - x0)
            }
        }
    }

    /// Generalized inverse inf{y*: y <= h(y*)}; infinite when the set is
    /// empty or unbounded below.
    pub fn inverse(&self, y: f64) -> f64 {
        match self {
            Transform::LinearShift { d } => y - d,
            Transform::Affine { scale, shift } => (y - shift) / scale,
            Transform::Pigl { .. } => {
                if y <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                self.bisect(y)
            }
            Transform::Ordered { thresholds } => {
                if y <= 0.0 {
                    f64::NEG_INFINITY
                } else {
                    let j = y.ceil() as usize;
                    thresholds.get(j - 1).copied().unwrap_or(f64::INFINITY)
                }
            }
            Transform::Censored { cutoff } => {
                if y <= *cutoff {
                    y
                } else {
                    f64::INFINITY
                }
            }
            Transform::Table { x, y: ys } => {
                let m = x.len();
                let lo_slope = (ys[1] - ys[0]) / (x[1] - x[0]);
                let hi_slope = (ys[m - 1] - ys[m - 2]) / (x[m - 1] - x[m - 2]);
                if y < ys[0] {
                    return if lo_slope > 0.0 {
                        x[0] + (y - ys[0]) / lo_slope
                    } else {
                        f64::NEG_INFINITY
                    };
                }
                if y > ys[m - 1] {
                    return if hi_slope > 0.0 {
                        x[m - 1] + (y - ys[m - 1]) / hi_slope
                    } else {
                        f64::INFINITY
                    };
                }
                // first segment end reaching y
                let j = ys.partition_point(|&v| v < y);
                if j == 0 {
                    return x[0];
                }
                let (x0, x1, y0, y1) = (x[j - 1], x[j], ys[j - 1], ys[j]);
                x0 + (y - y0) * (x1 - x0) / (y1 - y0)
            }
        }
    }

    fn bisect(&self, y: f64) -> f64 {
        let (mut lo, mut hi) = (-1.0_f64, 1.0_f64);
        while self.apply(lo) > y {
            lo *= 2.0;
        }
        while self.apply(hi) < y {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.apply(mid) < y {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= f64::EPSILON * hi.abs().max(1.0) {
                break;
            }
        }
        0.5 * (lo + hi)
    }

    pub fn is_strictly_increasing(&self) -> bool {
        match self {
            Transform::LinearShift { .. } | Transform::Affine { .. } | Transform::Pigl { .. } => {
                true
            }
            Transform::Table { y, .. } => y.windows(2).all(|w| w[1] > w[0]),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum XLaw {
    /// X1 ~ N(mean_x1, sd_x1^2), X2 = X1 + dX with dX ~ N(mean_dx, sd_dx^2).
    Normal {
        mean_x1: f64,
        sd_x1: f64,
        mean_dx: f64,
        sd_dx: f64,
    },
    /// X_t ~ Bernoulli(p_t), independent across periods.
    Bernoulli { p1: f64, p2: f64 },
}

impl Default for XLaw {
    fn default() -> Self {
        XLaw::Normal {
            mean_x1: 11.7,
            sd_x1: 0.49,
            mean_dx: 0.34,
            sd_dx: 0.43,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CovariateLaw {
    Uniform,
    Bernoulli { p: f64 },
}

impl CovariateLaw {
    fn variance(&self) -> f64 {
        match self {
            CovariateLaw::Uniform => 1.0 / 12.0,
            CovariateLaw::Bernoulli { p } => p * (1.0 - p),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AlphaLaw {
    /// alpha = intercept + gamma_xbar X_bar + gamma_z' z + e, e ~ N(0, sd_e^2).
    Linear {
        #[serde(default)]
        intercept: f64,
        #[serde(default)]
        gamma_xbar: f64,
        #[serde(default)]
        gamma_z: Vec<f64>,
        sd_e: f64,
    },
    /// Mass points independent of everything else.
    Discrete { values: Vec<f64>, probs: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: f64,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ErrorLaw {
    Logistic {
        scale: f64,
    },
    Normal {
        scale: f64,
    },
    /// Mixture of normals.
    Mixture {
        components: Vec<MixtureComponent>,
    },
}

impl ErrorLaw {
    /// Quantile at the standard normal draw z, i.e. F^-1(Phi(z)). Works in
    /// the tail nearest to z to keep precision.
    fn quantile_at_normal(&self, z: f64) -> f64 {
        let std = Normal::new(0.0, 1.0).expect("standard normal");
        match self {
            ErrorLaw::Normal { scale } => scale * z,
            ErrorLaw::Logistic { scale } => {
                if *scale == 0.0 {
                    return 0.0;
                }
                scale * (std.cdf(z).ln() - std.cdf(-z).ln())
            }
            ErrorLaw::Mixture { components } => {
                let total: f64 = components.iter().map(|c| c.weight).sum();
                // tail probability on the side of z, matched by bisection
                let upper = z > 0.0;
                let target = std.cdf(-z.abs());
                let tail = |u: f64| {
                    components
                        .iter()
                        .map(|c| {
                            let s = (u - c.mean) / c.scale;
                            c.weight * if upper { std.cdf(-s) } else { std.cdf(s) }
                        })
                        .sum::<f64>()
                        / total
                };
                let spread = components
                    .iter()
                    .map(|c| c.mean.abs() + 40.0 * c.scale)
                    .fold(1.0, f64::max);
                let (mut lo, mut hi) = (-spread, spread);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    // tail(mid) is decreasing in mid for the upper tail
                    let go_up = if upper {
                        tail(mid) > target
                    } else {
                        tail(mid) < target
                    };
                    if go_up {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            ErrorLaw::Logistic { scale } | ErrorLaw::Normal { scale } => {
                *scale >= 0.0 && scale.is_finite()
            }
            ErrorLaw::Mixture { components } => {
                !components.is_empty() && components.iter().all(|c| c.weight > 0.0 && c.scale > 0.0)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(FeltError::Config("invalid error law parameters".into()))
        }
    }
}

fn default_beta() -> f64 {
    1.0
}

/// Full description of a simulated panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpConfig {
    pub n: usize,
    pub seed: u64,
    #[serde(default)]
    pub x: XLaw,
    #[serde(default)]
    pub covariates: Vec<CovariateLaw>,
    pub alpha: AlphaLaw,
    pub errors: ErrorLaw,
    /// Gaussian-copula correlation of (U_1, U_2).
    #[serde(default)]
    pub rho: f64,
    /// U_it is multiplied by 1 + slope |dX_i| (stationary heteroskedasticity).
    #[serde(default)]
    pub error_scale_slope: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    pub transform1: Transform,
    pub transform2: Transform,
}

impl DgpConfig {
    /// Linear-shift outcomes g_t(y) = y - d_t with d = (0, 1), standard
    /// logistic errors, alpha independent of X.
    pub fn dgp_l1(n: usize, seed: u64) -> Self {
        DgpConfig {
            n,
            seed,
            x: XLaw::default(),
            covariates: vec![],
            alpha: AlphaLaw::Linear {
                intercept: 0.0,
                gamma_xbar: 0.0,
                gamma_z: vec![],
                sd_e: 1.0,
            },
            errors: ErrorLaw::Logistic { scale: 1.0 },
            rho: 0.0,
            error_scale_slope: 0.0,
            beta: 1.0,
            transform1: Transform::LinearShift { d: 0.0 },
            transform2: Transform::LinearShift { d: 1.0 },
        }
    }

    /// Demand-style design: alpha = -0.1 X_bar + 0.5 z_1 + e with sd(e) =
    /// 0.15, logistic errors of scale 0.1, PIGL outcome maps.
    pub fn dgp_s(n: usize, seed: u64) -> Self {
        DgpConfig {
            n,
            seed,
            x: XLaw::default(),
            covariates: vec![CovariateLaw::Uniform],
            alpha: AlphaLaw::Linear {
                intercept: 0.0,
                gamma_xbar: -0.1,
                gamma_z: vec![0.5],
                sd_e: 0.15,
            },
            errors: ErrorLaw::Logistic { scale: 0.1 },
            rho: 0.0,
            error_scale_slope: 0.0,
            beta: 1.0,
            transform1: Transform::Pigl {
                c: 0.6,
                b: 0.02,
                r: 0.3,
            },
            transform2: Transform::Pigl {
                c: 0.7,
                b: 0.03,
                r: 0.3,
            },
        }
    }

    /// h_1^-(y) = y and h_2^-(y) = 2y with standard logistic errors.
    pub fn tracing(n: usize, seed: u64) -> Self {
        DgpConfig {
            transform1: Transform::Affine {
                scale: 1.0,
                shift: 0.0,
            },
            transform2: Transform::Affine {
                scale: 0.5,
                shift: 0.0,
            },
            ..DgpConfig::dgp_l1(n, seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(FeltError::Config("n must be at least 2".into()));
        }
        self.transform1.validate()?;
        self.transform2.validate()?;
        self.errors.validate()?;
        if !(-1.0..=1.0).contains(&self.rho) || self.rho.abs() == 1.0 {
            return Err(FeltError::Config("rho must lie in (-1, 1)".into()));
        }
        if !self.beta.is_finite() || self.error_scale_slope < 0.0 {
            return Err(FeltError::Config(
                "invalid beta or error scale slope".into(),
            ));
        }
        match &self.x {
            XLaw::Normal { sd_x1, sd_dx, .. } if *sd_x1 < 0.0 || *sd_dx < 0.0 => {
                return Err(FeltError::Config(
                    "X standard deviations must be non-negative".into(),
                ))
            }
            XLaw::Bernoulli { p1, p2 }
                if !(0.0..=1.0).contains(p1) || !(0.0..=1.0).contains(p2) =>
            {
                return Err(FeltError::Config(
                    "X probabilities must lie in [0, 1]".into(),
                ))
            }
            _ => {}
        }
        for c in &self.covariates {
            if let CovariateLaw::Bernoulli { p } = c {
                if !(0.0..=1.0).contains(p) {
                    return Err(FeltError::Config(
                        "covariate probability outside [0, 1]".into(),
                    ));
                }
            }
        }
        match &self.alpha {
            AlphaLaw::Linear { gamma_z, sd_e, .. } => {
                if !gamma_z.is_empty() && gamma_z.len() != self.covariates.len() {
                    return Err(FeltError::Config(format!(
                        "gamma_z has {} entries for {} covariates",
                        gamma_z.len(),
                        self.covariates.len()
                    )));
                }
                if *sd_e < 0.0 {
                    return Err(FeltError::Config("sd_e must be non-negative".into()));
                }
            }
            AlphaLaw::Discrete { values, probs } => {
                if values.is_empty()
                    || values.len() != probs.len()
                    || probs.iter().any(|&p| p < 0.0)
                {
                    return Err(FeltError::Config(
                        "discrete alpha law needs matching non-negative probs".into(),
                    ));
                }
                if (probs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                    return Err(FeltError::Config(
                        "discrete alpha probabilities must sum to 1".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    fn x_bar_moments(&self) -> Option<(f64, f64, f64)> {
        match self.x {
            XLaw::Normal { sd_x1, sd_dx, .. } => {
                let v1 = sd_x1 * sd_x1;
                let vd = sd_dx * sd_dx;
                // Var(X_bar), Cov(X_bar, X1), Cov(X_bar, X2)
                Some((v1 + vd / 4.0, v1, v1 + vd / 2.0))
            }
            XLaw::Bernoulli { p1, p2 } => {
                let v1 = p1 * (1.0 - p1);
                let v2 = p2 * (1.0 - p2);
                Some(((v1 + v2) / 4.0, v1 / 2.0, v2 / 2.0))
            }
        }
    }

    /// Population Var(alpha).
    pub fn population_alpha_variance(&self) -> f64 {
        match &self.alpha {
            AlphaLaw::Linear {
                gamma_xbar,
                gamma_z,
                sd_e,
                ..
            } => {
                let (vxbar, _, _) = self.x_bar_moments().unwrap_or((0.0, 0.0, 0.0));
                let vz: f64 = gamma_z
                    .iter()
                    .zip(&self.covariates)
                    .map(|(g, c)| g * g * c.variance())
                    .sum();
                gamma_xbar * gamma_xbar * vxbar + vz + sd_e * sd_e
            }
            AlphaLaw::Discrete { values, probs } => {
                let m: f64 = values.iter().zip(probs).map(|(v, p)| v * p).sum();
                values
                    .iter()
                    .zip(probs)
                    .map(|(v, p)| p * (v - m).powi(2))
                    .sum()
            }
        }
    }

    /// Population Cov(alpha, X_t).
    pub fn population_cov_alpha_x(&self, t: usize) -> f64 {
        match &self.alpha {
            AlphaLaw::Linear { gamma_xbar, .. } => {
                let (_, c1, c2) = self.x_bar_moments().unwrap_or((0.0, 0.0, 0.0));
                gamma_xbar * if t == 1 { c1 } else { c2 }
            }
            AlphaLaw::Discrete { .. } => 0.0,
        }
    }

    /// Population Var(X_t).
    pub fn population_var_x(&self, t: usize) -> f64 {
        match self.x {
            XLaw::Normal { sd_x1, sd_dx, .. } => {
                if t == 1 {
                    sd_x1 * sd_x1
                } else {
                    sd_x1 * sd_x1 + sd_dx * sd_dx
                }
            }
            XLaw::Bernoulli { p1, p2 } => {
                let p = if t == 1 { p1 } else { p2 };
                p * (1.0 - p)
            }
        }
    }
}

/// Latent draws behind a simulated panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentRecord {
    pub alpha: Vec<f64>,
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
    pub ystar1: Vec<f64>,
    pub ystar2: Vec<f64>,
}

impl LatentRecord {
    pub fn ystar(&self, period: usize) -> &[f64] {
        if period == 1 {
            &self.ystar1
        } else {
            &self.ystar2
        }
    }

    /// Columns id, alpha, U1, U2, Ystar1, Ystar2.
    pub fn write_csv<W: std::io::Write>(&self, ids: &[String], writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["id", "alpha", "U1", "U2", "Ystar1", "Ystar2"])?;
        for (i, id) in ids.iter().enumerate().take(self.alpha.len()) {
            w.write_record([
                id.clone(),
                format!("{:?}", self.alpha[i]),
                format!("{:?}", self.u1[i]),
                format!("{:?}", self.u2[i]),
                format!("{:?}", self.ystar1[i]),
                format!("{:?}", self.ystar2[i]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Simulated {
    pub panel: Panel,
    pub latent: LatentRecord,
}

struct Draw {
    x1: f64,
    x2: f64,
    z: Vec<f64>,
    alpha: f64,
    u1: f64,
    u2: f64,
}

fn draw_household(cfg: &DgpConfig, i: usize) -> Draw {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(i as u64);
    let (x1, x2) = match cfg.x {
        XLaw::Normal {
            mean_x1,
            sd_x1,
            mean_dx,
            sd_dx,
        } => {
            let a: f64 = StandardNormal.sample(&mut rng);
            let b: f64 = StandardNormal.sample(&mut rng);
            let x1 = mean_x1 + sd_x1 * a;
            (x1, x1 + mean_dx + sd_dx * b)
        }
        XLaw::Bernoulli { p1, p2 } => {
            let a = (rng.random::<f64>() < p1) as u8 as f64;
            let b = (rng.random::<f64>() < p2) as u8 as f64;
            (a, b)
        }
    };
    let z: Vec<f64> = cfg
        .covariates
        .iter()
        .map(|c| match c {
            CovariateLaw::Uniform => rng.random::<f64>(),
            CovariateLaw::Bernoulli { p } => (rng.random::<f64>() < *p) as u8 as f64,
        })
        .collect();
    let alpha = match &cfg.alpha {
        AlphaLaw::Linear {
            intercept,
            gamma_xbar,
            gamma_z,
            sd_e,
        } => {
            let e: f64 = StandardNormal.sample(&mut rng);
            let zpart: f64 = gamma_z.iter().zip(&z).map(|(g, v)| g * v).sum();
            intercept + gamma_xbar * 0.5 * (x1 + x2) + zpart + sd_e * e
        }
        AlphaLaw::Discrete { values, probs } => {
            let r = rng.random::<f64>();
            let mut acc = 0.0;
            let mut pick = values.len() - 1;
            for (j, p) in probs.iter().enumerate() {
                acc += p;
                if r < acc {
                    pick = j;
                    break;
                }
            }
            values[pick]
        }
    };
    let e1: f64 = StandardNormal.sample(&mut rng);
    let e2: f64 = StandardNormal.sample(&mut rng);
    let n1 = e1;
    let n2 = cfg.rho * e1 + (1.0 - cfg.rho * cfg.rho).sqrt() * e2;
    let mult = 1.0 + cfg.error_scale_slope * (x2 - x1).abs();
    let u1 = mult * cfg.errors.quantile_at_normal(n1);
    let u2 = mult * cfg.errors.quantile_at_normal(n2);
    Draw {
        x1,
        x2,
        z,
        alpha,
        u1,
        u2,
    }
}

pub fn generate(cfg: &DgpConfig) -> Result<Simulated> {
    cfg.validate()?;
    let draws = map_indexed(cfg.n, |i| draw_household(cfg, i));
    let n = cfg.n;
    let l = cfg.covariates.len();
    let mut latent = LatentRecord {
        alpha: Vec::with_capacity(n),
        u1: Vec::with_capacity(n),
        u2: Vec::with_capacity(n),
        ystar1: Vec::with_capacity(n),
        ystar2: Vec::with_capacity(n),
    };
    let (mut y1, mut y2, mut x1, mut x2) = (vec![], vec![], vec![], vec![]);
    let mut cov = DMatrix::zeros(n, l);
    for (i, d) in draws.iter().enumerate() {
        let s1 = d.alpha + cfg.beta * d.x1 - d.u1;
        let s2 = d.alpha + cfg.beta * d.x2 - d.u2;
        latent.alpha.push(d.alpha);
        latent.u1.push(d.u1);
        latent.u2.push(d.u2);
        latent.ystar1.push(s1);
        latent.ystar2.push(s2);
        y1.push(cfg.transform1.apply(s1));
        y2.push(cfg.transform2.apply(s2));
        x1.push(d.x1);
        x2.push(d.x2);
        for (j, v) in d.z.iter().enumerate() {
            cov[(i, j)] = *v;
        }
    }
    if y1.iter().chain(&y2).any(|v| !v.is_finite()) {
        return Err(FeltError::Config(
            "transform produced non-finite outcomes".into(),
        ));
    }
    let ids = (0..n).map(|i| format!("{}", i + 1)).collect();
    let names = (1..=l).map(|j| format!("z{j}")).collect();
    let panel = Panel::new(ids, y1, y2, x1, x2, cov, names)?;
    Ok(Simulated { panel, latent })
}

/// Fixed-effect statistics computed from the true alpha.
pub fn oracle_summaries(latent: &LatentRecord, panel: &Panel) -> Result<FixedEffectSummary> {
    summarize_true_alpha(&latent.alpha, panel)
}

pub fn logistic_cdf(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Fully discrete design for exact enumeration: alpha on mass points, X_t in
/// a finite set of cells, standard logistic U. Thresholds are given in latent
/// units, `c_t = h_t^-(y_t)`, so `P(D_t = 1 | alpha, X) = Lambda(alpha + X_t
/// beta - c_t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDgp {
    pub alpha: Vec<(f64, f64)>,
    pub x_cells: Vec<([f64; 2], f64)>,
    pub beta: f64,
}

impl DiscreteDgp {
    /// alpha in {-1, 1}, (X_1, X_2) uniform on {0, 1}^2, beta = 0.7.
    pub fn standard() -> Self {
        DiscreteDgp {
            alpha: vec![(-1.0, 0.5), (1.0, 0.5)],
            x_cells: vec![
                ([0.0, 0.0], 0.25),
                ([0.0, 1.0], 0.25),
                ([1.0, 0.0], 0.25),
                ([1.0, 1.0], 0.25),
            ],
            beta: 0.7,
        }
    }

    /// (P(D1 = 0, D2 = 1), P(D1 = 1, D2 = 0)) given alpha and X.
    pub fn switch_probs(&self, alpha: f64, x: [f64; 2], c: [f64; 2]) -> (f64, f64) {
        let p1 = logistic_cdf(alpha + self.beta * x[0] - c[0]);
        let p2 = logistic_cdf(alpha + self.beta * x[1] - c[1]);
        ((1.0 - p1) * p2, p1 * (1.0 - p2))
    }

    /// P(D2 = 1 | switcher, alpha, X).
    pub fn up_given_switch(&self, alpha: f64, x: [f64; 2], c: [f64; 2]) -> f64 {
        let (up, down) = self.switch_probs(alpha, x, c);
        up / (up + down)
    }

    /// Sign of the conditional median of D2 - D1 among switchers with
    /// covariates x, integrating over alpha. Zero on an exact tie.
    pub fn median_switch_sign(&self, x: [f64; 2], c: [f64; 2]) -> i8 {
        let (mut up, mut down) = (0.0, 0.0);
        for &(a, w) in &self.alpha {
            let (u, d) = self.switch_probs(a, x, c);
            up += w * u;
            down += w * d;
        }
        match up.partial_cmp(&down) {
            Some(std::cmp::Ordering::Greater) => 1,
            Some(std::cmp::Ordering::Less) => -1,
            _ => 0,
        }
    }
}
