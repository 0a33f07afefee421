use felt_core::binarize::{
    binarize, decile_grid, fit_composite_logit, fit_pair_logit, max_score_direction,
    trace_transforms, ThetaEstimate,
};
use felt_core::stats::quantile;
use felt_core::synth::{generate, logistic_cdf, AlphaLaw, DgpConfig, ErrorLaw, Transform, XLaw};

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

#[test]
fn symmetric_switchers_give_zero_gamma() {
    let cfg = DgpConfig {
        x: XLaw::Normal {
            mean_x1: 11.7,
            sd_x1: 0.49,
            mean_dx: 0.0,
            sd_dx: 0.0,
        },
        transform2: Transform::LinearShift { d: 0.0 },
        ..DgpConfig::dgp_l1(100_000, 11)
    };
    let sim = generate(&cfg).unwrap();
    let p = &sim.panel;
    assert!(p.delta_x().iter().all(|&d| d == 0.0));
    let pooled: Vec<f64> = p.y(1).iter().chain(p.y(2)).copied().collect();
    let c = quantile(&pooled, 0.5);
    let fit = fit_pair_logit(&binarize(p, c, c), p).unwrap();
    assert_eq!(fit.beta, vec![0.0]);
    assert!(fit.gamma.abs() <= 0.03, "gamma {}", fit.gamma);
}

/// Binary budgets, two fixed-effect mass points, logistic errors.
fn discrete_design(n: usize, seed: u64) -> DgpConfig {
    DgpConfig {
        x: XLaw::Bernoulli { p1: 0.4, p2: 0.6 },
        alpha: AlphaLaw::Discrete {
            values: vec![-1.0, 1.0],
            probs: vec![0.5, 0.5],
        },
        transform1: Transform::LinearShift { d: 0.0 },
        transform2: Transform::LinearShift { d: 0.0 },
        ..DgpConfig::dgp_l1(n, seed)
    }
}

/// P(D_2 = 1 | switch, dX) by enumerating the (alpha, X_1, X_2) support.
/// D_t = 1 iff U_t <= alpha + X_t - c_t.
fn exact_up_probability(dx: i32, c1: f64, c2: f64) -> f64 {
    let (mut up, mut switch) = (0.0, 0.0);
    for (alpha, pa) in [(-1.0, 0.5), (1.0, 0.5)] {
        for (x1, px1) in [(0.0, 0.6), (1.0, 0.4)] {
            for (x2, px2) in [(0.0, 0.4), (1.0, 0.6)] {
                if (x2 - x1) as i32 != dx {
                    continue;
                }
                let w = pa * px1 * px2;
                let p1 = logistic_cdf(alpha + x1 - c1);
                let p2 = logistic_cdf(alpha + x2 - c2);
                up += w * (1.0 - p1) * p2;
                switch += w * ((1.0 - p1) * p2 + p1 * (1.0 - p2));
            }
        }
    }
    up / switch
}

#[test]
fn discrete_design_matches_enumerated_probabilities() {
    let (c1, c2) = (0.5, 0.8);
    let gamma = -logit(exact_up_probability(0, c1, c2));
    let beta = logit(exact_up_probability(1, c1, c2)) + gamma;
    // the fixed effect drops out, so the enumerated logits are exactly linear in dX
    assert!((logit(exact_up_probability(-1, c1, c2)) - (-beta - gamma)).abs() < 1e-12);
    assert!((beta - 1.0).abs() < 1e-12 && (gamma - (c2 - c1)).abs() < 1e-12);

    let fits: Vec<_> = (0..10)
        .map(|seed| {
            let sim = generate(&discrete_design(100_000, seed)).unwrap();
            fit_pair_logit(&binarize(&sim.panel, c1, c2), &sim.panel).unwrap()
        })
        .collect();
    let first = &fits[0];
    assert!(
        (first.beta[0] - beta).abs() <= 2.0 * first.se_beta[0],
        "{first:?}"
    );
    assert!(
        (first.gamma - gamma).abs() <= 2.0 * first.se_gamma,
        "{first:?}"
    );
    // the average of ten independent fits has a standard error sqrt(10) times smaller
    let avg =
        |f: &dyn Fn(&ThetaEstimate) -> f64| fits.iter().map(f).sum::<f64>() / fits.len() as f64;
    let scale = 2.0 / (fits.len() as f64).sqrt();
    assert!((avg(&|f| f.beta[0]) - beta).abs() <= scale * avg(&|f| f.se_beta[0]));
    assert!((avg(&|f| f.gamma) - gamma).abs() <= scale * avg(&|f| f.se_gamma));
}

#[test]
fn single_cell_composite_reduces_to_pair_fit() {
    let sim = generate(&DgpConfig::dgp_l1(3000, 13)).unwrap();
    let p = &sim.panel;
    let (c1, c2) = (quantile(p.y(1), 0.4), quantile(p.y(2), 0.6));
    let pair = fit_pair_logit(&binarize(p, c1, c2), p).unwrap();
    let comp = fit_composite_logit(p, &[c1], &[c2]).unwrap();
    assert!((comp.beta - pair.beta[0]).abs() < 1e-8);
    assert!((comp.gamma[0][0].unwrap() - pair.gamma).abs() < 1e-8);
    assert!((comp.log_likelihood - pair.log_likelihood).abs() < 1e-8);
}

#[test]
fn composite_slope_near_truth() {
    let sim = generate(&DgpConfig::dgp_l1(5000, 14)).unwrap();
    let p = &sim.panel;
    let c = fit_composite_logit(p, &decile_grid(p.y(1)), &decile_grid(p.y(2))).unwrap();
    assert!((c.beta - 1.0).abs() <= 0.1, "beta {}", c.beta);
}

#[test]
fn changing_the_anchor_shifts_by_a_constant() {
    let sim = generate(&DgpConfig::tracing(10_000, 15)).unwrap();
    let p = &sim.panel;
    let (g1, g2) = (decile_grid(p.y(1)), decile_grid(p.y(2)));
    let c = fit_composite_logit(p, &g1, &g2).unwrap();
    let (a, b) = (4, 6);
    let ta = trace_transforms(&c.gamma, &g1, &g2, g1[a]).unwrap();
    let tb = trace_transforms(&c.gamma, &g1, &g2, g1[b]).unwrap();
    let shift = ta.h1_inverse[b].unwrap();
    for i in 0..g1.len() {
        let d = ta.h1_inverse[i].unwrap() - tb.h1_inverse[i].unwrap();
        assert!((d - shift).abs() < 1e-10);
    }
    // h2 differences are single cells, so they match the shift up to noise
    let m = g2.len() as f64;
    for j in 0..g2.len() {
        let d = ta.h2_inverse[j].unwrap() - tb.h2_inverse[j].unwrap();
        let mut terms = vec![(a, j, 1.0), (b, j, -1.0)];
        for k in 0..g2.len() {
            terms.push((a, k, -1.0 / m));
            terms.push((b, k, 1.0 / m));
        }
        let se = c.contrast_se(&terms).unwrap();
        assert!(
            (d - shift).abs() <= 3.0 * se,
            "column {j}: {d} vs {shift} (se {se})"
        );
    }
}

#[test]
fn gamma_rises_with_second_threshold_on_average() {
    let reps = 50;
    let levels1 = [0.3, 0.5, 0.7];
    let levels2 = [0.2, 0.35, 0.5, 0.65, 0.8];
    let mut sums = vec![vec![0.0; levels2.len()]; levels1.len()];
    for rep in 0..reps {
        let sim = generate(&DgpConfig::tracing(2000, 100 + rep)).unwrap();
        let p = &sim.panel;
        let g1: Vec<f64> = levels1.iter().map(|&q| quantile(p.y(1), q)).collect();
        let g2: Vec<f64> = levels2.iter().map(|&q| quantile(p.y(2), q)).collect();
        let c = fit_composite_logit(p, &g1, &g2).unwrap();
        for (i, row) in c.gamma.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                sums[i][j] += v.unwrap();
            }
        }
    }
    for row in &sums {
        assert!(row.windows(2).all(|w| w[1] > w[0]), "{row:?}");
    }
}

#[test]
fn max_score_sign_under_heteroskedastic_normal_errors() {
    let mut correct = 0;
    for rep in 0..100 {
        let cfg = DgpConfig {
            errors: ErrorLaw::Normal { scale: 1.0 },
            error_scale_slope: 1.0,
            ..DgpConfig::dgp_l1(2000, 200 + rep)
        };
        let sim = generate(&cfg).unwrap();
        let p = &sim.panel;
        let pair = binarize(p, quantile(p.y(1), 0.5), quantile(p.y(2), 0.5));
        let fit = max_score_direction(&pair, p, 1).unwrap();
        if fit.direction[0] > 0.0 {
            correct += 1;
        }
    }
    assert!(correct >= 98, "sign correct in {correct}/100");
}
