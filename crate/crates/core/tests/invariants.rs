mod common;

use emmb::{
    coef_inference, estimate_bounds, fit_closed_form, fit_em, fit_from_beta, partition_windows, Dataset, EmConfig,
    WindowPlan,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

/// Random instance with drifting window intercepts.
fn instance(seed: u64, n: usize, p: usize) -> Dataset {
    let mut r = common::rng(seed);
    let x = DMatrix::from_fn(n, p, |_, _| r.sample::<f64, _>(StandardNormal) + 0.5);
    let beta: Vec<f64> = (0..p).map(|_| r.random_range(-3.0..3.0)).collect();
    let mut level = 0.0;
    let y = DVector::from_fn(n, |i, _| {
        if i % 17 == 0 {
            level = r.random_range(-10.0..30.0);
        }
        (0..p).map(|j| x[(i, j)] * beta[j]).sum::<f64>() + level + r.random_range(1.0..2.0) * r.sample::<f64, _>(StandardNormal)
    });
    Dataset::unnamed(x, y).unwrap()
}

fn tight() -> EmConfig {
    EmConfig { tol: 1e-12, max_iter: 200_000, ..EmConfig::default() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn em_equals_closed_form(seed in any::<u64>(), n in 40usize..200, p in 1usize..4, n0 in 2usize..12) {
        let data = instance(seed, n, p);
        let plan = partition_windows(n, n0).unwrap();
        let fit = fit_em(&data, &plan, &tight()).unwrap();
        let (beta, _) = fit_closed_form(&data, &plan).unwrap();
        prop_assert!(fit.converged);
        prop_assert!((&fit.beta_hat - &beta).amax() < 1e-8);
    }

    #[test]
    fn objective_never_increases(seed in any::<u64>(), n in 40usize..200, p in 1usize..4) {
        let data = instance(seed, n, p);
        let plan = WindowPlan::fixed(n, 10).unwrap();
        let fit = fit_em(&data, &plan, &EmConfig::default()).unwrap();
        for pair in fit.trace.windows(2) {
            prop_assert!(pair[1].objective <= pair[0].objective * (1.0 + 1e-12) + 1e-12);
        }
    }

    #[test]
    fn location_shift(seed in any::<u64>(), n in 40usize..150, c in -1e3f64..1e3) {
        let data = instance(seed, n, 2);
        let plan = WindowPlan::fixed(n, 8).unwrap();
        let (b0, _) = fit_closed_form(&data, &plan).unwrap();
        let (b1, _) = fit_closed_form(&data.shifted(c), &plan).unwrap();
        prop_assert!((&b0 - &b1).amax() < 1e-9 * (1.0 + c.abs()));
        let f0 = fit_from_beta(&data, &plan, &b0).unwrap();
        let f1 = fit_from_beta(&data.shifted(c), &plan, &b0).unwrap();
        for (a, b) in f0.window_intercepts.iter().zip(f1.window_intercepts.iter()) {
            prop_assert!((b - a - c).abs() < 1e-9 * (1.0 + c.abs()));
        }
        let w = 20.min(n);
        let g0 = estimate_bounds(&data, &b0, &plan, w).unwrap();
        let g1 = estimate_bounds(&data.shifted(c), &b0, &plan, w).unwrap();
        prop_assert!((g1.mu_lower_hat - g0.mu_lower_hat - c).abs() < 1e-9 * (1.0 + c.abs()));
        prop_assert!((g1.mu_upper_hat - g0.mu_upper_hat - c).abs() < 1e-9 * (1.0 + c.abs()));
    }

    #[test]
    fn residuals_orthogonal(seed in any::<u64>(), n in 40usize..300, p in 1usize..5, n0 in 2usize..15) {
        let data = instance(seed, n, p);
        let plan = partition_windows(n, n0).unwrap();
        let (beta, _) = fit_closed_form(&data, &plan).unwrap();
        let fit = fit_from_beta(&data, &plan, &beta).unwrap();
        let scale = data.y().amax().max(1.0);
        for w in plan.windows() {
            prop_assert!(fit.residuals.rows(w.start, w.len()).sum().abs() < 1e-10 * scale * w.len() as f64);
        }
        let score = data.x().transpose() * &fit.residuals;
        prop_assert!(score.amax() < 1e-8);
    }

    #[test]
    fn se_scale_equivariance(seed in any::<u64>(), c in prop_oneof![-50.0f64..-0.1, 0.1f64..50.0]) {
        let data = instance(seed, 120, 2);
        let plan = WindowPlan::fixed(120, 10).unwrap();
        let table = |d: &Dataset| {
            let (beta, diag) = fit_closed_form(d, &plan).unwrap();
            let fit = fit_from_beta(d, &plan, &beta).unwrap();
            coef_inference(d, &fit, &diag).unwrap()
        };
        let t0 = table(&data);
        let t1 = table(&data.scaled(c));
        for (a, b) in t0.rows.iter().zip(&t1.rows) {
            prop_assert!((b.estimate - c * a.estimate).abs() < 1e-8 * (1.0 + (c * a.estimate).abs()));
            prop_assert!((b.std_error - c.abs() * a.std_error).abs() < 1e-8 * c.abs() * a.std_error);
            prop_assert!((b.z - c.signum() * a.z).abs() < 1e-6 * (1.0 + a.z.abs()));
            prop_assert!((b.p_value - a.p_value).abs() < 1e-8);
        }
    }

    #[test]
    fn repeated_fits_identical(seed in any::<u64>()) {
        let data = instance(seed, 90, 3);
        let plan = WindowPlan::fixed(90, 9).unwrap();
        let a = fit_em(&data, &plan, &EmConfig::default()).unwrap();
        let b = fit_em(&data, &plan, &EmConfig::default()).unwrap();
        prop_assert_eq!(a, b);
    }
}
