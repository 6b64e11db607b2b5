use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{Distribution, Normal as Gauss};

use super::*;
use crate::rng::rng_from;

const BETA: [f64; 3] = [26.49, 18.82, -1.32];

/// `n_users` users with `per_user` draws each; attention uniform on 1..=5.
fn simulate(n_users: usize, per_user: usize, group_var: f64, resid_var: f64, seed: u64) -> LmmData {
    let mut rng = rng_from(seed);
    let u = Gauss::new(0.0, group_var.sqrt()).unwrap();
    let e = Gauss::new(0.0, resid_var.sqrt()).unwrap();
    let mut d = LmmData::default();
    for g in 0..n_users {
        let ui = u.sample(&mut rng);
        for _ in 0..per_user {
            let a = rng.random_range(1..=5) as f64;
            d.groups.push(format!("P{g:02}"));
            d.attention.push(a);
            d.y.push(BETA[0] + BETA[1] * a + BETA[2] * a * a + ui + e.sample(&mut rng));
        }
    }
    d
}

fn ols(d: &LmmData) -> Vec<f64> {
    let n = d.len();
    let x = DMatrix::from_fn(n, 3, |i, j| d.attention[i].powi(j as i32));
    let y = DVector::from_column_slice(&d.y);
    let xt = x.transpose();
    let beta = (&xt * &x).lu().solve(&(&xt * y)).unwrap();
    beta.iter().copied().collect()
}

#[test]
fn noiseless_quadratic_is_recovered() {
    let d = simulate(6, 40, 0.0, 1e-12, 1);
    let fit = fit_lmm_data(&d, &LmmOptions::default()).unwrap();
    for (b, t) in fit.beta().iter().zip(BETA) {
        assert!((b - t).abs() < 1e-6, "{b} vs {t}");
    }
}

#[test]
fn pinned_zero_ratio_is_ols() {
    let d = simulate(10, 30, 400.0, 900.0, 2);
    let fit = fit_lmm_data(&d, &LmmOptions { fixed_lambda: Some(0.0), ..LmmOptions::default() }).unwrap();
    for (b, o) in fit.beta().iter().zip(ols(&d)) {
        assert!((b - o).abs() < 1e-9, "{b} vs {o}");
    }
    assert_eq!(fit.group_var, 0.0);
}

#[test]
fn recovers_variance_components() {
    let d = simulate(35, 250, 648.27, 900.0, 3);
    let fit = fit_lmm_data(&d, &LmmOptions::default()).unwrap();
    assert!(fit.converged);
    for c in &fit.coefficients {
        assert!((c.ci_high - c.estimate - 1.96 * c.se).abs() < 1e-9);
    }
    for (c, t) in fit.coefficients.iter().zip(BETA) {
        assert!((c.estimate - t).abs() < 4.0 * c.se, "{} = {} (se {})", c.name, c.estimate, c.se);
    }
    assert!((fit.residual_var / 900.0 - 1.0).abs() < 0.1);
    assert!(fit.group_var > 200.0 && fit.group_var < 1500.0, "{}", fit.group_var);
    assert_eq!(fit.blups.len(), 35);

    // local maximum of the profile
    let at = |l: f64| profile_log_likelihood(&d, l, Estimation::Ml).unwrap();
    let best = at(fit.lambda);
    assert!((best - fit.log_likelihood).abs() < 1e-9);
    assert!(best >= at(0.5 * fit.lambda) && best >= at(2.0 * fit.lambda));

    let reml = fit_lmm_data(&d, &LmmOptions { estimation: Estimation::Reml, ..LmmOptions::default() }).unwrap();
    assert!(reml.group_var > fit.group_var);
}

#[test]
fn relabelling_users_permutes_blups() {
    let d = simulate(8, 30, 300.0, 500.0, 4);
    let a = fit_lmm_data(&d, &LmmOptions::default()).unwrap();
    let mut r = d.clone();
    for g in &mut r.groups {
        *g = format!("Q{}", 99 - g[1..].parse::<u32>().unwrap());
    }
    let b = fit_lmm_data(&r, &LmmOptions::default()).unwrap();
    assert_eq!(a.beta(), b.beta());
    for (id, v) in &a.blups {
        let new = format!("Q{}", 99 - id[1..].parse::<u32>().unwrap());
        assert_eq!(b.blups[&new], *v);
    }
}

#[test]
fn blups_shrink_towards_zero_on_balanced_designs() {
    // Every user sees the same attention sequence, so GLS and OLS coincide.
    let mut rng = rng_from(5);
    let mut d = LmmData::default();
    let pattern = [1.0, 2.0, 3.0, 4.0, 5.0, 3.0, 2.0, 4.0];
    for g in 0..12 {
        let ui: f64 = rng.random_range(-30.0..30.0);
        for &a in &pattern {
            d.groups.push(format!("G{g}"));
            d.attention.push(a);
            d.y.push(BETA[0] + BETA[1] * a + BETA[2] * a * a + ui + rng.random_range(-20.0..20.0));
        }
    }
    let fit = fit_lmm_data(&d, &LmmOptions::default()).unwrap();
    let b = ols(&d);
    for (id, blup) in &fit.blups {
        let rows: Vec<usize> = (0..d.len()).filter(|&i| &d.groups[i] == id).collect();
        let mean: f64 = rows
            .iter()
            .map(|&i| d.y[i] - (b[0] + b[1] * d.attention[i] + b[2] * d.attention[i].powi(2)))
            .sum::<f64>()
            / rows.len() as f64;
        assert!(blup.abs() <= mean.abs() + 1e-9, "{id}: {blup} vs {mean}");
    }
}

#[test]
fn no_group_signal_gives_zero_variance() {
    // Users share identical data, so between-user variance is exactly absent.
    let mut d = LmmData::default();
    for g in 0..5 {
        for (k, a) in [1.0, 2.0, 3.0, 4.0, 5.0, 1.0, 5.0].iter().enumerate() {
            d.groups.push(format!("G{g}"));
            d.attention.push(*a);
            d.y.push(10.0 + *a + if k % 2 == 0 { 3.0 } else { -3.0 });
        }
    }
    let fit = fit_lmm_data(&d, &LmmOptions::default()).unwrap();
    assert!(fit.group_var < 1e-6, "{}", fit.group_var);
}

#[test]
fn rejects_degenerate_inputs() {
    let mut d = simulate(1, 20, 0.0, 1.0, 6);
    assert!(fit_lmm_data(&d, &LmmOptions::default()).is_err());
    d = simulate(3, 20, 0.0, 1.0, 6);
    for a in &mut d.attention {
        *a = a.min(3.0);
    }
    assert!(fit_lmm_data(&d, &LmmOptions::default()).is_err());
}
