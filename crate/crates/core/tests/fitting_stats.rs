use std::f64::consts::PI;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use lgi_core::counting::sample_poisson;
use lgi_core::fitting::{fit_cosine, fit_gaussian, FitFlag, FitResult, ModelKind};
use lgi_core::protocol::linspace;

fn poisson(model: ModelKind, truth: &[f64], xs: &[f64], seed: u64) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    xs.iter()
        .map(|&x| (x, sample_poisson(&mut rng, model.value(x, truth)) as f64))
        .collect()
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    0.5 * (xs[(n - 1) / 2] + xs[n / 2])
}

#[test]
fn reduced_chi2_is_near_one_on_poisson_data() {
    let chis = linspace(-PI, PI, 36);
    let positions = linspace(-6.0, 6.0, 49);
    let cos_truth = [800.0, 0.54, 0.3];
    let gauss_truth = [1500.0, 0.2, 1.1, 40.0];
    let cos: Vec<f64> = (0..100)
        .map(|s| fit_cosine(&poisson(ModelKind::Cosine, &cos_truth, &chis, s)).unwrap().reduced_chi2)
        .collect();
    let gauss: Vec<f64> = (0..100)
        .map(|s| fit_gaussian(&poisson(ModelKind::Gaussian, &gauss_truth, &positions, s)).unwrap().reduced_chi2)
        .collect();
    let (mc, mg) = (median(cos), median(gauss));
    assert!((0.7..=1.3).contains(&mc), "cosine median reduced chi2 {mc}");
    assert!((0.7..=1.3).contains(&mg), "gaussian median reduced chi2 {mg}");
}

#[test]
fn phase_shift_by_full_turn_changes_nothing() {
    let chis = linspace(-PI, PI, 25);
    let data = poisson(ModelKind::Cosine, &[600.0, 0.7, -1.0], &chis, 9);
    let shifted: Vec<_> = data.iter().map(|&(x, y)| (x + 2.0 * PI, y)).collect();
    let a = fit_cosine(&data).unwrap();
    let b = fit_cosine(&shifted).unwrap();
    assert!((a.params[0] - b.params[0]).abs() <= 1e-6 * a.params[0]);
    assert!((a.params[1] - b.params[1]).abs() <= 1e-6);
    let d = (a.params[2] - b.params[2]).rem_euclid(2.0 * PI);
    assert!(d.min(2.0 * PI - d) <= 1e-6, "phases {} and {}", a.params[2], b.params[2]);
}

#[test]
fn flat_data_gives_insignificant_visibility() {
    let chis = linspace(-PI, PI, 25);
    for seed in 0..20 {
        let data = poisson(ModelKind::Cosine, &[500.0, 0.0, 0.0], &chis, seed);
        let fit = fit_cosine(&data).unwrap();
        assert!(fit.params[1] < 3.0 * fit.std_errors[1] || fit.has_flag(FitFlag::FlatData));
        assert!((0.0..=1.0).contains(&fit.params[1]));
        assert!(fit.params[2] > -PI && fit.params[2] <= PI);
    }
}

#[test]
fn low_count_fits_stay_finite() {
    let chis = linspace(-PI, PI, 25);
    let data = poisson(ModelKind::Cosine, &[2.0, 0.9, 0.5], &chis, 1);
    let fit = fit_cosine(&data).unwrap();
    assert!(fit.params.iter().all(|p| p.is_finite()));
    let positions = linspace(-5.0, 5.0, 41);
    let data = poisson(ModelKind::Gaussian, &[5.0, 0.0, 1.0, 0.0], &positions, 1);
    let fit = fit_gaussian(&data).unwrap();
    assert!(fit.params.iter().all(|p| p.is_finite()));
}

fn covariance_is_psd(fit: &FitResult) -> bool {
    let n = fit.params.len();
    let m = nalgebra::DMatrix::from_fn(n, n, |i, j| fit.covariance[i][j]);
    let symmetric = (0..n).all(|i| (0..n).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= 1e-12 * m[(i, i)].abs().max(m[(j, j)].abs())));
    let scale = (0..n).map(|i| m[(i, i)].abs()).fold(0.0, f64::max);
    let eig = m.symmetric_eigen().eigenvalues;
    symmetric && eig.iter().all(|&e| e >= -1e-9 * scale)
}

#[test]
fn poisson_fit_covariances_are_psd() {
    let chis = linspace(-PI, PI, 25);
    let positions = linspace(-5.0, 5.0, 41);
    for seed in 0..50 {
        let c = fit_cosine(&poisson(ModelKind::Cosine, &[900.0, 0.6, 2.0], &chis, seed)).unwrap();
        let g = fit_gaussian(&poisson(ModelKind::Gaussian, &[900.0, 0.0, 1.0, 10.0], &positions, seed)).unwrap();
        assert!(covariance_is_psd(&c) && covariance_is_psd(&g));
        assert!(c.std_errors.iter().chain(&g.std_errors).all(|&s| s >= 0.0));
        assert!(c.converged && g.converged);
    }
}

fn check_jacobian(model: ModelKind, p: &[f64], x: f64) -> Result<(), TestCaseError> {
    let mut g = vec![0.0; p.len()];
    model.gradient(x, p, &mut g);
    for i in 0..p.len() {
        let h = 1e-6 * p[i].abs().max(1.0);
        let (mut hi, mut lo) = (p.to_vec(), p.to_vec());
        hi[i] += h;
        lo[i] -= h;
        let fd = (model.value(x, &hi) - model.value(x, &lo)) / (2.0 * h);
        prop_assert!((fd - g[i]).abs() <= 1e-6 * g[i].abs().max(1.0), "param {i}: {fd} vs {}", g[i]);
    }
    Ok(())
}

proptest! {
    #[test]
    fn cosine_jacobian_matches_finite_differences(
        a in 1.0..5000.0f64, v in 0.0..1.0f64, phase in -PI..PI, x in -2.0 * PI..2.0 * PI,
    ) {
        check_jacobian(ModelKind::Cosine, &[a, v, phase], x)?;
    }

    #[test]
    fn gaussian_jacobian_matches_finite_differences(
        n in 1.0..5000.0f64, x0 in -5.0..5.0f64, w in 0.3..3.0f64, b in 0.0..100.0f64, x in -8.0..8.0f64,
    ) {
        check_jacobian(ModelKind::Gaussian, &[n, x0, w, b], x)?;
    }

    #[test]
    fn noiseless_cosine_is_a_fixed_point(a in 50.0..5000.0f64, v in 0.05..0.95f64, phase in -3.0..3.0f64) {
        let data: Vec<_> = linspace(-PI, PI, 25).into_iter()
            .map(|x| (x, ModelKind::Cosine.value(x, &[a, v, phase])))
            .collect();
        let fit = fit_cosine(&data).unwrap();
        prop_assert!(fit.converged);
        prop_assert!((fit.params[0] - a).abs() <= 1e-8 * a);
        prop_assert!((fit.params[1] - v).abs() <= 1e-8);
        prop_assert!((fit.params[2] - phase).abs() <= 1e-8);
    }
}
