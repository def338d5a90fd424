//! Poisson-weighted nonlinear least squares for interferograms and
//! transversal beam profiles.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAX_ITERATIONS: usize = 200;
const RELATIVE_COST_TOL: f64 = 1e-10;
const INITIAL_DAMPING: f64 = 1e-3;
const DAMPING_FACTOR: f64 = 10.0;
const MAX_DAMPING: f64 = 1e16;
/// Largest allowed cosine between the residual and any Jacobian column at a
/// point reported as converged.
const GRADIENT_TOL: f64 = 1e-3;
const REWEIGHT_PASSES: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// `A·(1 + V·cos(χ − χ₀))`, parameters `[A, V, χ₀]`.
    Cosine,
    /// `N₀·exp(−(x − x₀)²/(2w²)) + b`, parameters `[N₀, x₀, w, b]`.
    Gaussian,
}

impl ModelKind {
    pub fn n_params(self) -> usize {
        match self {
            ModelKind::Cosine => 3,
            ModelKind::Gaussian => 4,
        }
    }

    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            ModelKind::Cosine => &["amplitude", "visibility", "phase"],
            ModelKind::Gaussian => &["peak", "center", "width", "background"],
        }
    }

    pub fn value(self, x: f64, p: &[f64]) -> f64 {
        match self {
            ModelKind::Cosine => p[0] * (1.0 + p[1] * (x - p[2]).cos()),
            ModelKind::Gaussian => {
                let z = (x - p[1]) / p[2];
                p[0] * (-0.5 * z * z).exp() + p[3]
            }
        }
    }

    /// Partial derivatives of [`ModelKind::value`] with respect to each
    /// parameter.
    pub fn gradient(self, x: f64, p: &[f64], out: &mut [f64]) {
        match self {
            ModelKind::Cosine => {
                let (s, c) = (x - p[2]).sin_cos();
                out[0] = 1.0 + p[1] * c;
                out[1] = p[0] * c;
                out[2] = p[0] * p[1] * s;
            }
            ModelKind::Gaussian => {
                let d = x - p[1];
                let w = p[2];
                let e = (-0.5 * d * d / (w * w)).exp();
                out[0] = e;
                out[1] = p[0] * e * d / (w * w);
                out[2] = p[0] * e * d * d / (w * w * w);
                out[3] = 1.0;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitFlag {
    NotConverged,
    /// Fitted visibility is not significant (`V < 3σ_V`).
    FlatData,
    VisibilityAboveOne,
    WidthBelowSpacing,
    SingularCovariance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: ModelKind,
    pub params: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub reduced_chi2: f64,
    pub converged: bool,
    pub iterations: usize,
    pub flags: Vec<FitFlag>,
}

impl FitResult {
    pub fn value_at(&self, x: f64) -> f64 {
        self.model.value(x, &self.params)
    }

    /// Variance of the fitted model value at `x`, by first-order propagation
    /// of the parameter covariance.
    pub fn value_variance_at(&self, x: f64) -> f64 {
        let n = self.params.len();
        let mut g = vec![0.0; n];
        self.model.gradient(x, &self.params, &mut g);
        let mut var = 0.0;
        for i in 0..n {
            for j in 0..n {
                var += g[i] * self.covariance[i][j] * g[j];
            }
        }
        var
    }

    pub fn has_flag(&self, flag: FitFlag) -> bool {
        self.flags.contains(&flag)
    }
}

fn check_data(data: &[(f64, f64)]) -> Result<()> {
    if data.len() < 5 {
        return Err(Error::InsufficientData(format!(
            "need at least 5 points, got {}",
            data.len()
        )));
    }
    if data.iter().any(|&(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::InsufficientData("non-finite data point".into()));
    }
    Ok(())
}

fn wrap_phase(phi: f64) -> f64 {
    let mut w = phi.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

fn argmax(data: &[(f64, f64)]) -> usize {
    data.iter()
        .enumerate()
        .fold(0, |best, (i, p)| if p.1 > data[best].1 { i } else { best })
}

fn min_max(data: &[(f64, f64)]) -> (f64, f64) {
    data.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(p.1), hi.max(p.1))
        })
}

fn min_spacing(data: &[(f64, f64)]) -> f64 {
    let mut xs: Vec<f64> = data.iter().map(|p| p.0).collect();
    xs.sort_by(f64::total_cmp);
    xs.windows(2)
        .map(|w| w[1] - w[0])
        .filter(|&d| d > 0.0)
        .fold(f64::INFINITY, f64::min)
}

/// Deterministic starting point for the iterative fit.
pub fn initial_guess(model: ModelKind, data: &[(f64, f64)]) -> Vec<f64> {
    let (lo, hi) = min_max(data);
    let peak = data[argmax(data)];
    match model {
        ModelKind::Cosine => {
            let mean = data.iter().map(|p| p.1).sum::<f64>() / data.len() as f64;
            let visibility = if hi + lo > 0.0 { (hi - lo) / (hi + lo) } else { 0.0 };
            vec![mean, visibility, wrap_phase(peak.0)]
        }
        ModelKind::Gaussian => {
            let half = lo + 0.5 * (hi - lo);
            let (left, right) = data
                .iter()
                .filter(|p| p.1 >= half)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, r), p| {
                    (l.min(p.0), r.max(p.0))
                });
            let spacing = min_spacing(data);
            let spacing = if spacing.is_finite() { spacing } else { 1.0 };
            let hwhm = (0.5 * (right - left)).max(0.5 * spacing);
            vec![hi - lo, peak.0, hwhm, lo]
        }
    }
}

struct Problem<'a> {
    model: ModelKind,
    data: &'a [(f64, f64)],
    weights: Vec<f64>,
}

impl Problem<'_> {
    fn cost(&self, p: &[f64]) -> f64 {
        self.data
            .iter()
            .zip(&self.weights)
            .map(|(&(x, y), w)| {
                let r = y - self.model.value(x, p);
                w * r * r
            })
            .sum()
    }

    /// Normal matrix `JᵀWJ` and gradient vector `JᵀW r`.
    fn normal_equations(&self, p: &[f64]) -> (DMatrix<f64>, DVector<f64>) {
        let n = p.len();
        let mut h = DMatrix::zeros(n, n);
        let mut g = DVector::zeros(n);
        let mut row = vec![0.0; n];
        for (&(x, y), &w) in self.data.iter().zip(&self.weights) {
            self.model.gradient(x, p, &mut row);
            let r = y - self.model.value(x, p);
            for i in 0..n {
                g[i] += w * row[i] * r;
                for j in 0..n {
                    h[(i, j)] += w * row[i] * row[j];
                }
            }
        }
        (h, g)
    }

    fn gradient_cosine(&self, h: &DMatrix<f64>, g: &DVector<f64>, cost: f64) -> f64 {
        (0..g.len())
            .map(|i| {
                let scale = (h[(i, i)] * cost).sqrt();
                if scale > 0.0 {
                    g[i].abs() / scale
                } else {
                    0.0
                }
            })
            .fold(0.0, f64::max)
    }
}

struct Outcome {
    params: Vec<f64>,
    cost: f64,
    converged: bool,
    iterations: usize,
}

fn damped_gauss_newton(problem: &Problem<'_>, start: Vec<f64>) -> Outcome {
    let mut params = start;
    let mut cost = problem.cost(&params);
    let scale: f64 = problem
        .data
        .iter()
        .zip(&problem.weights)
        .map(|(p, w)| w * p.1 * p.1)
        .sum::<f64>()
        .max(f64::MIN_POSITIVE);
    let mut lambda = INITIAL_DAMPING;
    let mut iterations = 0;
    let mut stopped = false;

    while iterations < MAX_ITERATIONS {
        if cost <= 1e-24 * scale {
            stopped = true;
            break;
        }
        iterations += 1;
        let (h, g) = problem.normal_equations(&params);
        let diag_max = (0..h.nrows()).map(|i| h[(i, i)]).fold(0.0, f64::max);
        let mut damped = h.clone();
        for i in 0..damped.nrows() {
            damped[(i, i)] += lambda * h[(i, i)].max(1e-12 * diag_max);
        }
        let step = damped.cholesky().map(|c| c.solve(&g));
        let Some(step) = step else {
            lambda *= DAMPING_FACTOR;
            if lambda > MAX_DAMPING {
                break;
            }
            continue;
        };
        let trial: Vec<f64> = params.iter().zip(step.iter()).map(|(p, d)| p + d).collect();
        let trial_cost = problem.cost(&trial);
        if trial_cost.is_finite() && trial_cost < cost {
            let relative = (cost - trial_cost) / cost;
            params = trial;
            cost = trial_cost;
            lambda = (lambda / DAMPING_FACTOR).max(1e-12);
            if relative < RELATIVE_COST_TOL {
                stopped = true;
                break;
            }
        } else {
            lambda *= DAMPING_FACTOR;
            if lambda > MAX_DAMPING {
                stopped = true;
                break;
            }
        }
    }

    let converged = stopped && {
        let (h, g) = problem.normal_equations(&params);
        cost <= 1e-24 * scale || problem.gradient_cosine(&h, &g, cost) <= GRADIENT_TOL
    };
    Outcome {
        params,
        cost,
        converged,
        iterations,
    }
}

fn normalize(model: ModelKind, params: &mut [f64]) {
    match model {
        ModelKind::Cosine => {
            if params[1] < 0.0 {
                params[1] = -params[1];
                params[2] += PI;
            }
            params[2] = wrap_phase(params[2]);
        }
        ModelKind::Gaussian => params[2] = params[2].abs(),
    }
}

fn fit(model: ModelKind, data: &[(f64, f64)], start: Vec<f64>) -> FitResult {
    let mut problem = Problem {
        model,
        data,
        weights: data.iter().map(|p| 1.0 / p.1.max(1.0)).collect(),
    };
    let mut outcome = damped_gauss_newton(&problem, start);
    // Data weights bias low-count parameters; refine with the fitted
    // expectation as the Poisson variance.
    for _ in 0..REWEIGHT_PASSES {
        problem.weights = data
            .iter()
            .map(|p| 1.0 / model.value(p.0, &outcome.params).max(1.0))
            .collect();
        let iterations = outcome.iterations;
        outcome = damped_gauss_newton(&problem, outcome.params);
        outcome.iterations += iterations;
    }
    let mut params = outcome.params;
    normalize(model, &mut params);

    let n = params.len();
    let dof = data.len().saturating_sub(n).max(1);
    let reduced_chi2 = outcome.cost / dof as f64;
    let (h, _) = problem.normal_equations(&params);
    let mut flags = Vec::new();
    let covariance = match h.try_inverse() {
        Some(inv) if inv.iter().all(|v| v.is_finite()) => (0..n)
            .map(|i| (0..n).map(|j| inv[(i, j)] * reduced_chi2).collect())
            .collect(),
        _ => {
            flags.push(FitFlag::SingularCovariance);
            vec![vec![f64::INFINITY; n]; n]
        }
    };
    let std_errors: Vec<f64> = (0..n).map(|i| covariance[i][i].max(0.0).sqrt()).collect();

    if !outcome.converged {
        flags.push(FitFlag::NotConverged);
    }
    match model {
        ModelKind::Cosine => {
            if params[1].is_nan() || params[1] < 3.0 * std_errors[1] || flags.contains(&FitFlag::SingularCovariance)
            {
                flags.push(FitFlag::FlatData);
            }
            if params[1] > 1.0 {
                flags.push(FitFlag::VisibilityAboveOne);
            }
        }
        ModelKind::Gaussian => {
            if params[2] < min_spacing(data) {
                flags.push(FitFlag::WidthBelowSpacing);
            }
        }
    }

    FitResult {
        model,
        params,
        std_errors,
        covariance,
        reduced_chi2,
        converged: outcome.converged,
        iterations: outcome.iterations,
        flags,
    }
}

/// Fits `N(χ) = A·(1 + V·cos(χ − χ₀))` to interferogram counts.
pub fn fit_cosine(data: &[(f64, f64)]) -> Result<FitResult> {
    check_data(data)?;
    let (lo, hi) = data
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), p| (l.min(p.0), h.max(p.0)));
    if hi - lo < PI {
        return Err(Error::InsufficientData(format!(
            "phase scan spans {:.3} rad, less than half a period",
            hi - lo
        )));
    }
    Ok(fit(ModelKind::Cosine, data, initial_guess(ModelKind::Cosine, data)))
}

/// Fits a single Gaussian peak on a constant background.
pub fn fit_gaussian(data: &[(f64, f64)]) -> Result<FitResult> {
    check_data(data)?;
    Ok(fit(ModelKind::Gaussian, data, initial_guess(ModelKind::Gaussian, data)))
}
