//! GARCH(1,1) by Gaussian quasi-maximum likelihood.
//!
//! `σ²(t) = ω + α ε²(t−1) + β σ²(t−1)`, seeded at the sample variance of the
//! demeaned returns. The optimizer works on unconstrained parameters
//! `(ln ω, logit(α + β), logit(α / (α + β)))`, which keeps `ω > 0`,
//! `α, β ≥ 0` and `α + β < 1` throughout.

use crate::error::{Error, Result};

pub const MIN_OBSERVATIONS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GarchOptions {
    pub max_iterations: usize,
    /// Convergence threshold on the relative change of the log-likelihood.
    pub tolerance: f64,
}

impl Default for GarchOptions {
    fn default() -> Self {
        Self { max_iterations: 500, tolerance: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GarchFit {
    pub omega: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Sample mean removed before fitting.
    pub mean: f64,
    /// `σ²(t)` for every observation.
    pub conditional_variance: Vec<f64>,
    pub loglik: f64,
    pub iterations: usize,
}

impl GarchFit {
    pub fn persistence(&self) -> f64 {
        self.alpha + self.beta
    }

    pub fn unconditional_variance(&self) -> f64 {
        self.omega / (1.0 - self.alpha - self.beta)
    }
}

fn demean(returns: &[f64]) -> (f64, Vec<f64>) {
    let m = returns.iter().sum::<f64>() / returns.len() as f64;
    (m, returns.iter().map(|r| r - m).collect())
}

fn variance_path(omega: f64, alpha: f64, beta: f64, eps: &[f64]) -> Vec<f64> {
    let seed = eps.iter().map(|e| e * e).sum::<f64>() / eps.len() as f64;
    let mut out = Vec::with_capacity(eps.len());
    let mut s2 = seed;
    for t in 0..eps.len() {
        if t > 0 {
            let prev = eps[t - 1];
            s2 = omega + alpha * prev * prev + beta * s2;
        }
        out.push(s2);
    }
    out
}

fn loglik_of(eps: &[f64], var: &[f64]) -> f64 {
    let ln2pi = (2.0 * std::f64::consts::PI).ln();
    eps.iter()
        .zip(var)
        .map(|(e, s2)| -0.5 * (ln2pi + s2.ln() + e * e / s2))
        .sum()
}

/// Gaussian log-likelihood of `returns` (demeaned internally) under the given
/// parameters.
pub fn garch11_loglik(omega: f64, alpha: f64, beta: f64, returns: &[f64]) -> f64 {
    let (_, eps) = demean(returns);
    loglik_of(&eps, &variance_path(omega, alpha, beta, &eps))
}

/// Conditional variance path of `returns` under a fitted model.
pub fn garch11_variance(fit: &GarchFit, returns: &[f64]) -> Vec<f64> {
    let eps: Vec<f64> = returns.iter().map(|r| r - fit.mean).collect();
    variance_path(fit.omega, fit.alpha, fit.beta, &eps)
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn unpack(theta: &[f64; 3]) -> (f64, f64, f64) {
    let omega = theta[0].exp();
    let persistence = logistic(theta[1]);
    let share = logistic(theta[2]);
    (omega, persistence * share, persistence * (1.0 - share))
}

fn objective(theta: &[f64; 3], eps: &[f64]) -> f64 {
    let (omega, alpha, beta) = unpack(theta);
    let v = -loglik_of(eps, &variance_path(omega, alpha, beta, eps)) / eps.len() as f64;
    if v.is_finite() {
        v
    } else {
        f64::INFINITY
    }
}

fn gradient(theta: &[f64; 3], eps: &[f64]) -> [f64; 3] {
    let mut g = [0.0; 3];
    for i in 0..3 {
        let h = 1e-5 * (1.0 + theta[i].abs());
        let mut up = *theta;
        let mut dn = *theta;
        up[i] += h;
        dn[i] -= h;
        g[i] = (objective(&up, eps) - objective(&dn, eps)) / (2.0 * h);
    }
    g
}

fn norm(v: &[f64; 3]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Fits GARCH(1,1) by BFGS on the transformed parameters.
pub fn garch11_fit(returns: &[f64], opts: &GarchOptions) -> Result<GarchFit> {
    if returns.len() < MIN_OBSERVATIONS {
        return Err(Error::InsufficientData(format!(
            "GARCH(1,1) needs at least {MIN_OBSERVATIONS} returns, got {}",
            returns.len()
        )));
    }
    if returns.iter().any(|r| !r.is_finite()) {
        return Err(Error::InvalidInput("non-finite return".into()));
    }
    let (mean, eps) = demean(returns);
    let sample_var = eps.iter().map(|e| e * e).sum::<f64>() / eps.len() as f64;
    if sample_var <= 0.0 {
        return Err(Error::InvalidInput("returns have zero variance".into()));
    }

    // Start at α = 0.05, β = 0.90 with variance targeting for ω.
    let mut theta = [(sample_var * 0.05).ln(), logit(0.95), logit(0.05 / 0.95)];
    let mut f = objective(&theta, &eps);
    let mut g = gradient(&theta, &eps);
    let mut h_inv = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let mut converged = false;
    let mut iterations = 0;

    for iter in 0..opts.max_iterations {
        iterations = iter + 1;
        let mut dir = [0.0; 3];
        for i in 0..3 {
            dir[i] = -(0..3).map(|j| h_inv[i][j] * g[j]).sum::<f64>();
        }
        let mut slope: f64 = (0..3).map(|i| dir[i] * g[i]).sum();
        if slope >= 0.0 {
            // Not a descent direction: reset to steepest descent.
            h_inv = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
            dir = [-g[0], -g[1], -g[2]];
            slope = -norm(&g).powi(2);
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let cand = [theta[0] + step * dir[0], theta[1] + step * dir[1], theta[2] + step * dir[2]];
            let fc = objective(&cand, &eps);
            if fc <= f + 1e-4 * step * slope {
                accepted = Some((cand, fc));
                break;
            }
            step *= 0.5;
        }
        let Some((next, f_next)) = accepted else {
            // No decrease possible along the search direction: at a
            // numerical optimum if the gradient is small.
            converged = norm(&g) < 1e-4;
            break;
        };

        let g_next = gradient(&next, &eps);
        let s = [next[0] - theta[0], next[1] - theta[1], next[2] - theta[2]];
        let y = [g_next[0] - g[0], g_next[1] - g[1], g_next[2] - g[2]];
        let sy: f64 = (0..3).map(|i| s[i] * y[i]).sum();
        if sy > 1e-12 {
            let rho = 1.0 / sy;
            let mut hy = [0.0; 3];
            for i in 0..3 {
                hy[i] = (0..3).map(|j| h_inv[i][j] * y[j]).sum();
            }
            let yhy: f64 = (0..3).map(|i| y[i] * hy[i]).sum();
            for i in 0..3 {
                for j in 0..3 {
                    h_inv[i][j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
                }
            }
        }

        let rel_change = (f - f_next).abs() / f.abs().max(1e-300);
        theta = next;
        f = f_next;
        g = g_next;
        if rel_change < opts.tolerance && norm(&g) < 1e-3 {
            converged = true;
            break;
        }
    }

    if !converged {
        return Err(Error::NonConvergence { iterations, grad_norm: norm(&g) });
    }
    let (omega, alpha, beta) = unpack(&theta);
    if !(omega > 0.0 && alpha >= 0.0 && beta >= 0.0 && alpha + beta < 1.0) {
        return Err(Error::InvalidInput(format!(
            "GARCH optimum violates constraints (ω={omega}, α={alpha}, β={beta})"
        )));
    }
    let conditional_variance = variance_path(omega, alpha, beta, &eps);
    let loglik = loglik_of(&eps, &conditional_variance);
    Ok(GarchFit { omega, alpha, beta, mean, conditional_variance, loglik, iterations })
}
