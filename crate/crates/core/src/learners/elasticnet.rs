//! Elastic-net penalized Cox regression by cyclical coordinate descent.
//!
//! Minimizes `-(1/n) l(beta) + lambda * (alpha |beta|_1 + (1 - alpha)/2 |beta|_2^2)`
//! over standardized covariates. Each outer iteration replaces the partial
//! likelihood by a weighted least-squares approximation (diagonal Hessian in
//! the linear predictor), which is then solved by coordinate descent over the
//! active set.

use nalgebra::{DMatrix, DVector};

use super::cox::{check_ph_data, ProportionalHazardsFit};
use super::ph;
use crate::dataset::SurvivalDataset;
use crate::error::{Error, Result};
use crate::numeric::Standardizer;

pub const COEF_TOL: f64 = 1e-7;
pub const MAX_OUTER: usize = 1000;
pub const MAX_SWEEPS: usize = 100_000;

fn soft_threshold(z: f64, gamma: f64) -> f64 {
    // values within rounding of the threshold are exactly zero
    let slack = gamma * (1.0 + 1e-10);
    if z > slack {
        z - gamma
    } else if z < -slack {
        z + gamma
    } else {
        0.0
    }
}

fn penalized_objective(ll: f64, n: f64, beta: &[f64], alpha: f64, lambda: f64) -> f64 {
    let l1: f64 = beta.iter().map(|b| b.abs()).sum();
    let l2: f64 = beta.iter().map(|b| b * b).sum();
    -ll / n + lambda * (alpha * l1 + 0.5 * (1.0 - alpha) * l2)
}

/// Coefficients on the standardized scale.
fn coordinate_descent(x: &DMatrix<f64>, times: &[f64], events: &[bool], alpha: f64, lambda: f64) -> Result<(Vec<f64>, usize)> {
    let (n, p) = x.shape();
    let nf = n as f64;
    // With a pure lasso penalty, any split between identical columns is optimal;
    // only the first of each group of identical columns is allowed to enter.
    let frozen: Vec<bool> = (0..p)
        .map(|j| alpha == 1.0 && (0..j).any(|k| x.column(k) == x.column(j)))
        .collect();
    let mut beta = vec![0.0; p];
    let eta_of = |b: &[f64]| -> Vec<f64> { (x * DVector::from_column_slice(b)).iter().copied().collect() };
    let mut eta = eta_of(&beta);
    let (mut ll, _, _) = ph::eta_derivatives(times, events, &eta);
    let mut objective = penalized_objective(ll, nf, &beta, alpha, lambda);
    let mut trace = Vec::new();
    for outer in 0..MAX_OUTER {
        let (_, grad, hdiag) = ph::eta_derivatives(times, events, &eta);
        let w: Vec<f64> = hdiag.iter().map(|&h| if h > 1e-12 { h } else { 0.0 }).collect();
        let z: Vec<f64> = (0..n).map(|i| if w[i] > 0.0 { eta[i] + grad[i] / w[i] } else { eta[i] }).collect();
        let v: Vec<f64> = (0..p).map(|j| (0..n).map(|i| w[i] * x[(i, j)] * x[(i, j)]).sum::<f64>() / nf).collect();

        // weighted least squares with penalty, warm-started at beta
        let mut b = beta.clone();
        let mut r: Vec<f64> = (0..n).map(|i| z[i] - eta[i]).collect();
        let mut sweeps = 0;
        let update = |j: usize, b: &mut [f64], r: &mut [f64]| -> f64 {
            if frozen[j] {
                return 0.0;
            }
            let old = b[j];
            let grad_j: f64 = (0..n).map(|i| w[i] * x[(i, j)] * r[i]).sum::<f64>() / nf;
            let new = soft_threshold(grad_j + v[j] * old, lambda * alpha) / (v[j] + lambda * (1.0 - alpha));
            let new = if new.is_finite() { new } else { 0.0 };
            if new != old {
                let delta = new - old;
                for i in 0..n {
                    r[i] -= delta * x[(i, j)];
                }
                b[j] = new;
            }
            (new - old).abs()
        };
        loop {
            // full sweep
            let mut max_change = 0.0f64;
            for j in 0..p {
                max_change = max_change.max(update(j, &mut b, &mut r));
            }
            sweeps += 1;
            if max_change < COEF_TOL * 1e-2 {
                break;
            }
            // iterate over the active set until it settles
            loop {
                let mut change = 0.0f64;
                for j in 0..p {
                    if b[j] != 0.0 {
                        change = change.max(update(j, &mut b, &mut r));
                    }
                }
                sweeps += 1;
                if change < COEF_TOL * 1e-2 || sweeps > MAX_SWEEPS {
                    break;
                }
            }
            if sweeps > MAX_SWEEPS {
                return Err(Error::NonConvergence {
                    method: "elastic-net coordinate descent".into(),
                    iterations: sweeps,
                    trace,
                });
            }
        }

        // step halving keeps the penalized objective monotone
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let cand: Vec<f64> = beta.iter().zip(&b).map(|(o, nb)| o + step * (nb - o)).collect();
            let cand_eta = eta_of(&cand);
            let (cand_ll, _, _) = ph::eta_derivatives(times, events, &cand_eta);
            let cand_obj = penalized_objective(cand_ll, nf, &cand, alpha, lambda);
            if cand_obj.is_finite() && cand_obj <= objective + 1e-15 * objective.abs().max(1.0) {
                accepted = Some((cand, cand_eta, cand_ll, cand_obj));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, cand_eta, cand_ll, cand_obj)) = accepted else {
            // no descent possible: at a stationary point to working precision
            return Ok((beta, outer));
        };
        let change = beta.iter().zip(&cand).map(|(a, c)| (a - c).abs()).fold(0.0, f64::max);
        beta = cand;
        eta = cand_eta;
        ll = cand_ll;
        objective = cand_obj;
        trace.push(objective);
        if trace.len() > 5 {
            trace.remove(0);
        }
        if change < COEF_TOL {
            return Ok((beta, outer + 1));
        }
    }
    let _ = ll;
    Err(Error::NonConvergence { method: "elastic-net Cox".into(), iterations: MAX_OUTER, trace })
}

pub fn fit_elasticnet_cox(data: &SurvivalDataset, alpha: f64, lambda: f64) -> Result<ProportionalHazardsFit> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    if !(lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!("lambda must be nonnegative, got {lambda}")));
    }
    check_ph_data(data)?;
    let scaler = Standardizer::fit(data.covariates());
    let x = scaler.apply(data.covariates());
    let (beta_std, iterations) = coordinate_descent(&x, data.times(), data.events(), alpha, lambda)?;
    let coefficients: Vec<f64> = beta_std.iter().zip(&scaler.sds).map(|(b, sd)| b / sd).collect();
    let eta: Vec<f64> = (&x * DVector::from_column_slice(&beta_std)).iter().copied().collect();
    let (ll, _, _) = ph::eta_derivatives(data.times(), data.events(), &eta);
    let baseline = ph::breslow(data.times(), data.events(), &eta, None);
    Ok(ProportionalHazardsFit {
        means: scaler.means,
        coefficients,
        std_errors: Vec::new(),
        baseline,
        log_likelihood: ll,
        iterations,
    })
}
