//! Cox partial likelihood (Breslow ties) and the Breslow baseline hazard.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Cumulative hazard step function: `cumhaz[k]` holds on `[times[k], times[k+1])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CumulativeHazard {
    pub times: Vec<f64>,
    pub cumhaz: Vec<f64>,
}

impl CumulativeHazard {
    pub fn eval(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            0.0
        } else {
            self.cumhaz[k - 1]
        }
    }
}

/// Indices sorted by ascending time, grouped by tied time.
fn time_groups(times: &[f64]) -> (Vec<usize>, Vec<(usize, usize)>) {
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    let mut groups = Vec::new();
    let mut start = 0;
    while start < order.len() {
        let t = times[order[start]];
        let mut end = start;
        while end < order.len() && times[order[end]] == t {
            end += 1;
        }
        groups.push((start, end));
        start = end;
    }
    (order, groups)
}

/// Breslow estimate of the baseline cumulative hazard for linear predictors `eta`,
/// optionally with subject multiplicities.
pub fn breslow(times: &[f64], events: &[bool], eta: &[f64], counts: Option<&[f64]>) -> CumulativeHazard {
    let (order, groups) = time_groups(times);
    let shift = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let c = |i: usize| counts.map_or(1.0, |c| c[i]);
    let risk: Vec<f64> = eta.iter().map(|e| (e - shift).exp()).collect();
    // risk-set sums from the right
    let mut tail = 0.0;
    let mut group_risk = vec![0.0; groups.len()];
    for (g, &(s, e)) in groups.iter().enumerate().rev() {
        tail += order[s..e].iter().map(|&i| c(i) * risk[i]).sum::<f64>();
        group_risk[g] = tail;
    }
    let mut out = CumulativeHazard { times: Vec::new(), cumhaz: Vec::new() };
    let mut h = 0.0;
    for (g, &(s, e)) in groups.iter().enumerate() {
        let d: f64 = order[s..e].iter().filter(|&&i| events[i]).map(|&i| c(i)).sum();
        if d > 0.0 {
            // undo the shift: sum exp(eta) = exp(shift) * sum exp(eta - shift)
            h += d / group_risk[g] * (-shift).exp();
            out.times.push(times[order[s]]);
            out.cumhaz.push(h);
        }
    }
    out
}

/// Partial log-likelihood, its gradient and (negative definite) Hessian in `beta`.
pub fn partial_likelihood(x: &DMatrix<f64>, times: &[f64], events: &[bool], beta: &DVector<f64>) -> (f64, DVector<f64>, DMatrix<f64>) {
    let p = x.ncols();
    let eta = x * beta;
    let shift = eta.max();
    let (order, groups) = time_groups(times);
    let mut s0 = 0.0;
    let mut s1 = DVector::<f64>::zeros(p);
    let mut s2 = DMatrix::<f64>::zeros(p, p);
    let mut ll = 0.0;
    let mut grad = DVector::<f64>::zeros(p);
    let mut hess = DMatrix::<f64>::zeros(p, p);
    for &(s, e) in groups.iter().rev() {
        for &i in &order[s..e] {
            let r = (eta[i] - shift).exp();
            let xi = x.row(i).transpose();
            s0 += r;
            s1.axpy(r, &xi, 1.0);
            s2.ger(r, &xi, &xi, 1.0);
        }
        let d = order[s..e].iter().filter(|&&i| events[i]).count();
        if d == 0 {
            continue;
        }
        let mean = &s1 / s0;
        for &i in order[s..e].iter().filter(|&&i| events[i]) {
            ll += eta[i] - shift - s0.ln();
            grad += x.row(i).transpose() - &mean;
        }
        let cov = &s2 / s0 - &mean * mean.transpose();
        hess -= cov * d as f64;
    }
    (ll, grad, hess)
}

/// Partial log-likelihood and its derivatives with respect to each subject's
/// linear predictor: gradient `d ll / d eta_j` and the diagonal of the Hessian
/// with its sign flipped (nonnegative).
pub fn eta_derivatives(times: &[f64], events: &[bool], eta: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
    let n = times.len();
    let shift = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let risk: Vec<f64> = eta.iter().map(|e| (e - shift).exp()).collect();
    let (order, groups) = time_groups(times);
    let mut group_s0 = vec![0.0; groups.len()];
    let mut tail = 0.0;
    for (g, &(s, e)) in groups.iter().enumerate().rev() {
        tail += order[s..e].iter().map(|&i| risk[i]).sum::<f64>();
        group_s0[g] = tail;
    }
    let mut ll = 0.0;
    let mut grad = vec![0.0; n];
    let mut diag = vec![0.0; n];
    // cumulative sums of d/S0 and d/S0^2 over event groups up to each time
    let mut c1 = 0.0;
    let mut c2 = 0.0;
    for (g, &(s, e)) in groups.iter().enumerate() {
        let d = order[s..e].iter().filter(|&&i| events[i]).count() as f64;
        if d > 0.0 {
            c1 += d / group_s0[g];
            c2 += d / (group_s0[g] * group_s0[g]);
            for &i in order[s..e].iter().filter(|&&i| events[i]) {
                ll += eta[i] - shift - group_s0[g].ln();
            }
        }
        for &i in &order[s..e] {
            let delta = if events[i] { 1.0 } else { 0.0 };
            grad[i] = delta - risk[i] * c1;
            diag[i] = risk[i] * c1 - risk[i] * risk[i] * c2;
        }
    }
    (ll, grad, diag)
}
