#![allow(dead_code)]

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use survsl_core::censoring::IpcwWeights;
use survsl_core::dataset::SurvivalDataset;
use survsl_core::rng;

/// Censored data with ties: times rounded to one decimal, `p` standard-normal covariates,
/// exponential event times with log-hazard `beta . x`.
pub fn random_censored(n: usize, p: usize, beta: &[f64], censor_rate: f64, seed: u64) -> SurvivalDataset {
    let mut r = rng::seeded(seed);
    let mut rows = Vec::with_capacity(n);
    let mut times = Vec::with_capacity(n);
    let mut events = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<f64> = (0..p).map(|_| StandardNormal.sample(&mut r)).collect();
        let eta: f64 = x.iter().zip(beta).map(|(a, b)| a * b).sum();
        let e: f64 = Exp1.sample(&mut r);
        let t = e / eta.exp();
        let c = if censor_rate > 0.0 {
            let u: f64 = Exp1.sample(&mut r);
            u / censor_rate
        } else {
            f64::INFINITY
        };
        let (t, d) = if t <= c { (t, true) } else { (c, false) };
        times.push(((t * 10.0).round() / 10.0).max(0.1));
        events.push(d);
        rows.push(x);
    }
    SurvivalDataset::from_rows(times, events, &rows).unwrap()
}

/// Textbook product-limit estimate at `t`, computed directly from its definition.
pub fn km_oracle(times: &[f64], events: &[bool], t: f64) -> f64 {
    let mut distinct: Vec<f64> = times.iter().zip(events).filter(|(_, &e)| e).map(|(&s, _)| s).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let mut s = 1.0;
    for u in distinct.into_iter().filter(|&u| u <= t) {
        let at_risk = times.iter().filter(|&&x| x >= u).count() as f64;
        let d = times.iter().zip(events).filter(|(&x, &e)| e && x == u).count() as f64;
        s *= 1.0 - d / at_risk;
    }
    s
}

/// Exhaustive weighted pair enumeration for the time-dependent AUC.
pub fn auc_bruteforce(risk: &[f64], w: &IpcwWeights) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..risk.len() {
        if !(w.case[i] && w.eligible[i] && w.weights[i] > 0.0) {
            continue;
        }
        for j in 0..risk.len() {
            if w.case[j] || !w.eligible[j] || w.weights[j] <= 0.0 {
                continue;
            }
            let pair = w.weights[i] * w.weights[j];
            den += pair;
            num += pair * if risk[i] > risk[j] { 1.0 } else if risk[i] == risk[j] { 0.5 } else { 0.0 };
        }
    }
    num / den
}

/// Unweighted AUC over binary labels.
pub fn binary_auc(risk: &[f64], y: &[bool]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for i in (0..risk.len()).filter(|&i| y[i]) {
        for j in (0..risk.len()).filter(|&j| !y[j]) {
            den += 1.0;
            num += if risk[i] > risk[j] { 1.0 } else if risk[i] == risk[j] { 0.5 } else { 0.0 };
        }
    }
    num / den
}

pub fn uniform_risks(n: usize, seed: u64) -> Vec<f64> {
    let mut r = rng::seeded(seed);
    (0..n).map(|_| r.gen_range(0.01..0.99)).collect()
}

pub fn assert_close(a: f64, b: f64, tol: f64, what: &str) {
    assert!((a - b).abs() <= tol, "{what}: {a} vs {b} (tol {tol})");
}
