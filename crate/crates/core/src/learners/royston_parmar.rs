//! Flexible parametric proportional hazards on the log cumulative hazard scale:
//! `log H(t | x) = s(log t) + x.beta`, with `s` a restricted cubic spline whose
//! interior knots sit at equally spaced centiles of the log event times and
//! whose boundary knots are the extreme log event times.
//!
//! The log-likelihood is concave in the parameters wherever `s' > 0` at the
//! event times, so Newton–Raphson finds the MLE; monotonicity of the fitted
//! cumulative hazard is then checked on a dense grid.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::SurvivalDataset;
use crate::error::{Error, Result};
use crate::numeric::{newton_maximize, quantile_sorted, NewtonOptions, RestrictedCubicSpline, Standardizer};
use crate::rng;

pub const MAX_RESTARTS: usize = 5;
const GRID_POINTS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoystonParmarFit {
    pub spline: RestrictedCubicSpline,
    pub scaler: Standardizer,
    /// Intercept followed by one coefficient per spline basis column.
    pub spline_coefficients: Vec<f64>,
    /// Log hazard ratios on standardized covariates.
    pub coefficients: Vec<f64>,
    pub log_likelihood: f64,
    pub restarts: usize,
}

impl RoystonParmarFit {
    fn spline_value(&self, v: f64) -> f64 {
        let b = self.spline.basis(v);
        self.spline_coefficients[0] + b.iter().zip(&self.spline_coefficients[1..]).map(|(a, c)| a * c).sum::<f64>()
    }

    fn spline_slope(&self, v: f64) -> f64 {
        let d = self.spline.basis_derivative(v);
        d.iter().zip(&self.spline_coefficients[1..]).map(|(a, c)| a * c).sum()
    }

    pub fn original_coefficients(&self) -> Vec<f64> {
        self.coefficients.iter().zip(&self.scaler.sds).map(|(b, s)| b / s).collect()
    }

    pub fn predict_survival(&self, x: &DMatrix<f64>, t: f64) -> Vec<f64> {
        if t <= 0.0 {
            return vec![1.0; x.nrows()];
        }
        let s = self.spline_value(t.ln());
        let z = self.scaler.apply(x);
        (0..z.nrows())
            .map(|i| {
                let eta: f64 = (0..z.ncols()).map(|j| z[(i, j)] * self.coefficients[j]).sum();
                (-(s + eta).exp()).exp()
            })
            .collect()
    }

    /// Smallest slope of `s` over a dense grid spanning the knots, and the tails.
    fn min_slope(&self) -> f64 {
        let lo = self.spline.knots[0];
        let hi = *self.spline.knots.last().unwrap();
        let mut m = self.spline_slope(lo - 1.0).min(self.spline_slope(hi + 1.0));
        for g in 0..=GRID_POINTS {
            let v = lo + (hi - lo) * g as f64 / GRID_POINTS as f64;
            m = m.min(self.spline_slope(v));
        }
        for &k in &self.spline.knots {
            m = m.min(self.spline_slope(k));
        }
        m
    }
}

pub fn fit_royston_parmar(data: &SurvivalDataset, interior_knots: usize, seed: u64) -> Result<RoystonParmarFit> {
    if interior_knots < 1 {
        return Err(Error::InvalidArgument("at least one interior knot is required".into()));
    }
    if let Some(i) = data.times().iter().position(|&t| t <= 0.0) {
        return Err(Error::Validation(format!("log-time spline needs positive times; subject {i} has time {}", data.times()[i])));
    }
    let mut log_event: Vec<f64> = data
        .times()
        .iter()
        .zip(data.events())
        .filter(|(_, &e)| e)
        .map(|(t, _)| t.ln())
        .collect();
    log_event.sort_by(f64::total_cmp);
    let mut distinct = log_event.clone();
    distinct.dedup();
    if distinct.len() < interior_knots + 2 {
        return Err(Error::InsufficientData(format!(
            "{} distinct event times cannot support {} knots",
            distinct.len(),
            interior_knots + 2
        )));
    }
    let mut knots = Vec::with_capacity(interior_knots + 2);
    knots.push(log_event[0]);
    for j in 1..=interior_knots {
        knots.push(quantile_sorted(&log_event, j as f64 / (interior_knots + 1) as f64));
    }
    knots.push(*log_event.last().unwrap());
    let spline = RestrictedCubicSpline::new(knots)?;

    let scaler = Standardizer::fit(data.covariates());
    let z = scaler.apply(data.covariates());
    let (n, p) = z.shape();
    let sdim = spline.dim();
    let dim = 1 + sdim + p;
    // a_i = [1, basis(v_i), z_i], c_i = [0, basis'(v_i), 0]
    let mut a = DMatrix::zeros(n, dim);
    let mut c = DMatrix::zeros(n, dim);
    for i in 0..n {
        let v = data.times()[i].ln();
        a[(i, 0)] = 1.0;
        for (j, b) in spline.basis(v).into_iter().enumerate() {
            a[(i, 1 + j)] = b;
        }
        for (j, b) in spline.basis_derivative(v).into_iter().enumerate() {
            c[(i, 1 + j)] = b;
        }
        for j in 0..p {
            a[(i, 1 + sdim + j)] = z[(i, j)];
        }
    }
    let events = data.events();
    let loglik = |theta: &DVector<f64>| {
        let mut ll = 0.0;
        let mut g = DVector::zeros(dim);
        let mut h = DMatrix::zeros(dim, dim);
        for i in 0..n {
            let ai = a.row(i);
            let lin = ai.dot(&theta.transpose());
            let eh = lin.exp();
            if !eh.is_finite() {
                return None;
            }
            ll -= eh;
            g -= ai.transpose() * eh;
            h -= ai.transpose() * ai * eh;
            if events[i] {
                let ci = c.row(i);
                let slope = ci.dot(&theta.transpose());
                if slope <= 0.0 {
                    return None;
                }
                ll += slope.ln() + lin;
                g += ci.transpose() / slope + ai.transpose();
                h -= ci.transpose() * ci / (slope * slope);
            }
        }
        Some((ll, g, h))
    };

    let mut start = DVector::zeros(dim);
    let total_time: f64 = data.times().iter().sum();
    start[0] = (data.n_events() as f64 / total_time).ln();
    start[1] = 1.0;
    let opts = NewtonOptions { max_iter: 200, grad_tol: 1e-8, name: "Royston-Parmar Newton-Raphson" };
    let mut rng = rng::seeded(seed);
    let mut last_err = None;
    for attempt in 0..=MAX_RESTARTS {
        let init = if attempt == 0 {
            start.clone()
        } else {
            let mut s = start.clone();
            for v in s.iter_mut().skip(2) {
                *v += 0.1 * rng.sample::<f64, _>(StandardNormal);
            }
            s
        };
        match newton_maximize(init, &loglik, &opts) {
            Ok(res) => {
                let fit = RoystonParmarFit {
                    spline: spline.clone(),
                    scaler: scaler.clone(),
                    spline_coefficients: res.theta.rows(0, 1 + sdim).iter().copied().collect(),
                    coefficients: res.theta.rows(1 + sdim, p).iter().copied().collect(),
                    log_likelihood: res.value,
                    restarts: attempt,
                };
                if fit.min_slope() >= 0.0 {
                    return Ok(fit);
                }
                last_err = Some(Error::NonConvergence {
                    method: "Royston-Parmar (non-monotone cumulative hazard)".into(),
                    iterations: attempt + 1,
                    trace: vec![fit.min_slope()],
                });
            }
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.unwrap())
}
