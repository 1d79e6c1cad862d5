//! Product-limit estimation and inverse-probability-of-censoring weights.
//!
//! Tie convention: when an event and a censoring share a time, the event is
//! taken to happen first. The censoring estimator therefore removes subjects
//! with an event at `t` from the censoring risk set at `t`.

use serde::{Deserialize, Serialize};

use crate::dataset::SurvivalDataset;
use crate::error::{Error, Result};

/// Right-continuous nonincreasing step function starting at 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSurvival {
    /// Strictly increasing jump times.
    jump_times: Vec<f64>,
    /// Value on `[jump_times[k], jump_times[k+1])`.
    values: Vec<f64>,
    /// Largest observed time; the estimate is defined on `[0, max_time]`.
    max_time: f64,
}

impl StepSurvival {
    pub fn jump_times(&self) -> &[f64] {
        &self.jump_times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn max_time(&self) -> f64 {
        self.max_time
    }

    /// `S(t)`, right-continuous.
    pub fn eval(&self, t: f64) -> f64 {
        let k = self.jump_times.partition_point(|&s| s <= t);
        if k == 0 {
            1.0
        } else {
            self.values[k - 1]
        }
    }

    /// Left limit `S(t-)`.
    pub fn eval_left(&self, t: f64) -> f64 {
        let k = self.jump_times.partition_point(|&s| s < t);
        if k == 0 {
            1.0
        } else {
            self.values[k - 1]
        }
    }
}

/// Kaplan–Meier estimate of the event-free survival function.
pub fn kaplan_meier(times: &[f64], events: &[bool]) -> StepSurvival {
    product_limit(times, events, false)
}

/// `jump_on_censoring = false`: jumps at events, risk set `T >= t`.
/// `jump_on_censoring = true`: jumps at censorings, risk set `T >= t` minus events at `t`.
fn product_limit(times: &[f64], events: &[bool], jump_on_censoring: bool) -> StepSurvival {
    let n = times.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    let mut jump_times = Vec::new();
    let mut values = Vec::new();
    let mut surv = 1.0;
    let mut at_risk = n;
    let mut pos = 0;
    while pos < n {
        let t = times[order[pos]];
        let mut n_events = 0usize;
        let mut n_cens = 0usize;
        let mut end = pos;
        while end < n && times[order[end]] == t {
            if events[order[end]] {
                n_events += 1;
            } else {
                n_cens += 1;
            }
            end += 1;
        }
        let (jumps, risk) = if jump_on_censoring {
            (n_cens, at_risk - n_events)
        } else {
            (n_events, at_risk)
        };
        if jumps > 0 && risk > 0 {
            surv *= (risk - jumps) as f64 / risk as f64;
            jump_times.push(t);
            values.push(surv);
        }
        at_risk -= end - pos;
        pos = end;
    }
    let max_time = times.iter().copied().fold(0.0, f64::max);
    StepSurvival { jump_times, values, max_time }
}

/// Marginal censoring distribution `G(t) = P(C > t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CensoringModel {
    pub survival: StepSurvival,
}

impl CensoringModel {
    pub fn eval(&self, t: f64) -> f64 {
        self.survival.eval(t)
    }

    pub fn eval_left(&self, t: f64) -> f64 {
        self.survival.eval_left(t)
    }

    pub fn max_time(&self) -> f64 {
        self.survival.max_time
    }
}

/// Reverse Kaplan–Meier: censorings are the "events".
pub fn fit_censoring_km(data: &SurvivalDataset) -> CensoringModel {
    CensoringModel { survival: product_limit(data.times(), data.events(), true) }
}

/// Default floor applied to `G` before inversion.
pub const DEFAULT_WEIGHT_FLOOR: f64 = 0.05;

/// Horizon weights for one cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IpcwWeights {
    pub tau: f64,
    pub weights: Vec<f64>,
    /// Event observed at or before `tau`.
    pub case: Vec<bool>,
    /// Status at `tau` is known (case, or still event-free at `tau`).
    pub eligible: Vec<bool>,
    pub floor: f64,
}

impl IpcwWeights {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Binary horizon outcome as 0/1.
    pub fn outcome(&self, i: usize) -> f64 {
        if self.case[i] {
            1.0
        } else {
            0.0
        }
    }

    /// Restrict to a subset of subjects (indices may repeat).
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            tau: self.tau,
            weights: indices.iter().map(|&i| self.weights[i]).collect(),
            case: indices.iter().map(|&i| self.case[i]).collect(),
            eligible: indices.iter().map(|&i| self.eligible[i]).collect(),
            floor: self.floor,
        }
    }
}

/// IPCW weights at `tau`:
/// * event at `T <= tau`: `1 / G(T-)`;
/// * known event-free at `tau` (`T > tau`, or censored exactly at `tau`): `1 / G(tau-)`,
///   which equals `1 / G(tau)` unless censoring mass sits exactly at `tau`;
/// * censored before `tau`: 0.
///
/// `G` is floored at `floor` before inversion; with `floor == 0` a zero `G`
/// is an error listing the affected subjects.
pub fn ipcw_weights(model: &CensoringModel, data: &SurvivalDataset, tau: f64, floor: f64) -> Result<IpcwWeights> {
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!("horizon must be positive, got {tau}")));
    }
    if tau > model.max_time() {
        return Err(Error::InvalidArgument(format!(
            "horizon {tau} is beyond the censoring model's support (max time {})",
            model.max_time()
        )));
    }
    if !(0.0..1.0).contains(&floor) {
        return Err(Error::InvalidArgument(format!("weight floor must be in [0, 1), got {floor}")));
    }
    let n = data.n();
    let mut weights = vec![0.0; n];
    let mut case = vec![false; n];
    let mut eligible = vec![false; n];
    let mut degenerate = Vec::new();
    let g_tau = model.eval_left(tau);
    for i in 0..n {
        let t = data.times()[i];
        let g = if data.events()[i] && t <= tau {
            case[i] = true;
            model.eval_left(t)
        } else if t > tau || (t == tau && !data.events()[i]) {
            g_tau
        } else {
            continue;
        };
        eligible[i] = true;
        let g = g.max(floor);
        if g <= 0.0 {
            degenerate.push(i);
        } else {
            weights[i] = 1.0 / g;
        }
    }
    if !degenerate.is_empty() {
        return Err(Error::DegenerateWeights { subjects: degenerate });
    }
    Ok(IpcwWeights { tau, weights, case, eligible, floor })
}
