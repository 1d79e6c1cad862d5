//! Censoring-aware losses at the horizon. All are oriented so that lower is better.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::censoring::IpcwWeights;
use crate::error::{Error, Result};

/// Clip applied to risks before taking logarithms.
pub const LOGLIK_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    IpcwBrier,
    NegativeBinomialLoglik,
    /// `1 - tAUROC`.
    AurocT,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::IpcwBrier => "ipcw_brier",
            LossKind::NegativeBinomialLoglik => "negative_binomial_loglik",
            LossKind::AurocT => "auroc_t",
        }
    }

    /// Accepts the long names and the short command-line forms `brier`, `nbll`, `auroct`.
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "brier" | "ipcw_brier" => Ok(LossKind::IpcwBrier),
            "nbll" | "negative_binomial_loglik" => Ok(LossKind::NegativeBinomialLoglik),
            "auroct" | "auroc_t" => Ok(LossKind::AurocT),
            _ => Err(Error::InvalidArgument(format!("unknown loss `{s}` (expected brier, nbll or auroct)"))),
        }
    }

    pub fn is_smooth(self) -> bool {
        !matches!(self, LossKind::AurocT)
    }

    pub fn evaluate(self, risk: &[f64], weights: &IpcwWeights) -> Result<f64> {
        match self {
            LossKind::IpcwBrier => ipcw_brier(risk, weights),
            LossKind::NegativeBinomialLoglik => negative_binomial_loglik(risk, weights),
            LossKind::AurocT => auroc_t_loss(risk, weights),
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn check_inputs(risk: &[f64], weights: &IpcwWeights) -> Result<()> {
    if risk.len() != weights.len() {
        return Err(Error::DimensionMismatch { expected: weights.len(), found: risk.len() });
    }
    if risk.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if let Some(i) = risk.iter().position(|r| !(0.0..=1.0).contains(r)) {
        return Err(Error::InvalidArgument(format!("risk of subject {i} is {} (outside [0, 1])", risk[i])));
    }
    Ok(())
}

/// `(1/n) sum_i w_i (Y_i - r_i)^2`.
pub fn ipcw_brier(risk: &[f64], weights: &IpcwWeights) -> Result<f64> {
    check_inputs(risk, weights)?;
    let n = risk.len() as f64;
    let s: f64 = risk
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let e = weights.outcome(i) - r;
            weights.weights[i] * e * e
        })
        .sum();
    Ok(s / n)
}

/// `-(1/n) sum_i w_i [Y_i log r_i + (1 - Y_i) log(1 - r_i)]` with risks clipped to `[eps, 1 - eps]`.
pub fn negative_binomial_loglik(risk: &[f64], weights: &IpcwWeights) -> Result<f64> {
    check_inputs(risk, weights)?;
    let n = risk.len() as f64;
    let s: f64 = risk
        .iter()
        .enumerate()
        .map(|(i, &r)| {
            let w = weights.weights[i];
            if w == 0.0 {
                return 0.0;
            }
            let r = r.clamp(LOGLIK_EPS, 1.0 - LOGLIK_EPS);
            w * if weights.case[i] { r.ln() } else { (1.0 - r).ln() }
        })
        .sum();
    Ok(-s / n)
}

/// IPCW cumulative/dynamic AUC at the horizon: the weighted fraction of
/// (case, control) pairs in which the case has the higher risk, ties scoring 1/2.
/// Cases had the event by `tau`; controls are known event-free at `tau`.
pub fn ipcw_auc(risk: &[f64], weights: &IpcwWeights) -> Result<f64> {
    if risk.len() != weights.len() {
        return Err(Error::DimensionMismatch { expected: weights.len(), found: risk.len() });
    }
    let mut controls: Vec<(f64, f64)> = Vec::new();
    let mut cases: Vec<(f64, f64)> = Vec::new();
    for i in 0..risk.len() {
        let w = weights.weights[i];
        if w <= 0.0 || !weights.eligible[i] {
            continue;
        }
        if !risk[i].is_finite() {
            return Err(Error::InvalidArgument(format!("risk of subject {i} is not finite")));
        }
        if weights.case[i] {
            cases.push((risk[i], w));
        } else {
            controls.push((risk[i], w));
        }
    }
    if cases.is_empty() || controls.is_empty() {
        return Err(Error::UndefinedMetric(format!(
            "time-dependent AUC needs at least one case and one control at tau={} (cases: {}, controls: {})",
            weights.tau,
            cases.len(),
            controls.len()
        )));
    }
    controls.sort_by(|a, b| a.0.total_cmp(&b.0));
    // cumulative control weight: cum[k] = sum of the first k controls
    let mut cum = Vec::with_capacity(controls.len() + 1);
    cum.push(0.0);
    let mut acc = 0.0;
    for &(_, w) in &controls {
        acc += w;
        cum.push(acc);
    }
    let total_controls = acc;
    let mut concordant = 0.0;
    let mut total_cases = 0.0;
    for &(r, w) in &cases {
        let below = controls.partition_point(|c| c.0 < r);
        let upto = controls.partition_point(|c| c.0 <= r);
        concordant += w * (cum[below] + 0.5 * (cum[upto] - cum[below]));
        total_cases += w;
    }
    Ok(concordant / (total_cases * total_controls))
}

/// `1 - tAUROC(tau)`.
pub fn auroc_t_loss(risk: &[f64], weights: &IpcwWeights) -> Result<f64> {
    check_inputs(risk, weights)?;
    Ok(1.0 - ipcw_auc(risk, weights)?)
}
