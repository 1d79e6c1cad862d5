//! Cox proportional hazards with main terms, Breslow ties, Newton–Raphson.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::ph::{self, CumulativeHazard};
use crate::dataset::SurvivalDataset;
use crate::error::{Error, Result};
use crate::numeric::{newton_maximize, NewtonOptions, Standardizer};

pub const MAX_ITER: usize = 100;
pub const GRAD_TOL: f64 = 1e-8;
/// A one-standard-deviation log hazard ratio beyond this signals a monotone likelihood.
const SEPARATION_BOUND: f64 = 25.0;

/// Fitted proportional-hazards model: `S(t|x) = exp(-H0(t) exp((x - mean) . beta))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProportionalHazardsFit {
    pub means: Vec<f64>,
    /// Coefficients on the original covariate scale.
    pub coefficients: Vec<f64>,
    /// Model-based standard errors; empty for penalized fits.
    #[serde(default)]
    pub std_errors: Vec<f64>,
    /// Baseline cumulative hazard at the covariate means.
    pub baseline: CumulativeHazard,
    pub log_likelihood: f64,
    pub iterations: usize,
}

impl ProportionalHazardsFit {
    pub fn linear_predictor(&self, x: &DMatrix<f64>) -> Vec<f64> {
        (0..x.nrows())
            .map(|i| (0..x.ncols()).map(|j| (x[(i, j)] - self.means[j]) * self.coefficients[j]).sum())
            .collect()
    }

    pub fn predict_survival(&self, x: &DMatrix<f64>, t: f64) -> Vec<f64> {
        let h0 = self.baseline.eval(t);
        self.linear_predictor(x).into_iter().map(|eta| (-h0 * eta.exp()).exp()).collect()
    }

    /// Wald statistics `beta / se`.
    pub fn wald_z(&self) -> Vec<f64> {
        self.coefficients.iter().zip(&self.std_errors).map(|(b, s)| b / s).collect()
    }
}

pub(crate) fn check_ph_data(data: &SurvivalDataset) -> Result<()> {
    if data.p() == 0 {
        return Err(Error::InvalidArgument("a main-terms model needs at least one covariate".into()));
    }
    if data.n() <= data.p() {
        return Err(Error::InsufficientData(format!("need n > p, got n={} p={}", data.n(), data.p())));
    }
    if data.n_events() == 0 {
        return Err(Error::InsufficientData("no events observed".into()));
    }
    Ok(())
}

pub fn fit_cox(data: &SurvivalDataset) -> Result<ProportionalHazardsFit> {
    check_ph_data(data)?;
    let centre = Standardizer::center(data.covariates());
    let x = centre.apply(data.covariates());
    let times = data.times();
    let events = data.events();
    let opts = NewtonOptions { max_iter: MAX_ITER, grad_tol: GRAD_TOL, name: "Cox Newton-Raphson" };
    let res = newton_maximize(
        DVector::zeros(data.p()),
        |b| Some(ph::partial_likelihood(&x, times, events, b)),
        &opts,
    )?;
    let scale = Standardizer::fit(data.covariates());
    for (j, (b, sd)) in res.theta.iter().zip(&scale.sds).enumerate() {
        if (b * sd).abs() > SEPARATION_BOUND {
            return Err(Error::Separation(format!(
                "coefficient for `{}` diverges ({b:.3e}); the covariate separates events from non-events",
                data.covariate_names()[j]
            )));
        }
    }
    // Under a monotone likelihood the objective keeps rising along the fitted
    // direction, so Newton stalls at a large but finite beta.
    let max_std = res.theta.iter().zip(&scale.sds).map(|(b, sd)| (b * sd).abs()).fold(0.0, f64::max);
    if max_std > 3.0 {
        let (ll_far, _, _) = ph::partial_likelihood(&x, times, events, &(&res.theta * 2.0));
        if ll_far >= res.value - 1e-6 {
            return Err(Error::Separation(format!(
                "partial likelihood still increases along the fitted direction (|beta| = {:.3e})",
                res.theta.norm()
            )));
        }
    }
    let std_errors = (-&res.hessian)
        .try_inverse()
        .map(|inv| (0..data.p()).map(|j| inv[(j, j)].max(0.0).sqrt()).collect())
        .unwrap_or_default();
    let eta: Vec<f64> = (&x * &res.theta).iter().copied().collect();
    let baseline = ph::breslow(times, events, &eta, None);
    Ok(ProportionalHazardsFit {
        means: centre.means,
        coefficients: res.theta.iter().copied().collect(),
        std_errors,
        baseline,
        log_likelihood: res.value,
        iterations: res.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn needs_covariates_and_events() {
        let d = SurvivalDataset::new(vec![1.0, 2.0], vec![true, false], DMatrix::zeros(2, 0), vec![]).unwrap();
        assert!(matches!(fit_cox(&d), Err(Error::InvalidArgument(_))));
        let d = SurvivalDataset::from_rows(vec![1.0, 2.0, 3.0], vec![false; 3], &[vec![0.0], vec![1.0], vec![2.0]]).unwrap();
        assert!(matches!(fit_cox(&d), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn separation_is_reported() {
        // covariate perfectly orders failure times: higher x always fails first
        let n = 20;
        let times: Vec<f64> = (0..n).map(|i| i as f64 + 1.0).collect();
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![if i < 10 { 1.0 } else { 0.0 }]).collect();
        let events: Vec<bool> = (0..n).map(|i| i < 10).collect();
        let d = SurvivalDataset::from_rows(times, events, &rows).unwrap();
        let err = fit_cox(&d).unwrap_err();
        assert!(matches!(err, Error::Separation(_) | Error::NonConvergence { .. }), "{err}");
    }

    #[test]
    fn mean_subject_gets_baseline() {
        let d = SurvivalDataset::from_rows(
            vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
            vec![true, false, true, true, false, true],
            &[vec![0.5], vec![1.5], vec![-0.2], vec![0.9], vec![0.1], vec![-1.0]],
        )
        .unwrap();
        let fit = fit_cox(&d).unwrap();
        let mean = DMatrix::from_row_slice(1, 1, &fit.means);
        for t in [0.5, 1.0, 3.5, 6.0] {
            let s = fit.predict_survival(&mean, t)[0];
            assert_eq!(s, (-fit.baseline.eval(t)).exp());
        }
    }
}
