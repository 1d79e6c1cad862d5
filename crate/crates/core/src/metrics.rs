//! Validation metrics at the horizon: IPCW time-dependent AUC, the calibration
//! hierarchy (mean, weak, flexible curve with ICI), the IPCW Brier score, and
//! percentile bootstrap intervals for internal and temporal validation.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::censoring::{fit_censoring_km, ipcw_weights, kaplan_meier, CensoringModel, IpcwWeights, DEFAULT_WEIGHT_FLOOR};
use crate::dataset::SurvivalDataset;
use crate::error::{Error, Result};
use crate::learners::FittedLearner;
use crate::losses::{ipcw_auc, ipcw_brier, LOGLIK_EPS};
use crate::numeric::{inv_logit, logit, mean, quantile, weighted_logistic, RestrictedCubicSpline};
use crate::rng::{self, child_seed};
use crate::superlearner::{combine, SuperLearnerModel};

pub const REPORT_VERSION: u32 = 1;
/// Quantiles of logit(risk) used as spline knots for the calibration curve.
pub const CURVE_KNOT_QUANTILES: [f64; 5] = [0.05, 0.275, 0.5, 0.725, 0.95];
pub const CURVE_POINTS: usize = 100;
/// Failure share above which a bootstrap is abandoned.
pub const MAX_BOOTSTRAP_FAILURE_SHARE: f64 = 0.10;

fn check_risk(risk: &[f64], data: &SurvivalDataset) -> Result<()> {
    if risk.len() != data.n() {
        return Err(Error::DimensionMismatch { expected: data.n(), found: risk.len() });
    }
    if let Some(i) = risk.iter().position(|r| !(0.0..=1.0).contains(r)) {
        return Err(Error::InvalidArgument(format!("risk of subject {i} is {} (outside [0, 1])", risk[i])));
    }
    Ok(())
}

fn clipped_logit(r: f64) -> f64 {
    logit(r.clamp(LOGLIK_EPS, 1.0 - LOGLIK_EPS))
}

/// IPCW cumulative/dynamic time-dependent AUC at `tau`.
pub fn tauroc(risk: &[f64], data: &SurvivalDataset, tau: f64, censoring: &CensoringModel) -> Result<f64> {
    check_risk(risk, data)?;
    let w = ipcw_weights(censoring, data, tau, DEFAULT_WEIGHT_FLOOR)?;
    ipcw_auc(risk, &w)
}

/// Kaplan–Meier event probability by `tau` on the cohort.
pub fn observed_risk(data: &SurvivalDataset, tau: f64) -> Result<f64> {
    let km = kaplan_meier(data.times(), data.events());
    if tau > km.max_time() {
        return Err(Error::UndefinedMetric(format!(
            "Kaplan–Meier is undefined at tau={tau}: follow-up ends at {}",
            km.max_time()
        )));
    }
    Ok(1.0 - km.eval(tau))
}

/// Observed (Kaplan–Meier) over mean predicted risk at `tau`.
pub fn mean_calibration(risk: &[f64], data: &SurvivalDataset, tau: f64) -> Result<f64> {
    check_risk(risk, data)?;
    let expected = mean(risk);
    if !(expected > 0.0) {
        return Err(Error::UndefinedMetric("mean predicted risk is zero".into()));
    }
    Ok(observed_risk(data, tau)? / expected)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeakCalibration {
    /// Calibration-in-the-large on the logit scale (slope fixed at 1).
    pub intercept: f64,
    pub slope: f64,
}

fn weak_calibration_weighted(risk: &[f64], w: &IpcwWeights) -> Result<WeakCalibration> {
    let lp: Vec<f64> = risk.iter().map(|&r| clipped_logit(r)).collect();
    let used: Vec<f64> = (0..lp.len()).filter(|&i| w.weights[i] > 0.0).map(|i| lp[i]).collect();
    if used.windows(2).all(|p| p[0] == p[1]) {
        return Err(Error::UndefinedMetric("weak calibration needs non-constant risks".into()));
    }
    let y: Vec<f64> = (0..lp.len()).map(|i| w.outcome(i)).collect();
    let n = lp.len();
    let design = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { lp[i] });
    let full = weighted_logistic(&design, &y, &w.weights, None)?;
    let ones = DMatrix::from_element(n, 1, 1.0);
    let intercept = weighted_logistic(&ones, &y, &w.weights, Some(&lp))?;
    Ok(WeakCalibration { intercept: intercept[0], slope: full[1] })
}

/// IPCW-weighted logistic recalibration of the horizon outcome on logit(risk).
pub fn weak_calibration(risk: &[f64], data: &SurvivalDataset, tau: f64, censoring: &CensoringModel) -> Result<WeakCalibration> {
    check_risk(risk, data)?;
    let w = ipcw_weights(censoring, data, tau, DEFAULT_WEIGHT_FLOOR)?;
    weak_calibration_weighted(risk, &w)
}

/// Flexible calibration curve: observed risk as a spline function of predicted risk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationFit {
    pub spline: RestrictedCubicSpline,
    /// Intercept followed by the spline coefficients.
    pub coefficients: Vec<f64>,
}

impl CalibrationFit {
    pub fn observed(&self, predicted: f64) -> f64 {
        let b = self.spline.basis(clipped_logit(predicted));
        inv_logit(self.coefficients[0] + b.iter().zip(&self.coefficients[1..]).map(|(a, c)| a * c).sum::<f64>())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationCurve {
    pub fit: CalibrationFit,
    pub predicted: Vec<f64>,
    pub observed: Vec<f64>,
    pub ici: f64,
}

fn calibration_fit(risk: &[f64], w: &IpcwWeights, knots: usize) -> Result<CalibrationFit> {
    if knots < 3 {
        return Err(Error::InvalidArgument("a calibration spline needs at least three knots".into()));
    }
    let lp: Vec<f64> = risk.iter().map(|&r| clipped_logit(r)).collect();
    let mut distinct = lp.clone();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < knots {
        return Err(Error::InsufficientData(format!("{} distinct risks cannot support {knots} knots", distinct.len())));
    }
    let qs: Vec<f64> = if knots == CURVE_KNOT_QUANTILES.len() {
        CURVE_KNOT_QUANTILES.to_vec()
    } else {
        (0..knots).map(|j| 0.05 + 0.9 * j as f64 / (knots - 1) as f64).collect()
    };
    let spline = RestrictedCubicSpline::new(qs.iter().map(|&q| quantile(&lp, q)).collect())?;
    let n = risk.len();
    let dim = spline.dim();
    let mut design = DMatrix::zeros(n, dim + 1);
    for i in 0..n {
        design[(i, 0)] = 1.0;
        for (j, b) in spline.basis(lp[i]).into_iter().enumerate() {
            design[(i, j + 1)] = b;
        }
    }
    let y: Vec<f64> = (0..n).map(|i| w.outcome(i)).collect();
    let beta = weighted_logistic(&design, &y, &w.weights, None)?;
    Ok(CalibrationFit { spline, coefficients: beta.iter().copied().collect() })
}

/// 100-point grid spanning the 1st–99th percentiles of the predicted risks.
pub fn curve_grid(risk: &[f64]) -> Vec<f64> {
    let lo = quantile(risk, 0.01);
    let hi = quantile(risk, 0.99);
    (0..CURVE_POINTS).map(|k| lo + (hi - lo) * k as f64 / (CURVE_POINTS - 1) as f64).collect()
}

fn ici_of(fit: &CalibrationFit, risk: &[f64]) -> f64 {
    let gaps: Vec<f64> = risk.iter().map(|&r| (fit.observed(r) - r).abs()).collect();
    mean(&gaps)
}

/// Flexible calibration curve on the logit scale and the integrated calibration index.
pub fn calibration_curve(risk: &[f64], data: &SurvivalDataset, tau: f64, censoring: &CensoringModel, knots: usize) -> Result<CalibrationCurve> {
    check_risk(risk, data)?;
    let w = ipcw_weights(censoring, data, tau, DEFAULT_WEIGHT_FLOOR)?;
    let fit = calibration_fit(risk, &w, knots)?;
    let predicted = curve_grid(risk);
    let observed = predicted.iter().map(|&p| fit.observed(p)).collect();
    let ici = ici_of(&fit, risk);
    Ok(CalibrationCurve { fit, predicted, observed, ici })
}

/// IPCW Brier score; the same computation as the Brier loss.
pub fn brier_metric(risk: &[f64], data: &SurvivalDataset, tau: f64, censoring: &CensoringModel) -> Result<f64> {
    check_risk(risk, data)?;
    let w = ipcw_weights(censoring, data, tau, DEFAULT_WEIGHT_FLOOR)?;
    ipcw_brier(risk, &w)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub iterations: usize,
    pub seed: u64,
    /// Percentile intervals (the only method implemented).
    pub percentile: bool,
}

impl BootstrapConfig {
    pub fn new(iterations: usize, seed: u64) -> Self {
        Self { iterations, seed, percentile: true }
    }
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self::new(2000, 1)
    }
}

/// Resampled indices of bootstrap iteration `b`.
pub fn resample_indices(n: usize, seed: u64, b: usize) -> Vec<usize> {
    use rand::Rng;
    let mut r = rng::seeded(child_seed(seed, b as u64));
    (0..n).map(|_| r.gen_range(0..n)).collect()
}

/// Run `statistic` on every bootstrap resample (in parallel; results in
/// iteration order). Errors when more than 10% of resamples fail.
pub fn bootstrap_values<T, F>(n: usize, config: &BootstrapConfig, statistic: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&[usize], u64) -> Result<T> + Sync,
{
    if config.iterations == 0 {
        return Err(Error::InvalidArgument("bootstrap needs at least one iteration".into()));
    }
    let results: Vec<Result<T>> = (0..config.iterations)
        .into_par_iter()
        .map(|b| {
            let idx = resample_indices(n, config.seed, b);
            statistic(&idx, child_seed(config.seed ^ 0x9e37_79b9, b as u64))
        })
        .collect();
    let failures = results.iter().filter(|r| r.is_err()).count();
    if failures as f64 > MAX_BOOTSTRAP_FAILURE_SHARE * config.iterations as f64 {
        if let Some(Err(e)) = results.iter().find(|r| r.is_err()) {
            log::warn!("bootstrap failure example: {e}");
        }
        return Err(Error::BootstrapFailure { failures, iterations: config.iterations });
    }
    Ok(results.into_iter().filter_map(|r| r.ok()).collect())
}

/// Point estimate with a 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
}

/// 2.5% and 97.5% percentiles of the values.
pub fn percentile_interval(values: &[f64]) -> (f64, f64) {
    (quantile(values, 0.025), quantile(values, 0.975))
}

/// Percentile bootstrap interval for a statistic of resampled subject indices.
/// `point` is the statistic on the identity resample.
pub fn bootstrap_ci<F>(n: usize, config: &BootstrapConfig, statistic: F) -> Result<Estimate>
where
    F: Fn(&[usize], u64) -> Result<f64> + Sync,
{
    let identity: Vec<usize> = (0..n).collect();
    let point = statistic(&identity, config.seed)?;
    let values = bootstrap_values(n, config, statistic)?;
    let (lower, upper) = percentile_interval(&values);
    Ok(Estimate { point, lower, upper })
}

/// How the censoring distribution for the metrics is obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CensoringSource {
    /// Refit the reverse Kaplan–Meier on the evaluation cohort (and on each resample).
    Refit,
    /// Use a fixed censoring model (e.g. the development cohort's).
    Fixed(CensoringModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricOptions {
    pub weight_floor: f64,
    pub knots: usize,
    /// Report expected/observed instead of observed/expected.
    pub reciprocal_mean_calibration: bool,
    pub censoring: CensoringSource,
}

impl Default for MetricOptions {
    fn default() -> Self {
        Self { weight_floor: DEFAULT_WEIGHT_FLOOR, knots: 5, reciprocal_mean_calibration: false, censoring: CensoringSource::Refit }
    }
}

/// All scalar metrics plus the curve evaluated on a given grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricValues {
    pub tauroc: f64,
    pub mean_calibration: f64,
    pub weak_calibration_intercept: f64,
    pub weak_calibration_slope: f64,
    pub ici: f64,
    pub brier: f64,
    pub curve: Vec<f64>,
}

/// Every metric for one (cohort, risk) pair, with the curve evaluated on `grid`.
pub fn compute_metrics(risk: &[f64], data: &SurvivalDataset, tau: f64, opts: &MetricOptions, grid: &[f64]) -> Result<MetricValues> {
    check_risk(risk, data)?;
    let censoring = match &opts.censoring {
        CensoringSource::Refit => fit_censoring_km(data),
        CensoringSource::Fixed(m) => m.clone(),
    };
    let w = ipcw_weights(&censoring, data, tau, opts.weight_floor)?;
    let tauroc = ipcw_auc(risk, &w)?;
    let mut mc = mean_calibration(risk, data, tau)?;
    if opts.reciprocal_mean_calibration {
        mc = 1.0 / mc;
    }
    let weak = weak_calibration_weighted(risk, &w)?;
    let fit = calibration_fit(risk, &w, opts.knots)?;
    let ici = ici_of(&fit, risk);
    let brier = ipcw_brier(risk, &w)?;
    Ok(MetricValues {
        tauroc,
        mean_calibration: mc,
        weak_calibration_intercept: weak.intercept,
        weak_calibration_slope: weak.slope,
        ici,
        brier,
        curve: grid.iter().map(|&p| fit.observed(p)).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub predicted: f64,
    pub observed: f64,
    pub lower: f64,
    pub upper: f64,
}

/// How bootstrap intervals were produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidationScheme {
    /// Frozen predictions; only the evaluation cohort is resampled.
    ResampleEvaluation,
    /// Whole super learner refit on each resample, evaluated on the original data.
    RefitFull,
    /// Candidates refit on each resample with frozen hyperparameters and weights,
    /// evaluated on the original data.
    RefitCandidates,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub version: u32,
    pub label: String,
    pub horizon: f64,
    pub n: usize,
    pub n_events: usize,
    pub scheme: ValidationScheme,
    /// `observed_over_expected` or `expected_over_observed`.
    pub mean_calibration_direction: String,
    pub weight_floor: f64,
    pub tauroc: Estimate,
    pub mean_calibration: Estimate,
    pub weak_calibration_slope: Estimate,
    pub weak_calibration_intercept: Estimate,
    pub ici: Estimate,
    pub brier: Estimate,
    pub bootstrap_iterations: usize,
    pub bootstrap_failures: usize,
    pub bootstrap_seed: u64,
    pub calibration_curve: Vec<CurvePoint>,
}

/// Interval from bootstrap values, widened if needed so that it contains the point.
fn estimate(point: f64, values: &[f64]) -> Estimate {
    let (lo, hi) = percentile_interval(values);
    Estimate { point, lower: lo.min(point), upper: hi.max(point) }
}

/// Assemble a report from the point metrics and the bootstrap metric draws.
fn assemble(
    label: &str,
    data: &SurvivalDataset,
    tau: f64,
    opts: &MetricOptions,
    scheme: ValidationScheme,
    boot: &BootstrapConfig,
    grid: &[f64],
    point: &MetricValues,
    draws: &[MetricValues],
) -> MetricReport {
    let col = |f: &dyn Fn(&MetricValues) -> f64| -> Vec<f64> { draws.iter().map(f).collect() };
    let calibration_curve = grid
        .iter()
        .enumerate()
        .map(|(k, &p)| {
            let e = estimate(point.curve[k], &col(&|m| m.curve[k]));
            CurvePoint { predicted: p, observed: e.point, lower: e.lower, upper: e.upper }
        })
        .collect();
    MetricReport {
        version: REPORT_VERSION,
        label: label.to_string(),
        horizon: tau,
        n: data.n(),
        n_events: data.n_events(),
        scheme,
        mean_calibration_direction: if opts.reciprocal_mean_calibration {
            "expected_over_observed".into()
        } else {
            "observed_over_expected".into()
        },
        weight_floor: opts.weight_floor,
        tauroc: estimate(point.tauroc, &col(&|m| m.tauroc)),
        mean_calibration: estimate(point.mean_calibration, &col(&|m| m.mean_calibration)),
        weak_calibration_slope: estimate(point.weak_calibration_slope, &col(&|m| m.weak_calibration_slope)),
        weak_calibration_intercept: estimate(point.weak_calibration_intercept, &col(&|m| m.weak_calibration_intercept)),
        ici: estimate(point.ici, &col(&|m| m.ici)),
        brier: estimate(point.brier, &col(&|m| m.brier)),
        bootstrap_iterations: boot.iterations,
        bootstrap_failures: boot.iterations - draws.len(),
        bootstrap_seed: boot.seed,
        calibration_curve,
    }
}

/// Report for frozen risks on a cohort: only the cohort is resampled.
pub fn evaluate_risks(
    label: &str,
    risk: &[f64],
    data: &SurvivalDataset,
    tau: f64,
    opts: &MetricOptions,
    boot: &BootstrapConfig,
) -> Result<MetricReport> {
    check_risk(risk, data)?;
    let grid = curve_grid(risk);
    let point = compute_metrics(risk, data, tau, opts, &grid)?;
    let draws = bootstrap_values(data.n(), boot, |idx, _| {
        let r: Vec<f64> = idx.iter().map(|&i| risk[i]).collect();
        compute_metrics(&r, &data.subset(idx), tau, opts, &grid)
    })?;
    Ok(assemble(label, data, tau, opts, ValidationScheme::ResampleEvaluation, boot, &grid, &point, &draws))
}

/// A frozen model that predicts horizon risk for a cohort, matching covariates by name.
pub trait CohortPredictor {
    fn predict_cohort_risk(&self, cohort: &SurvivalDataset, t: f64) -> Result<Vec<f64>>;
}

impl CohortPredictor for SuperLearnerModel {
    fn predict_cohort_risk(&self, cohort: &SurvivalDataset, t: f64) -> Result<Vec<f64>> {
        self.predict_cohort(cohort, t)
    }
}

impl CohortPredictor for FittedLearner {
    fn predict_cohort_risk(&self, cohort: &SurvivalDataset, t: f64) -> Result<Vec<f64>> {
        let aligned = cohort.select_named(&self.covariate_names)?;
        self.predict_risk(aligned.covariates(), t)
    }
}

/// Temporal (external) validation: frozen model, censoring model from the
/// new cohort by default, bootstrap over the new cohort.
pub fn temporal_validate<M: CohortPredictor + ?Sized>(
    model: &M,
    cohort: &SurvivalDataset,
    tau: f64,
    opts: &MetricOptions,
    boot: &BootstrapConfig,
) -> Result<MetricReport> {
    let risk = model.predict_cohort_risk(cohort, tau)?;
    evaluate_risks("temporal validation", &risk, cohort, tau, opts, boot)
}

/// Internal validation of a fitted super learner on its own training data.
///
/// Point estimates are the apparent metrics. Intervals depend on `scheme`:
/// [`ValidationScheme::RefitFull`] reruns the whole pipeline on each resample
/// via `refit`; [`ValidationScheme::RefitCandidates`] refits each candidate
/// with its chosen hyperparameters and keeps the weights; both evaluate the
/// refit model on the original data. [`ValidationScheme::ResampleEvaluation`]
/// resamples the apparent predictions.
pub fn internal_validate<R>(
    model: &SuperLearnerModel,
    data: &SurvivalDataset,
    opts: &MetricOptions,
    boot: &BootstrapConfig,
    scheme: ValidationScheme,
    refit: R,
) -> Result<MetricReport>
where
    R: Fn(&SurvivalDataset, u64) -> Result<SuperLearnerModel> + Sync,
{
    let tau = model.horizon;
    let risk = model.predict_cohort(data, tau)?;
    check_risk(&risk, data)?;
    let grid = curve_grid(&risk);
    let point = compute_metrics(&risk, data, tau, opts, &grid)?;
    let draws = match scheme {
        ValidationScheme::ResampleEvaluation => bootstrap_values(data.n(), boot, |idx, _| {
            let r: Vec<f64> = idx.iter().map(|&i| risk[i]).collect();
            compute_metrics(&r, &data.subset(idx), tau, opts, &grid)
        })?,
        ValidationScheme::RefitFull => bootstrap_values(data.n(), boot, |idx, seed| {
            let refitted = refit(&data.subset(idx), seed)?;
            let r = refitted.predict_cohort(data, tau)?;
            compute_metrics(&r, data, tau, opts, &grid)
        })?,
        ValidationScheme::RefitCandidates => {
            let x = data.select_named(&model.covariate_names)?;
            let sub_x = x.covariates().select_columns(&model.candidate_columns);
            let train = x.select_covariates(&model.candidate_columns);
            bootstrap_values(data.n(), boot, |idx, seed| {
                let resample = train.subset(idx);
                let cands = model
                    .candidates
                    .iter()
                    .zip(&model.weights)
                    .enumerate()
                    .map(|(k, (c, &w))| {
                        if w == 0.0 {
                            return Ok(c.clone());
                        }
                        let spec = crate::learners::LearnerSpec {
                            kind: c.kind,
                            hyperparameters: c.hyperparameters.clone(),
                            tuning_grid: Default::default(),
                        };
                        spec.fit(&resample, child_seed(seed, k as u64))
                    })
                    .collect::<Result<Vec<_>>>()?;
                let r = combine(&cands, &model.weights, &sub_x, tau)?;
                compute_metrics(&r, data, tau, opts, &grid)
            })?
        }
    };
    Ok(assemble("internal validation", data, tau, opts, scheme, boot, &grid, &point, &draws))
}

impl MetricReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        let r: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if r.version != REPORT_VERSION {
            return Err(Error::Validation(format!("unsupported report version {}", r.version)));
        }
        Ok(r)
    }

    /// Calibration curve as CSV with columns `predicted,observed,lower,upper`.
    pub fn write_curve_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["predicted", "observed", "lower", "upper"])?;
        for p in &self.calibration_curve {
            w.write_record([p.predicted.to_string(), p.observed.to_string(), p.lower.to_string(), p.upper.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Rows of the metric table: (name, estimate).
    pub fn rows(&self) -> [(&'static str, Estimate); 6] {
        [
            ("tAUROC", self.tauroc),
            ("Mean calibration", self.mean_calibration),
            ("Weak calibration (slope)", self.weak_calibration_slope),
            ("Weak calibration (intercept)", self.weak_calibration_intercept),
            ("ICI", self.ici),
            ("Brier score", self.brier),
        ]
    }
}

fn fmt_estimate(e: &Estimate) -> String {
    format!("{:.3} [{:.3}; {:.3}]", e.point, e.lower, e.upper)
}

/// Side-by-side markdown table of metric reports (metric x cohort).
pub fn render_table(reports: &[(String, MetricReport)]) -> String {
    let mut out = String::new();
    if reports.is_empty() {
        return out;
    }
    let h0 = reports[0].1.horizon;
    if reports.iter().any(|(_, r)| r.horizon != h0) {
        let hs: Vec<String> = reports.iter().map(|(name, r)| format!("{name}: tau={}", r.horizon)).collect();
        let _ = writeln!(out, "> **Warning:** reports use different horizons ({}).\n", hs.join(", "));
    }
    let _ = write!(out, "| Metric |");
    for (name, r) in reports {
        let _ = write!(out, " {name} (tau={}) |", r.horizon);
    }
    let _ = write!(out, "\n|---|");
    for _ in reports {
        let _ = write!(out, "---|");
    }
    out.push('\n');
    let rows: Vec<_> = reports.iter().map(|(_, r)| r.rows()).collect();
    for k in 0..rows[0].len() {
        let _ = write!(out, "| {} |", rows[0][k].0);
        for r in &rows {
            let _ = write!(out, " {} |", fmt_estimate(&r[k].1));
        }
        out.push('\n');
    }
    let _ = write!(out, "| n (events) |");
    for (_, r) in reports {
        let _ = write!(out, " {} ({}) |", r.n, r.n_events);
    }
    out.push('\n');
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftFlags {
    pub mean_calibration_departure: bool,
    pub brier_change: f64,
    pub tauroc_change: f64,
}

/// Compare development and validation reports.
pub fn drift_flags(development: &MetricReport, validation: &MetricReport, threshold: f64) -> DriftFlags {
    DriftFlags {
        mean_calibration_departure: (validation.mean_calibration.point - 1.0).abs() > threshold,
        brier_change: validation.brier.point - development.brier.point,
        tauroc_change: validation.tauroc.point - development.tauroc.point,
    }
}

/// Markdown drift summary: side-by-side table plus flags.
pub fn drift_summary_markdown(development: &MetricReport, validation: &MetricReport, threshold: f64) -> String {
    let flags = drift_flags(development, validation, threshold);
    let mut out = String::from("# Drift summary\n\n");
    out += &render_table(&[("development".to_string(), development.clone()), ("validation".to_string(), validation.clone())]);
    out += "\n";
    if flags.mean_calibration_departure {
        let _ = writeln!(
            out,
            "- FLAG mean-calibration departure: {:.3} differs from 1 by more than {threshold}",
            validation.mean_calibration.point
        );
    } else {
        let _ = writeln!(out, "- mean calibration within {threshold} of 1 ({:.3})", validation.mean_calibration.point);
    }
    let _ = writeln!(out, "- Brier change (validation - development): {:+.4}", flags.brier_change);
    let _ = writeln!(out, "- tAUROC change (validation - development): {:+.4}", flags.tauroc_change);
    out
}
