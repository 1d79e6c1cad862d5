//! Right-censored cohorts: in-memory representation, CSV ingestion and a
//! two-era synthetic generator with controllable covariate and hazard drift.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// A right-censored cohort.
///
/// Times are in years. `events[i]` is `true` when the event was observed at
/// `times[i]` and `false` when the subject was censored there. Tied times are
/// kept as-is.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalDataset {
    times: Vec<f64>,
    events: Vec<bool>,
    covariates: DMatrix<f64>,
    covariate_names: Vec<String>,
    horizon_hint: Option<f64>,
}

impl SurvivalDataset {
    pub fn new(
        times: Vec<f64>,
        events: Vec<bool>,
        covariates: DMatrix<f64>,
        covariate_names: Vec<String>,
    ) -> Result<Self> {
        let n = times.len();
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        if events.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: events.len() });
        }
        if covariates.nrows() != n {
            return Err(Error::DimensionMismatch { expected: n, found: covariates.nrows() });
        }
        if covariate_names.len() != covariates.ncols() {
            return Err(Error::DimensionMismatch {
                expected: covariates.ncols(),
                found: covariate_names.len(),
            });
        }
        if let Some(i) = times.iter().position(|t| !t.is_finite() || *t < 0.0) {
            return Err(Error::Validation(format!(
                "time for subject {i} must be finite and nonnegative, got {}",
                times[i]
            )));
        }
        if covariates.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("covariates must be finite".into()));
        }
        Ok(Self { times, events, covariates, covariate_names, horizon_hint: None })
    }

    /// Convenience constructor with generated names `x1..xp`.
    pub fn from_rows(times: Vec<f64>, events: Vec<bool>, rows: &[Vec<f64>]) -> Result<Self> {
        let n = times.len();
        let p = rows.first().map_or(0, Vec::len);
        if rows.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: rows.len() });
        }
        if let Some(r) = rows.iter().find(|r| r.len() != p) {
            return Err(Error::DimensionMismatch { expected: p, found: r.len() });
        }
        let x = DMatrix::from_fn(n, p, |i, j| rows[i][j]);
        let names = (1..=p).map(|j| format!("x{j}")).collect();
        Self::new(times, events, x, names)
    }

    pub fn with_horizon_hint(mut self, tau: f64) -> Self {
        self.horizon_hint = Some(tau);
        self
    }

    pub fn n(&self) -> usize {
        self.times.len()
    }

    pub fn p(&self) -> usize {
        self.covariates.ncols()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn events(&self) -> &[bool] {
        &self.events
    }

    pub fn covariates(&self) -> &DMatrix<f64> {
        &self.covariates
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn horizon_hint(&self) -> Option<f64> {
        self.horizon_hint
    }

    pub fn n_events(&self) -> usize {
        self.events.iter().filter(|&&e| e).count()
    }

    pub fn max_time(&self) -> f64 {
        self.times.iter().copied().fold(0.0, f64::max)
    }

    /// Binary horizon outcome: event observed at or before `tau`.
    pub fn event_by(&self, tau: f64) -> Vec<bool> {
        self.times.iter().zip(&self.events).map(|(&t, &e)| e && t <= tau).collect()
    }

    /// Rows in the given order; indices may repeat (bootstrap resamples).
    pub fn subset(&self, indices: &[usize]) -> Self {
        let p = self.p();
        Self {
            times: indices.iter().map(|&i| self.times[i]).collect(),
            events: indices.iter().map(|&i| self.events[i]).collect(),
            covariates: DMatrix::from_fn(indices.len(), p, |r, c| self.covariates[(indices[r], c)]),
            covariate_names: self.covariate_names.clone(),
            horizon_hint: self.horizon_hint,
        }
    }

    pub fn select_covariates(&self, columns: &[usize]) -> Self {
        Self {
            times: self.times.clone(),
            events: self.events.clone(),
            covariates: self.covariates.select_columns(columns),
            covariate_names: columns.iter().map(|&j| self.covariate_names[j].clone()).collect(),
            horizon_hint: self.horizon_hint,
        }
    }

    /// Reorder/select columns by name; errors list every absent name.
    pub fn select_named(&self, names: &[String]) -> Result<Self> {
        let mut cols = Vec::with_capacity(names.len());
        let mut missing = Vec::new();
        for name in names {
            match self.covariate_names.iter().position(|c| c == name) {
                Some(j) => cols.push(j),
                None => missing.push(name.clone()),
            }
        }
        if !missing.is_empty() {
            return Err(Error::MissingCovariates(missing));
        }
        Ok(self.select_covariates(&cols))
    }

    /// Administrative censoring at `tau`: follow-up past `tau` is truncated to
    /// `tau` and marked censored.
    pub fn administratively_censor(&self, tau: f64) -> Self {
        let mut out = self.clone();
        for (t, e) in out.times.iter_mut().zip(out.events.iter_mut()) {
            if *t > tau {
                *t = tau;
                *e = false;
            }
        }
        out
    }

    /// Write the cohort as CSV (`time,event,<covariates>`). Values use the
    /// shortest representation that parses back to the same `f64`.
    pub fn write_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["time".to_string(), "event".to_string()];
        header.extend(self.covariate_names.iter().cloned());
        w.write_record(&header)?;
        for i in 0..self.n() {
            let mut rec = Vec::with_capacity(header.len());
            rec.push(self.times[i].to_string());
            rec.push(if self.events[i] { "1" } else { "0" }.to_string());
            for j in 0..self.p() {
                rec.push(self.covariates[(i, j)].to_string());
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Which CSV columns play which role.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub time: String,
    pub event: String,
    /// Empty means "every other column".
    #[serde(default)]
    pub covariates: Vec<String>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self { time: "time".into(), event: "event".into(), covariates: Vec::new() }
    }
}

impl CsvSchema {
    pub fn from_json_file<P: AsRef<Path>>(path: P) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Debug, Clone)]
pub struct LoadedCohort {
    pub data: SurvivalDataset,
    /// Rows dropped because some required field was missing.
    pub dropped: usize,
}

fn is_missing(cell: &str) -> bool {
    matches!(cell.trim(), "" | "NA" | "na" | "NaN" | "nan" | "." | "null")
}

fn parse_cell(cell: &str, row: usize, column: &str) -> Result<f64> {
    let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
        row,
        column: column.to_string(),
        value: cell.to_string(),
    })?;
    if !v.is_finite() {
        return Err(Error::Validation(format!("row {row}, column `{column}`: non-finite value `{cell}`")));
    }
    Ok(v)
}

/// Load a cohort from CSV. Rows with a missing required field are dropped
/// (complete-case analysis) and counted.
pub fn load_csv<P: AsRef<Path>>(path: P, schema: &CsvSchema) -> Result<LoadedCohort> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let find = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingCovariates(vec![name.to_string()]))
    };
    let time_col = find(&schema.time)?;
    let event_col = find(&schema.event)?;
    let cov_names: Vec<String> = if schema.covariates.is_empty() {
        headers
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != time_col && *j != event_col)
            .map(|(_, h)| h.clone())
            .collect()
    } else {
        schema.covariates.clone()
    };
    if cov_names.is_empty() {
        return Err(Error::Validation("schema names no covariate columns".into()));
    }
    let mut cov_cols = Vec::with_capacity(cov_names.len());
    let mut missing = Vec::new();
    for name in &cov_names {
        match headers.iter().position(|h| h == name) {
            Some(j) => cov_cols.push(j),
            None => missing.push(name.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingCovariates(missing));
    }

    let mut times = Vec::new();
    let mut events = Vec::new();
    let mut values = Vec::new();
    let mut dropped = 0usize;
    for (idx, rec) in reader.records().enumerate() {
        let rec = rec?;
        let row = idx + 1;
        let cell = |j: usize| rec.get(j).unwrap_or("");
        let required = std::iter::once(time_col).chain(std::iter::once(event_col)).chain(cov_cols.iter().copied());
        if required.clone().any(|j| is_missing(cell(j))) {
            dropped += 1;
            continue;
        }
        let t = parse_cell(cell(time_col), row, &schema.time)?;
        if t < 0.0 {
            return Err(Error::Validation(format!("row {row}: negative time {t}")));
        }
        let e = parse_cell(cell(event_col), row, &schema.event)?;
        let event = if e == 0.0 {
            false
        } else if e == 1.0 {
            true
        } else {
            return Err(Error::Validation(format!("row {row}: event value `{}` is not 0 or 1", cell(event_col))));
        };
        for (&j, name) in cov_cols.iter().zip(&cov_names) {
            values.push(parse_cell(cell(j), row, name)?);
        }
        times.push(t);
        events.push(event);
    }
    if times.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let p = cov_names.len();
    let x = DMatrix::from_row_slice(times.len(), p, &values);
    Ok(LoadedCohort { data: SurvivalDataset::new(times, events, x, cov_names)?, dropped })
}

/// Stratified k-fold assignment. Events and non-events are shuffled separately
/// and dealt round-robin (events first), so every fold gets its share of the
/// rare class and overall fold sizes differ by at most one.
pub fn split_folds(data: &SurvivalDataset, k: usize, seed: u64) -> Result<Vec<usize>> {
    let n = data.n();
    if k < 2 {
        return Err(Error::InvalidArgument(format!("fold count must be at least 2, got {k}")));
    }
    if k > n {
        return Err(Error::InvalidArgument(format!("fold count {k} exceeds sample size {n}")));
    }
    let mut rng = rng::seeded(seed);
    let (mut with_event, mut without): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| data.events()[i]);
    with_event.shuffle(&mut rng);
    without.shuffle(&mut rng);
    let mut folds = vec![0usize; n];
    for (pos, &i) in with_event.iter().chain(without.iter()).enumerate() {
        folds[i] = pos % k;
    }
    Ok(folds)
}

/// Training and held-out indices for fold `f`.
pub fn fold_split(folds: &[usize], f: usize) -> (Vec<usize>, Vec<usize>) {
    (0..folds.len()).partition(|&i| folds[i] != f)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CovariateDistribution {
    Normal { mean: f64, sd: f64 },
    Bernoulli { p: f64 },
}

impl CovariateDistribution {
    fn mean(&self) -> f64 {
        match *self {
            CovariateDistribution::Normal { mean, .. } => mean,
            CovariateDistribution::Bernoulli { p } => p,
        }
    }

    fn shifted(&self, shift: f64) -> Self {
        match *self {
            CovariateDistribution::Normal { mean, sd } => CovariateDistribution::Normal { mean: mean + shift, sd },
            CovariateDistribution::Bernoulli { p } => CovariateDistribution::Bernoulli { p: (p + shift).clamp(0.0, 1.0) },
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            CovariateDistribution::Normal { mean, sd } => {
                let z: f64 = StandardNormal.sample(rng);
                mean + sd * z
            }
            CovariateDistribution::Bernoulli { p } => {
                if rng.gen::<f64>() < p {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateModel {
    pub name: String,
    pub distribution: CovariateDistribution,
    /// Log hazard ratio per unit.
    pub coefficient: f64,
}

/// Weibull proportional-hazards data model with independent exponential censoring:
/// `H(t | x) = m * (t / scale)^shape * exp(sum_j beta_j * (x_j - base_mean_j))`.
///
/// The linear predictor is centred at the development-era covariate means, so a
/// subject at the base means follows the Weibull baseline exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataGeneratingModel {
    pub covariates: Vec<CovariateModel>,
    pub weibull_shape: f64,
    pub weibull_scale: f64,
    /// Exponential censoring rate per year; 0 disables random censoring.
    pub censoring_rate: f64,
    /// End of study; follow-up beyond it is administratively censored.
    pub max_followup: Option<f64>,
    pub horizon: f64,
}

impl DataGeneratingModel {
    /// Kidney-transplant-flavoured defaults: covariate means and prevalences in
    /// the range of a 1990s-2000s transplant cohort, ~10% seven-year baseline
    /// risk, censoring heavy enough that most subjects are censored.
    pub fn kidney_like() -> Self {
        use CovariateDistribution::*;
        let cov = |name: &str, distribution, coefficient| CovariateModel { name: name.into(), distribution, coefficient };
        Self {
            covariates: vec![
                cov("recipient_age", Normal { mean: 48.0, sd: 13.0 }, 0.016),
                cov("donor_age", Normal { mean: 45.2, sd: 15.8 }, 0.032),
                cov("creatinine_12m", Normal { mean: 130.0, sd: 35.0 }, 0.019),
                cov("proteinuria_12m", Normal { mean: 0.3, sd: 0.25 }, 1.9),
                cov("acute_rejection", Bernoulli { p: 0.239 }, 0.95),
                cov("male_recipient", Bernoulli { p: 0.619 }, 0.16),
                cov("previous_transplant", Bernoulli { p: 0.191 }, 0.64),
            ],
            weibull_shape: 1.3,
            weibull_scale: 56.9,
            censoring_rate: 0.12,
            max_followup: Some(12.0),
            horizon: 7.0,
        }
    }

    /// Single-covariate-free exponential model, handy for closed-form checks.
    pub fn exponential(rate: f64, censoring_rate: f64, horizon: f64) -> Self {
        Self {
            covariates: Vec::new(),
            weibull_shape: 1.0,
            weibull_scale: 1.0 / rate,
            censoring_rate,
            max_followup: None,
            horizon,
        }
    }

    pub fn p(&self) -> usize {
        self.covariates.len()
    }

    fn validate(&self) -> Result<()> {
        if !(self.weibull_shape > 0.0 && self.weibull_scale > 0.0) {
            return Err(Error::InvalidArgument("Weibull shape and scale must be positive".into()));
        }
        if self.censoring_rate < 0.0 {
            return Err(Error::InvalidArgument("censoring rate must be nonnegative".into()));
        }
        if !(self.horizon > 0.0) {
            return Err(Error::InvalidArgument("horizon must be positive".into()));
        }
        Ok(())
    }

    fn linear_predictor(&self, x: &[f64]) -> f64 {
        self.covariates.iter().zip(x).map(|(c, &v)| c.coefficient * (v - c.distribution.mean())).sum()
    }

    /// Closed-form cumulative hazard at `t` given covariates and hazard multiplier.
    pub fn cumulative_hazard(&self, x: &[f64], t: f64, multiplier: f64) -> f64 {
        multiplier * (t / self.weibull_scale).powf(self.weibull_shape) * self.linear_predictor(x).exp()
    }

    /// Closed-form true event probability by `t`.
    pub fn true_risk(&self, x: &[f64], t: f64, multiplier: f64) -> f64 {
        -(-self.cumulative_hazard(x, t, multiplier)).exp_m1()
    }
}

/// Drift applied to the shifted era.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftSpec {
    /// Additive shift per covariate (in model order); empty means no shift.
    #[serde(default)]
    pub covariate_mean_shifts: Vec<f64>,
    pub event_rate_multiplier: f64,
    pub censoring_rate_multiplier: f64,
    pub seed: u64,
}

impl DriftSpec {
    pub fn none(seed: u64) -> Self {
        Self { covariate_mean_shifts: Vec::new(), event_rate_multiplier: 1.0, censoring_rate_multiplier: 1.0, seed }
    }

    /// Shifts in the direction of a decade-later transplant cohort: older
    /// recipients and donors, less acute rejection and lower proteinuria.
    /// Matches the covariate order of [`DataGeneratingModel::kidney_like`].
    pub fn kidney_like(seed: u64) -> Self {
        Self {
            covariate_mean_shifts: vec![5.5, 9.8, 2.0, -0.2, -0.145, -0.004, 0.02],
            event_rate_multiplier: 1.5,
            censoring_rate_multiplier: 0.8,
            seed,
        }
    }

    fn validate(&self, p: usize) -> Result<()> {
        if !(self.event_rate_multiplier > 0.0 && self.censoring_rate_multiplier > 0.0) {
            return Err(Error::InvalidArgument("drift multipliers must be positive".into()));
        }
        if !self.covariate_mean_shifts.is_empty() && self.covariate_mean_shifts.len() != p {
            return Err(Error::DimensionMismatch { expected: p, found: self.covariate_mean_shifts.len() });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Era {
    Development,
    Shifted,
}

/// A simulated cohort plus each subject's closed-form risk at the model horizon.
#[derive(Debug, Clone)]
pub struct SimulatedCohort {
    pub data: SurvivalDataset,
    pub true_risk: Vec<f64>,
}

/// Draw a cohort. The development era uses base covariate distributions and
/// hazards; the shifted era applies `spec`. Each era uses its own random
/// stream under `spec.seed`.
pub fn generate_cohort(n: usize, era: Era, spec: &DriftSpec, model: &DataGeneratingModel) -> Result<SimulatedCohort> {
    if n == 0 {
        return Err(Error::InvalidArgument("cohort size must be positive".into()));
    }
    model.validate()?;
    spec.validate(model.p())?;
    let p = model.p();
    let (dists, hazard_mult, cens_mult, stream) = match era {
        Era::Development => (model.covariates.iter().map(|c| c.distribution).collect::<Vec<_>>(), 1.0, 1.0, 0),
        Era::Shifted => (
            model
                .covariates
                .iter()
                .enumerate()
                .map(|(j, c)| c.distribution.shifted(spec.covariate_mean_shifts.get(j).copied().unwrap_or(0.0)))
                .collect(),
            spec.event_rate_multiplier,
            spec.censoring_rate_multiplier,
            1,
        ),
    };
    let mut rng = rng::stream(spec.seed, stream);
    let mut values = Vec::with_capacity(n * p);
    let mut times = Vec::with_capacity(n);
    let mut events = Vec::with_capacity(n);
    let mut true_risk = Vec::with_capacity(n);
    let mut row = vec![0.0; p];
    for _ in 0..n {
        for (slot, d) in row.iter_mut().zip(&dists) {
            *slot = d.sample(&mut rng);
        }
        let eta = model.linear_predictor(&row);
        let e: f64 = Exp1.sample(&mut rng);
        let event_time = model.weibull_scale * (e / (hazard_mult * eta.exp())).powf(1.0 / model.weibull_shape);
        let rate = model.censoring_rate * cens_mult;
        let mut censor_time = if rate > 0.0 {
            let c: f64 = Exp1.sample(&mut rng);
            c / rate
        } else {
            f64::INFINITY
        };
        if let Some(end) = model.max_followup {
            censor_time = censor_time.min(end);
        }
        if event_time <= censor_time {
            times.push(event_time);
            events.push(true);
        } else {
            times.push(censor_time);
            events.push(false);
        }
        true_risk.push(model.true_risk(&row, model.horizon, hazard_mult));
        values.extend_from_slice(&row);
    }
    let x = DMatrix::from_row_slice(n, p, &values);
    let names = model.covariates.iter().map(|c| c.name.clone()).collect();
    let data = SurvivalDataset::new(times, events, x, names)?.with_horizon_hint(model.horizon);
    Ok(SimulatedCohort { data, true_risk })
}

/// Per-column mean and standard deviation, used for drift summaries.
pub fn covariate_summary(data: &SurvivalDataset) -> BTreeMap<String, (f64, f64)> {
    let n = data.n() as f64;
    data.covariate_names()
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let col = data.covariates().column(j);
            let mean = col.sum() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
            (name.clone(), (mean, var.sqrt()))
        })
        .collect()
}
