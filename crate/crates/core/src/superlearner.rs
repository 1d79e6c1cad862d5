//! Cross-validated stacking over candidate learners. Out-of-fold horizon risks
//! are combined as `inverse_logit(sum_k w_k logit(risk_k))` with `w` on the
//! probability simplex, chosen to minimize a censoring-aware loss.

use std::path::Path;

use log::warn;
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::censoring::{fit_censoring_km, ipcw_weights, CensoringModel, IpcwWeights, DEFAULT_WEIGHT_FLOOR};
use crate::dataset::{fold_split, split_folds, SurvivalDataset};
use crate::error::{Error, Result};
use crate::learners::{
    fit_elasticnet_cox, fit_with_tuning, FitContext, FittedLearner, Learner, LearnerKind, LearnerSpec, SurvivalPredictor,
};
use crate::losses::LossKind;
use crate::numeric::{inv_logit, logit, nelder_mead, project_simplex};
use crate::rng::{self, child_seed};

/// Version of the serialized super learner document.
pub const SUPER_LEARNER_VERSION: u32 = 1;
/// Per-learner risks are clipped to `[COMBINE_EPS, 1 - COMBINE_EPS]` before the logit.
pub const COMBINE_EPS: f64 = 1e-6;
/// Multi-starts for the derivative-free search used with the AUC loss.
pub const AUC_STARTS: usize = 20;

/// A learner that was dropped from the pool, and why.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LearnerWarning {
    pub learner: String,
    /// Fold on which the fit failed; `None` for the full-data refit.
    pub fold: Option<usize>,
    pub message: String,
}

/// Out-of-fold horizon risks for the learners that succeeded on every fold.
#[derive(Debug, Clone)]
pub struct CvPredictions {
    /// Indices (into the input learner list) of the surviving learners.
    pub kept: Vec<usize>,
    pub labels: Vec<String>,
    /// `n x K` risks at `tau`; column `k` belongs to `kept[k]`.
    pub risk: DMatrix<f64>,
    pub warnings: Vec<LearnerWarning>,
}

/// Fit every learner on every training fold and predict the held-out fold at
/// `ctx.tau`. A learner that fails on any fold is dropped with a warning.
pub fn cv_predictions(
    learners: &[&dyn Learner],
    data: &SurvivalDataset,
    folds: &[usize],
    ctx: &FitContext,
    seed: u64,
) -> Result<CvPredictions> {
    if folds.len() != data.n() {
        return Err(Error::DimensionMismatch { expected: data.n(), found: folds.len() });
    }
    let k_folds = folds.iter().copied().max().map_or(0, |m| m + 1);
    let jobs: Vec<(usize, usize)> = (0..learners.len()).flat_map(|l| (0..k_folds).map(move |f| (l, f))).collect();
    let outcomes: Vec<Result<(Vec<usize>, Vec<f64>)>> = jobs
        .par_iter()
        .map(|&(l, f)| {
            let (train, test) = fold_split(folds, f);
            let s = child_seed(child_seed(seed, 100 + l as u64), f as u64);
            let model = learners[l].fit_predictor(&data.subset(&train), s, ctx)?;
            let risk = model.predict_risk(data.subset(&test).covariates(), ctx.tau)?;
            if let Some(bad) = risk.iter().find(|r| !r.is_finite()) {
                return Err(Error::Divergence(format!("non-finite predicted risk {bad}")));
            }
            Ok((test, risk))
        })
        .collect();

    let n = data.n();
    let mut columns: Vec<Option<Vec<f64>>> = vec![Some(vec![f64::NAN; n]); learners.len()];
    let mut warnings = Vec::new();
    for (&(l, f), outcome) in jobs.iter().zip(outcomes) {
        match outcome {
            Ok((test, risk)) => {
                if let Some(col) = columns[l].as_mut() {
                    for (i, r) in test.into_iter().zip(risk) {
                        col[i] = r;
                    }
                }
            }
            Err(e) => {
                let label = learners[l].label();
                warn!("dropping {label}: fit failed on fold {f}: {e}");
                warnings.push(LearnerWarning { learner: label, fold: Some(f), message: e.to_string() });
                columns[l] = None;
            }
        }
    }
    let kept: Vec<usize> = (0..learners.len()).filter(|&l| columns[l].is_some()).collect();
    if kept.is_empty() {
        return Err(Error::AllLearnersFailed(warnings.iter().map(|w| format!("{}: {}", w.learner, w.message)).collect()));
    }
    let risk = DMatrix::from_fn(n, kept.len(), |i, k| columns[kept[k]].as_ref().unwrap()[i]);
    Ok(CvPredictions { labels: kept.iter().map(|&l| learners[l].label()).collect(), kept, risk, warnings })
}

fn clipped_logit(r: f64) -> f64 {
    logit(r.clamp(COMBINE_EPS, 1.0 - COMBINE_EPS))
}

/// Weighted logit-scale combination of per-learner risk columns.
pub fn combine_risks(columns: &[Vec<f64>], weights: &[f64]) -> Result<Vec<f64>> {
    if columns.len() != weights.len() || columns.is_empty() {
        return Err(Error::DimensionMismatch { expected: weights.len(), found: columns.len() });
    }
    let n = columns[0].len();
    if columns.iter().any(|c| c.len() != n) {
        return Err(Error::InvalidArgument("risk columns differ in length".into()));
    }
    check_simplex(weights)?;
    let mut eta = vec![0.0; n];
    for (col, &w) in columns.iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        for (e, &r) in eta.iter_mut().zip(col) {
            *e += w * clipped_logit(r);
        }
    }
    Ok(eta.into_iter().map(inv_logit).collect())
}

/// Combined risk of fitted candidates at time `t`.
pub fn combine(candidates: &[FittedLearner], weights: &[f64], x: &DMatrix<f64>, t: f64) -> Result<Vec<f64>> {
    if candidates.len() != weights.len() {
        return Err(Error::DimensionMismatch { expected: candidates.len(), found: weights.len() });
    }
    let columns = candidates
        .iter()
        .zip(weights)
        .map(|(c, &w)| if w == 0.0 { Ok(vec![0.5; x.nrows()]) } else { c.predict_risk(x, t) })
        .collect::<Result<Vec<_>>>()?;
    combine_risks(&columns, weights)
}

fn check_simplex(w: &[f64]) -> Result<()> {
    let s: f64 = w.iter().sum();
    if w.iter().any(|&v| !(v >= 0.0)) || (s - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidArgument(format!("weights {w:?} are not on the simplex")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightFit {
    pub weights: Vec<f64>,
    pub loss: f64,
    /// Loss of each candidate on its own (the simplex vertices).
    pub vertex_losses: Vec<f64>,
}

struct StackObjective<'a> {
    logits: Vec<Vec<f64>>,
    loss: LossKind,
    ipcw: &'a IpcwWeights,
}

impl StackObjective<'_> {
    fn risk(&self, w: &[f64]) -> Vec<f64> {
        let n = self.logits[0].len();
        let mut eta = vec![0.0; n];
        for (col, &wk) in self.logits.iter().zip(w) {
            if wk == 0.0 {
                continue;
            }
            for (e, l) in eta.iter_mut().zip(col) {
                *e += wk * l;
            }
        }
        eta.into_iter().map(inv_logit).collect()
    }

    fn value(&self, w: &[f64]) -> Result<f64> {
        let v = self.loss.evaluate(&self.risk(w), self.ipcw)?;
        if !v.is_finite() {
            return Err(Error::Divergence(format!("non-finite {} loss at weights {w:?}", self.loss)));
        }
        Ok(v)
    }

    /// Loss and gradient with respect to the weights (smooth losses only).
    fn value_and_gradient(&self, w: &[f64]) -> Result<(f64, Vec<f64>)> {
        let r = self.risk(w);
        let v = self.loss.evaluate(&r, self.ipcw)?;
        if !v.is_finite() {
            return Err(Error::Divergence(format!("non-finite {} loss at weights {w:?}", self.loss)));
        }
        let n = r.len() as f64;
        let eps = crate::losses::LOGLIK_EPS;
        let d_eta: Vec<f64> = r
            .iter()
            .enumerate()
            .map(|(i, &ri)| {
                let wi = self.ipcw.weights[i];
                let y = self.ipcw.outcome(i);
                match self.loss {
                    LossKind::IpcwBrier => 2.0 / n * wi * (ri - y) * ri * (1.0 - ri),
                    LossKind::NegativeBinomialLoglik => {
                        if ri < eps || ri > 1.0 - eps {
                            0.0
                        } else {
                            -wi * (y - ri) / n
                        }
                    }
                    LossKind::AurocT => 0.0,
                }
            })
            .collect();
        let g = self.logits.iter().map(|col| col.iter().zip(&d_eta).map(|(l, d)| l * d).sum()).collect();
        Ok((v, g))
    }
}

fn projected_gradient(obj: &StackObjective, start: Vec<f64>) -> Result<(Vec<f64>, f64)> {
    let mut w = start;
    let (mut f, mut g) = obj.value_and_gradient(&w)?;
    let mut step = 1.0;
    for _ in 0..5000 {
        let mut accepted = None;
        for _ in 0..60 {
            let cand = project_simplex(&w.iter().zip(&g).map(|(a, b)| a - step * b).collect::<Vec<_>>());
            let diff: Vec<f64> = cand.iter().zip(&w).map(|(c, a)| c - a).collect();
            let dist2: f64 = diff.iter().map(|d| d * d).sum();
            if dist2 == 0.0 {
                break;
            }
            let fc = obj.value(&cand)?;
            let model = f + diff.iter().zip(&g).map(|(d, gg)| d * gg).sum::<f64>() + dist2 / (2.0 * step);
            if fc <= model {
                accepted = Some((cand, fc, dist2.sqrt()));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, fc, moved)) = accepted else { break };
        let improvement = f - fc;
        w = cand;
        (f, g) = obj.value_and_gradient(&w)?;
        step *= 2.0;
        if moved < 1e-12 || improvement <= 1e-16 * f.abs().max(1e-300) {
            break;
        }
    }
    Ok((w, f))
}

fn softmax(theta: &[f64]) -> Vec<f64> {
    let m = theta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = theta.iter().map(|t| (t - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Lattice evaluations allowed when seeding the AUC-loss search.
const LATTICE_BUDGET: usize = 10_626;

/// Finest lattice resolution (at most 100) whose point count fits the budget;
/// `None` when even a resolution of 4 does not fit.
fn lattice_steps(k: usize) -> Option<usize> {
    // points = C(steps + k - 1, k - 1)
    let count = |steps: usize| -> f64 { (1..k).map(|j| (steps + j) as f64 / j as f64).product() };
    (4..=100).rev().find(|&s| count(s) <= LATTICE_BUDGET as f64 + 0.5)
}

/// Points of the simplex lattice with the given resolution.
fn lattice(k: usize, steps: usize) -> Vec<Vec<f64>> {
    fn rec(k: usize, left: usize, steps: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<f64>>) {
        if cur.len() == k - 1 {
            cur.push(left);
            out.push(cur.iter().map(|&c| c as f64 / steps as f64).collect());
            cur.pop();
            return;
        }
        for c in 0..=left {
            cur.push(c);
            rec(k, left - c, steps, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(k, steps, steps, &mut Vec::new(), &mut out);
    out
}

/// Simplex weights minimizing the loss of the logit-scale combination of the
/// out-of-fold risk columns. Smooth losses use projected gradient descent from
/// every vertex and the barycentre; the AUC loss uses Nelder–Mead over
/// softmax-parameterized weights with multiple starts. The result never loses
/// to a vertex; among (near-)ties the first-listed vertex wins.
pub fn optimize_weights(oof: &DMatrix<f64>, loss: LossKind, ipcw: &IpcwWeights) -> Result<WeightFit> {
    let (n, k) = oof.shape();
    if k == 0 {
        return Err(Error::InvalidArgument("no candidate predictions".into()));
    }
    if n != ipcw.len() {
        return Err(Error::DimensionMismatch { expected: ipcw.len(), found: n });
    }
    if let Some(bad) = oof.iter().find(|r| !(0.0..=1.0).contains(*r)) {
        return Err(Error::InvalidArgument(format!("out-of-fold risk {bad} outside [0, 1]")));
    }
    let obj = StackObjective {
        logits: (0..k).map(|j| oof.column(j).iter().map(|&r| clipped_logit(r)).collect()).collect(),
        loss,
        ipcw,
    };
    let vertices: Vec<Vec<f64>> = (0..k).map(|j| (0..k).map(|i| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    let vertex_losses = vertices.iter().map(|v| obj.value(v)).collect::<Result<Vec<_>>>()?;
    if k == 1 {
        return Ok(WeightFit { weights: vec![1.0], loss: vertex_losses[0], vertex_losses });
    }

    let mut best: (Vec<f64>, f64) = (vec![1.0 / k as f64; k], f64::INFINITY);
    let consider = |w: Vec<f64>, f: f64, best: &mut (Vec<f64>, f64)| {
        if f < best.1 {
            *best = (w, f);
        }
    };
    if loss.is_smooth() {
        let mut starts = vertices.clone();
        starts.push(vec![1.0 / k as f64; k]);
        let runs = starts.into_par_iter().map(|s| projected_gradient(&obj, s)).collect::<Vec<_>>();
        for r in runs {
            let (w, f) = r?;
            consider(w, f, &mut best);
        }
    } else {
        // a simplex lattice seeds the search; finer for small pools
        let mut starts: Vec<Vec<f64>> = Vec::new();
        if let Some(steps) = lattice_steps(k) {
            let mut lat_best = (vec![], f64::INFINITY);
            for p in lattice(k, steps) {
                let f = obj.value(&p)?;
                if f < lat_best.1 {
                    lat_best = (p, f);
                }
            }
            consider(lat_best.0.clone(), lat_best.1, &mut best);
            starts.push(lat_best.0.iter().map(|v| (v.max(1e-3)).ln()).collect());
        }
        let mut r = rng::seeded(0x5354_4143);
        starts.push(vec![0.0; k]);
        for j in 0..k {
            starts.push((0..k).map(|i| if i == j { 3.0 } else { 0.0 }).collect());
        }
        while starts.len() < AUC_STARTS.max(k + 2) {
            starts.push((0..k).map(|_| 2.0 * r.sample::<f64, _>(StandardNormal)).collect());
        }
        for s in starts {
            let (theta, _) = nelder_mead(&s, 1.0, 2000, 1e-10, |th| obj.value(&softmax(th)).unwrap_or(f64::INFINITY));
            let w = softmax(&theta);
            let f = obj.value(&w)?;
            consider(w, f, &mut best);
        }
    }
    // vertex comparison and tie-break toward the first-listed vertex
    let tol = 1e-12 * best.1.abs().max(1e-12);
    for (v, &f) in vertices.iter().zip(&vertex_losses) {
        if f <= best.1 + tol {
            return Ok(WeightFit { weights: v.clone(), loss: f, vertex_losses });
        }
    }
    let (w, f) = best;
    Ok(WeightFit { weights: w, loss: f, vertex_losses })
}

/// Retained covariates after elastic-net screening.
pub fn screen_elasticnet(data: &SurvivalDataset, alpha: f64, lambda: f64) -> Result<Vec<usize>> {
    let fit = fit_elasticnet_cox(data, alpha, lambda)?;
    let kept: Vec<usize> = fit.coefficients.iter().enumerate().filter(|(_, &b)| b != 0.0).map(|(j, _)| j).collect();
    if kept.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "elastic-net screening at lambda={lambda} retained no predictors; choose a smaller lambda"
        )));
    }
    Ok(kept)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScreeningMode {
    /// Screen once on the full training data, before cross-validation.
    Once,
    /// Repeat screening inside every training fold (no selection leakage into the CV losses).
    WithinFolds,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScreeningConfig {
    pub alpha: f64,
    pub lambda: f64,
    pub mode: ScreeningMode,
}

impl Default for ScreeningConfig {
    fn default() -> Self {
        Self { alpha: 0.2, lambda: 0.028, mode: ScreeningMode::Once }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreeningInfo {
    pub alpha: f64,
    pub lambda: f64,
    pub mode: ScreeningMode,
    pub retained: Vec<String>,
}

/// Wraps a spec so that each fit screens its own training data first.
struct ScreenedLearner<'a> {
    spec: &'a LearnerSpec,
    alpha: f64,
    lambda: f64,
}

struct ScreenedPredictor {
    columns: Vec<usize>,
    model: FittedLearner,
}

impl SurvivalPredictor for ScreenedPredictor {
    fn predict_survival(&self, x: &DMatrix<f64>, t: f64) -> Result<Vec<f64>> {
        let sub = x.select_columns(&self.columns);
        self.model.predict_survival(&sub, t)
    }
}

impl Learner for ScreenedLearner<'_> {
    fn label(&self) -> String {
        self.spec.label()
    }

    fn fit_predictor(&self, data: &SurvivalDataset, seed: u64, ctx: &FitContext) -> Result<Box<dyn SurvivalPredictor>> {
        let columns = screen_elasticnet(data, self.alpha, self.lambda)?;
        let model = fit_with_tuning(self.spec, &data.select_covariates(&columns), seed, ctx)?;
        Ok(Box::new(ScreenedPredictor { columns, model }))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuperLearnerConfig {
    pub loss: LossKind,
    pub tau: f64,
    pub k_folds: usize,
    /// Folds for nested hyperparameter tuning.
    pub inner_folds: usize,
    pub seed: u64,
    pub weight_floor: f64,
    pub screening: Option<ScreeningConfig>,
}

impl SuperLearnerConfig {
    pub fn new(tau: f64, seed: u64) -> Self {
        Self {
            loss: LossKind::IpcwBrier,
            tau,
            k_folds: 10,
            inner_folds: 10,
            seed,
            weight_floor: DEFAULT_WEIGHT_FLOOR,
            screening: None,
        }
    }

    fn context(&self) -> FitContext {
        FitContext { tau: self.tau, loss: self.loss, inner_folds: self.inner_folds, weight_floor: self.weight_floor }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateReport {
    pub learner: String,
    /// CV loss of the candidate alone (its simplex vertex).
    pub cv_loss: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub loss: LossKind,
    pub k_folds: usize,
    pub candidates: Vec<CandidateReport>,
    pub ensemble_cv_loss: f64,
    pub warnings: Vec<LearnerWarning>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuperLearnerModel {
    pub version: u32,
    /// Covariates expected in input data, in order.
    pub covariate_names: Vec<String>,
    /// Columns of the input passed to the candidates (all of them unless screened).
    pub candidate_columns: Vec<usize>,
    pub candidates: Vec<FittedLearner>,
    pub weights: Vec<f64>,
    pub loss_kind: LossKind,
    pub horizon: f64,
    pub combine_eps: f64,
    pub cv_report: CvReport,
    pub screening: Option<ScreeningInfo>,
    /// Reverse Kaplan–Meier of the training cohort, for validation with a carried-over censoring model.
    #[serde(default)]
    pub development_censoring: Option<CensoringModel>,
}

impl SuperLearnerModel {
    pub fn labels(&self) -> Vec<String> {
        self.candidates.iter().map(|c| c.kind.name().to_string()).collect()
    }

    pub fn predict_risk(&self, x: &DMatrix<f64>, t: f64) -> Result<Vec<f64>> {
        crate::numeric::check_columns(x, self.covariate_names.len())?;
        let sub = x.select_columns(&self.candidate_columns);
        combine(&self.candidates, &self.weights, &sub, t)
    }

    pub fn predict_survival(&self, x: &DMatrix<f64>, t: f64) -> Result<Vec<f64>> {
        Ok(self.predict_risk(x, t)?.into_iter().map(|r| 1.0 - r).collect())
    }

    /// Risk at `t` for a cohort whose covariates are matched by name.
    pub fn predict_cohort(&self, cohort: &SurvivalDataset, t: f64) -> Result<Vec<f64>> {
        let aligned = cohort.select_named(&self.covariate_names)?;
        self.predict_risk(aligned.covariates(), t)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(s)?;
        if m.version != SUPER_LEARNER_VERSION {
            return Err(Error::Validation(format!("unsupported model document version {}", m.version)));
        }
        check_simplex(&m.weights)?;
        if m.weights.len() != m.candidates.len() {
            return Err(Error::Validation("weight count differs from candidate count".into()));
        }
        Ok(m)
    }

    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

impl SurvivalPredictor for SuperLearnerModel {
    fn predict_survival(&self, x: &DMatrix<f64>, t: f64) -> Result<Vec<f64>> {
        SuperLearnerModel::predict_survival(self, x, t)
    }
}

/// Screening → cross-validated predictions → simplex weights → full-data refits.
pub fn fit_super_learner(specs: &[LearnerSpec], data: &SurvivalDataset, cfg: &SuperLearnerConfig) -> Result<SuperLearnerModel> {
    if specs.is_empty() {
        return Err(Error::InvalidArgument("the learner pool is empty".into()));
    }
    for s in specs {
        s.validate()?;
    }
    if !(cfg.tau > 0.0) {
        return Err(Error::InvalidArgument(format!("horizon must be positive, got {}", cfg.tau)));
    }
    let ctx = cfg.context();
    let mut pool: Vec<LearnerSpec> = specs.to_vec();
    let mut candidate_columns: Vec<usize> = (0..data.p()).collect();
    let mut screening = None;
    if let Some(sc) = &cfg.screening {
        pool.retain(|s| s.kind != LearnerKind::ElasticnetCox);
        if pool.is_empty() {
            return Err(Error::InvalidArgument("screening removes the elastic-net learner, leaving an empty pool".into()));
        }
        candidate_columns = screen_elasticnet(data, sc.alpha, sc.lambda)?;
        screening = Some(ScreeningInfo {
            alpha: sc.alpha,
            lambda: sc.lambda,
            mode: sc.mode,
            retained: candidate_columns.iter().map(|&j| data.covariate_names()[j].clone()).collect(),
        });
    }
    let screened = data.select_covariates(&candidate_columns);
    let folds = split_folds(data, cfg.k_folds, child_seed(cfg.seed, 1))?;

    let wrapped: Vec<ScreenedLearner> = match &cfg.screening {
        Some(sc) if sc.mode == ScreeningMode::WithinFolds => {
            pool.iter().map(|s| ScreenedLearner { spec: s, alpha: sc.alpha, lambda: sc.lambda }).collect()
        }
        _ => Vec::new(),
    };
    let cv = if wrapped.is_empty() {
        let learners: Vec<&dyn Learner> = pool.iter().map(|s| s as &dyn Learner).collect();
        cv_predictions(&learners, &screened, &folds, &ctx, cfg.seed)?
    } else {
        let learners: Vec<&dyn Learner> = wrapped.iter().map(|s| s as &dyn Learner).collect();
        cv_predictions(&learners, data, &folds, &ctx, cfg.seed)?
    };

    let censoring = fit_censoring_km(data);
    let ipcw = ipcw_weights(&censoring, data, cfg.tau, cfg.weight_floor)?;

    let mut warnings = cv.warnings.clone();
    let mut kept = cv.kept.clone();
    let mut risk = cv.risk.clone();
    // refit survivors on all data; a refit failure drops the learner and re-optimizes
    let mut fitted: Vec<Option<FittedLearner>> = kept
        .par_iter()
        .map(|&l| fit_with_tuning(&pool[l], &screened, child_seed(cfg.seed, 10_000 + l as u64), &ctx).map_err(|e| e.to_string()))
        .collect::<Vec<_>>()
        .into_iter()
        .zip(&kept)
        .map(|(r, &l)| match r {
            Ok(m) => Some(m),
            Err(msg) => {
                warn!("dropping {}: full-data refit failed: {msg}", pool[l].label());
                warnings.push(LearnerWarning { learner: pool[l].label(), fold: None, message: msg });
                None
            }
        })
        .collect();
    let survivors: Vec<usize> = (0..kept.len()).filter(|&k| fitted[k].is_some()).collect();
    if survivors.is_empty() {
        return Err(Error::AllLearnersFailed(warnings.iter().map(|w| format!("{}: {}", w.learner, w.message)).collect()));
    }
    if survivors.len() < kept.len() {
        risk = risk.select_columns(&survivors);
        kept = survivors.iter().map(|&k| kept[k]).collect();
        fitted = survivors.iter().map(|&k| fitted[k].take()).collect();
    }
    let fit = optimize_weights(&risk, cfg.loss, &ipcw)?;
    let candidates: Vec<FittedLearner> = fitted.into_iter().map(|m| m.unwrap()).collect();
    let report = CvReport {
        loss: cfg.loss,
        k_folds: cfg.k_folds,
        candidates: kept
            .iter()
            .zip(&fit.vertex_losses)
            .zip(&fit.weights)
            .map(|((&l, &cv_loss), &weight)| CandidateReport { learner: pool[l].label(), cv_loss, weight })
            .collect(),
        ensemble_cv_loss: fit.loss,
        warnings,
    };
    Ok(SuperLearnerModel {
        version: SUPER_LEARNER_VERSION,
        covariate_names: data.covariate_names().to_vec(),
        candidate_columns,
        candidates,
        weights: fit.weights,
        loss_kind: cfg.loss,
        horizon: cfg.tau,
        combine_eps: COMBINE_EPS,
        cv_report: report,
        screening,
        development_censoring: Some(censoring),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uncensored(case: Vec<bool>) -> IpcwWeights {
        let n = case.len();
        IpcwWeights { tau: 1.0, weights: vec![1.0; n], case, eligible: vec![true; n], floor: 0.05 }
    }

    #[test]
    fn symmetric_pair_combines_to_half() {
        let r = combine_risks(&[vec![0.2], vec![0.8]], &[0.5, 0.5]).unwrap();
        assert!((r[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn identical_columns_pick_first_vertex() {
        let col = [0.1, 0.7, 0.3, 0.9, 0.2];
        let oof = DMatrix::from_fn(5, 2, |i, _| col[i]);
        let w = uncensored(vec![false, true, false, true, true]);
        for loss in [LossKind::IpcwBrier, LossKind::NegativeBinomialLoglik, LossKind::AurocT] {
            let fit = optimize_weights(&oof, loss, &w).unwrap();
            assert_eq!(fit.weights, vec![1.0, 0.0], "{loss}");
        }
    }

    #[test]
    fn lattice_counts() {
        assert_eq!(lattice(3, 100).len(), 5151);
        assert_eq!(lattice_steps(3), Some(100));
        assert_eq!(lattice_steps(5), Some(20));
        assert_eq!(lattice_steps(7), Some(10));
        assert!(lattice(7, 10).len() <= LATTICE_BUDGET);
        assert!(lattice(3, 4).iter().all(|p| (p.iter().sum::<f64>() - 1.0).abs() < 1e-12));
    }
}
