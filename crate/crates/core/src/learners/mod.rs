//! Candidate survival learners behind one contract: fit on a cohort, predict
//! `S(t | x)` at any `t >= 0`.

pub mod aft;
pub mod cox;
pub mod elasticnet;
pub mod forest;
pub mod neural;
pub mod ph;
pub mod royston_parmar;
pub mod tuning;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dataset::SurvivalDataset;
use crate::error::{Error, Result};
use crate::losses::LossKind;
use crate::numeric::check_columns;

pub use aft::{fit_gamma_aft, fit_weibull_aft, GammaAftFit, WeibullAftFit};
pub use cox::{fit_cox, ProportionalHazardsFit};
pub use elasticnet::fit_elasticnet_cox;
pub use forest::{fit_random_survival_forest, ForestConfig, ForestFit};
pub use neural::{fit_survival_nn, NetworkConfig, NetworkFit};
pub use royston_parmar::{fit_royston_parmar, RoystonParmarFit};
pub use tuning::tune_hyperparameters;

/// Version of the serialized learner document.
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    CoxMainTerms,
    WeibullAft,
    GammaAft,
    ElasticnetCox,
    RoystonParmar,
    RandomSurvivalForest,
    SurvivalNeuralNetwork,
}

impl LearnerKind {
    pub const ALL: [LearnerKind; 7] = [
        LearnerKind::CoxMainTerms,
        LearnerKind::WeibullAft,
        LearnerKind::GammaAft,
        LearnerKind::ElasticnetCox,
        LearnerKind::RoystonParmar,
        LearnerKind::RandomSurvivalForest,
        LearnerKind::SurvivalNeuralNetwork,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LearnerKind::CoxMainTerms => "cox_main_terms",
            LearnerKind::WeibullAft => "weibull_aft",
            LearnerKind::GammaAft => "gamma_aft",
            LearnerKind::ElasticnetCox => "elasticnet_cox",
            LearnerKind::RoystonParmar => "royston_parmar",
            LearnerKind::RandomSurvivalForest => "random_survival_forest",
            LearnerKind::SurvivalNeuralNetwork => "survival_neural_network",
        }
    }

    /// Accepts the canonical name or a short alias (`cox`, `enet`, `weibull`, `gamma`, `rp`, `rsf`, `nn`).
    pub fn parse(name: &str) -> Result<Self> {
        let alias = match name {
            "cox" => Some(LearnerKind::CoxMainTerms),
            "enet" | "elasticnet" => Some(LearnerKind::ElasticnetCox),
            "weibull" => Some(LearnerKind::WeibullAft),
            "gamma" => Some(LearnerKind::GammaAft),
            "rp" => Some(LearnerKind::RoystonParmar),
            "rsf" => Some(LearnerKind::RandomSurvivalForest),
            "nn" => Some(LearnerKind::SurvivalNeuralNetwork),
            _ => None,
        };
        alias
            .into_iter()
            .chain(Self::ALL.into_iter().filter(|k| k.name() == name))
            .next()
            .ok_or_else(|| Error::InvalidArgument(format!("unknown learner kind `{name}`")))
    }

    pub fn default_hyperparameters(self) -> BTreeMap<String, f64> {
        let pairs: &[(&str, f64)] = match self {
            LearnerKind::CoxMainTerms | LearnerKind::WeibullAft | LearnerKind::GammaAft => &[],
            LearnerKind::ElasticnetCox => &[("alpha", 0.9), ("lambda", 0.003)],
            LearnerKind::RoystonParmar => &[("k", 3.0)],
            LearnerKind::RandomSurvivalForest => &[("ntree", 500.0), ("mtry", 3.0), ("nodesize", 20.0), ("nsplit", 10.0)],
            LearnerKind::SurvivalNeuralNetwork => &[
                ("n_nodes", 20.0),
                ("decay", 0.1),
                ("batch_size", 256.0),
                ("epochs", 1.0),
                ("learning_rate", 0.01),
                ("zero_output_init", 0.0),
            ],
        };
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    /// Hyperparameters that may carry a tuning grid.
    pub fn tunable(self) -> &'static [&'static str] {
        match self {
            LearnerKind::ElasticnetCox => &["lambda", "alpha"],
            LearnerKind::RandomSurvivalForest => &["mtry", "nodesize"],
            LearnerKind::SurvivalNeuralNetwork => &["n_nodes", "decay"],
            _ => &[],
        }
    }

    /// Regularization ordering used to break tuning ties: each entry is a key and
    /// whether larger values regularize more. Earlier keys take precedence.
    pub fn regularization_order(self) -> &'static [(&'static str, bool)] {
        match self {
            LearnerKind::ElasticnetCox => &[("lambda", true), ("alpha", true)],
            LearnerKind::RandomSurvivalForest => &[("nodesize", true), ("mtry", false)],
            LearnerKind::SurvivalNeuralNetwork => &[("decay", true), ("n_nodes", false)],
            _ => &[],
        }
    }

    /// Whether fitting consumes randomness.
    pub fn is_stochastic(self) -> bool {
        matches!(self, LearnerKind::RandomSurvivalForest | LearnerKind::SurvivalNeuralNetwork | LearnerKind::RoystonParmar)
    }
}

impl fmt::Display for LearnerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn check_value(kind: LearnerKind, key: &str, v: f64) -> Result<()> {
    let integer = v.fract() == 0.0;
    let ok = match key {
        "alpha" => (0.0..=1.0).contains(&v),
        "lambda" | "decay" => v >= 0.0 && v.is_finite(),
        "learning_rate" => v > 0.0 && v.is_finite(),
        "k" | "ntree" | "mtry" | "nodesize" | "n_nodes" | "batch_size" => integer && v >= 1.0 && v < 1e9,
        "nsplit" | "epochs" => integer && v >= 0.0 && v < 1e9,
        "zero_output_init" => v == 0.0 || v == 1.0,
        _ => return Err(Error::InvalidArgument(format!("`{key}` is not a hyperparameter of {kind}"))),
    };
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{kind}: `{key}` = {v} is out of range")))
    }
}

/// A candidate learner: kind, fixed hyperparameters and optional tuning grids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerSpec {
    pub kind: LearnerKind,
    #[serde(default)]
    pub hyperparameters: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub tuning_grid: BTreeMap<String, Vec<f64>>,
}

impl LearnerSpec {
    /// Spec with the default hyperparameters of `kind`.
    pub fn new(kind: LearnerKind) -> Self {
        Self { kind, hyperparameters: kind.default_hyperparameters(), tuning_grid: BTreeMap::new() }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.hyperparameters.insert(key.to_string(), value);
        self
    }

    pub fn with_grid(mut self, key: &str, values: Vec<f64>) -> Self {
        self.tuning_grid.insert(key.to_string(), values);
        self
    }

    /// Fill in defaults for keys the spec leaves out (e.g. from a partial config file).
    pub fn with_defaults(mut self) -> Self {
        for (k, v) in self.kind.default_hyperparameters() {
            self.hyperparameters.entry(k).or_insert(v);
        }
        self
    }

    pub fn get(&self, key: &str) -> f64 {
        self.hyperparameters
            .get(key)
            .copied()
            .or_else(|| self.kind.default_hyperparameters().get(key).copied())
            .unwrap_or(f64::NAN)
    }

    pub fn label(&self) -> String {
        self.kind.name().to_string()
    }

    pub fn validate(&self) -> Result<()> {
        let defaults = self.kind.default_hyperparameters();
        for (k, &v) in &self.hyperparameters {
            if !defaults.contains_key(k) {
                return Err(Error::InvalidArgument(format!("`{k}` is not a hyperparameter of {}", self.kind)));
            }
            check_value(self.kind, k, v)?;
        }
        for (k, values) in &self.tuning_grid {
            if !self.kind.tunable().contains(&k.as_str()) {
                return Err(Error::InvalidArgument(format!("{} does not tune `{k}`", self.kind)));
            }
            if values.is_empty() {
                return Err(Error::InvalidArgument(format!("{}: tuning grid for `{k}` is empty", self.kind)));
            }
            for &v in values {
                check_value(self.kind, k, v)?;
            }
        }
        Ok(())
    }

    /// Fit with the spec's own hyperparameters (no tuning).
    pub fn fit(&self, data: &SurvivalDataset, seed: u64) -> Result<FittedLearner> {
        self.validate()?;
        let h = |k: &str| self.get(k);
        let model = match self.kind {
            LearnerKind::CoxMainTerms => LearnerModel::ProportionalHazards(fit_cox(data)?),
            LearnerKind::ElasticnetCox => LearnerModel::ProportionalHazards(fit_elasticnet_cox(data, h("alpha"), h("lambda"))?),
            LearnerKind::WeibullAft => LearnerModel::WeibullAft(fit_weibull_aft(data)?),
            LearnerKind::GammaAft => LearnerModel::GammaAft(fit_gamma_aft(data)?),
            LearnerKind::RoystonParmar => LearnerModel::RoystonParmar(fit_royston_parmar(data, h("k") as usize, seed)?),
            LearnerKind::RandomSurvivalForest => {
                // mtry is capped at the number of available covariates (e.g. after screening)
                let cfg = ForestConfig {
                    ntree: h("ntree") as usize,
                    mtry: (h("mtry") as usize).min(data.p().max(1)),
                    nodesize: h("nodesize") as usize,
                    nsplit: h("nsplit") as usize,
                };
                LearnerModel::Forest(fit_random_survival_forest(data, &cfg, seed)?)
            }
            LearnerKind::SurvivalNeuralNetwork => {
                let cfg = NetworkConfig {
                    n_nodes: h("n_nodes") as usize,
                    decay: h("decay"),
                    batch_size: h("batch_size") as usize,
                    epochs: h("epochs") as usize,
                    learning_rate: h("learning_rate"),
                    zero_output_init: h("zero_output_init") == 1.0,
                };
                LearnerModel::Network(fit_survival_nn(data, &cfg, seed)?)
            }
        };
        Ok(FittedLearner {
            version: MODEL_VERSION,
            kind: self.kind,
            hyperparameters: self.hyperparameters.clone(),
            covariate_names: data.covariate_names().to_vec(),
            meta: TrainingMeta { n: data.n(), p: data.p(), n_events: data.n_events(), seed },
            model,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub n: usize,
    pub p: usize,
    pub n_events: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "parameters", rename_all = "snake_case")]
pub enum LearnerModel {
    ProportionalHazards(ProportionalHazardsFit),
    WeibullAft(WeibullAftFit),
    GammaAft(GammaAftFit),
    RoystonParmar(RoystonParmarFit),
    Forest(ForestFit),
    Network(NetworkFit),
}

/// A trained candidate learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedLearner {
    pub version: u32,
    pub kind: LearnerKind,
    pub hyperparameters: BTreeMap<String, f64>,
    pub covariate_names: Vec<String>,
    pub meta: TrainingMeta,
    pub model: LearnerModel,
}

impl FittedLearner {
    pub fn predict_survival(&self, x: &DMatrix<f64>, t: f64) -> Result<Vec<f64>> {
        check_columns(x, self.meta.p)?;
        if !(t >= 0.0) {
            return Err(Error::InvalidArgument(format!("prediction time must be nonnegative, got {t}")));
        }
        if t == 0.0 {
            return Ok(vec![1.0; x.nrows()]);
        }
        let s = match &self.model {
            LearnerModel::ProportionalHazards(m) => m.predict_survival(x, t),
            LearnerModel::WeibullAft(m) => m.predict_survival(x, t),
            LearnerModel::GammaAft(m) => m.predict_survival(x, t),
            LearnerModel::RoystonParmar(m) => m.predict_survival(x, t),
            LearnerModel::Forest(m) => m.predict_survival(x, t),
            LearnerModel::Network(m) => m.predict_survival(x, t),
        };
        Ok(s.into_iter().map(|v| v.clamp(0.0, 1.0)).collect())
    }

    /// Event risk `1 - S(t | x)`.
    pub fn predict_risk(&self, x: &DMatrix<f64>, t: f64) -> Result<Vec<f64>> {
        Ok(self.predict_survival(x, t)?.into_iter().map(|s| 1.0 - s).collect())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(s)?;
        if m.version != MODEL_VERSION {
            return Err(Error::Validation(format!("unsupported learner document version {}", m.version)));
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

/// Anything that predicts survival probabilities for covariate rows.
pub trait SurvivalPredictor: Send + Sync {
    fn predict_survival(&self, x: &DMatrix<f64>, t: f64) -> Result<Vec<f64>>;

    fn predict_risk(&self, x: &DMatrix<f64>, t: f64) -> Result<Vec<f64>> {
        Ok(self.predict_survival(x, t)?.into_iter().map(|s| 1.0 - s).collect())
    }
}

impl SurvivalPredictor for FittedLearner {
    fn predict_survival(&self, x: &DMatrix<f64>, t: f64) -> Result<Vec<f64>> {
        FittedLearner::predict_survival(self, x, t)
    }
}

/// Settings shared by every fit inside a cross-validation run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitContext {
    pub tau: f64,
    pub loss: LossKind,
    /// Folds for nested hyperparameter tuning.
    pub inner_folds: usize,
    pub weight_floor: f64,
}

/// A fit procedure usable inside cross-validation.
pub trait Learner: Send + Sync {
    fn label(&self) -> String;
    fn fit_predictor(&self, data: &SurvivalDataset, seed: u64, ctx: &FitContext) -> Result<Box<dyn SurvivalPredictor>>;
}

impl Learner for LearnerSpec {
    fn label(&self) -> String {
        LearnerSpec::label(self)
    }

    fn fit_predictor(&self, data: &SurvivalDataset, seed: u64, ctx: &FitContext) -> Result<Box<dyn SurvivalPredictor>> {
        Ok(Box::new(fit_with_tuning(self, data, seed, ctx)?))
    }
}

/// Tune (when the spec carries grids) and then fit on all of `data`.
pub fn fit_with_tuning(spec: &LearnerSpec, data: &SurvivalDataset, seed: u64, ctx: &FitContext) -> Result<FittedLearner> {
    if spec.tuning_grid.is_empty() {
        spec.fit(data, seed)
    } else {
        let tuned = tune_hyperparameters(spec, data, ctx, seed)?;
        tuned.fit(data, seed)
    }
}
