//! Run configuration: command-line flags over a JSON config file over defaults.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use survsl_core::dataset::{CsvSchema, DriftSpec};
use survsl_core::learners::{LearnerKind, LearnerSpec};
use survsl_core::losses::LossKind;
use survsl_core::metrics::ValidationScheme;
use survsl_core::superlearner::{ScreeningConfig, ScreeningMode};

use crate::CommonArgs;

pub const DESK_N: usize = 2000;
pub const DESK_BOOT: usize = 200;
pub const PAPER_N: usize = 2169;
pub const PAPER_BOOT: usize = 2000;
pub const DEFAULT_HORIZON: f64 = 7.0;
pub const DEFAULT_FOLDS: usize = 10;
pub const DEFAULT_DRIFT_THRESHOLD: f64 = 0.15;

/// Drift overrides on top of a preset (`kidney_like` or `none`).
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftConfig {
    pub preset: Option<String>,
    pub covariate_mean_shifts: Option<Vec<f64>>,
    pub event_rate_multiplier: Option<f64>,
    pub censoring_rate_multiplier: Option<f64>,
}

/// Contents of a `--config` JSON file. Every field is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub horizon: Option<f64>,
    pub loss: Option<String>,
    pub folds: Option<usize>,
    pub inner_folds: Option<usize>,
    pub boot: Option<usize>,
    pub screen: Option<bool>,
    pub screening: Option<ScreeningConfig>,
    pub learners: Option<Vec<LearnerSpec>>,
    pub schema: Option<CsvSchema>,
    pub n: Option<usize>,
    pub drift: Option<DriftConfig>,
    pub workers: Option<usize>,
    pub paper_scale: Option<bool>,
    pub validation_scheme: Option<ValidationScheme>,
    pub weight_floor: Option<f64>,
    pub admin_censor: Option<bool>,
    pub censoring: Option<String>,
    pub drift_threshold: Option<f64>,
    pub reciprocal_mean_calibration: Option<bool>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// Fully resolved settings.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub horizon: Option<f64>,
    pub loss: LossKind,
    pub folds: usize,
    pub inner_folds: usize,
    pub boot: usize,
    pub screening: Option<ScreeningConfig>,
    pub learners: Vec<LearnerSpec>,
    pub schema: CsvSchema,
    pub n: usize,
    pub drift: DriftSpec,
    pub workers: Option<usize>,
    pub validation_scheme: ValidationScheme,
    pub weight_floor: f64,
    pub admin_censor: bool,
    pub censoring_from_development: bool,
    pub drift_threshold: f64,
    pub reciprocal_mean_calibration: bool,
}

/// The desk-scale candidate pool: all seven learners, with the forest trimmed to 100 trees.
pub fn default_pool(paper_scale: bool) -> Vec<LearnerSpec> {
    LearnerKind::ALL
        .into_iter()
        .map(|k| {
            let s = LearnerSpec::new(k);
            if k == LearnerKind::RandomSurvivalForest && !paper_scale {
                s.with("ntree", 100.0)
            } else {
                s
            }
        })
        .collect()
}

fn drift_spec(cfg: Option<&DriftConfig>, no_drift: bool, erm: Option<f64>, seed: u64) -> Result<DriftSpec> {
    let preset = if no_drift { Some("none") } else { cfg.and_then(|c| c.preset.as_deref()) };
    let mut spec = match preset.unwrap_or("kidney_like") {
        "kidney_like" => DriftSpec::kidney_like(seed),
        "none" => DriftSpec::none(seed),
        other => bail!("unknown drift preset `{other}` (expected kidney_like or none)"),
    };
    if !no_drift {
        if let Some(c) = cfg {
            if let Some(s) = &c.covariate_mean_shifts {
                spec.covariate_mean_shifts = s.clone();
            }
            if let Some(m) = c.event_rate_multiplier {
                spec.event_rate_multiplier = m;
            }
            if let Some(m) = c.censoring_rate_multiplier {
                spec.censoring_rate_multiplier = m;
            }
        }
        if let Some(m) = erm {
            spec.event_rate_multiplier = m;
        }
    }
    Ok(spec)
}

impl RunConfig {
    pub fn resolve(args: &CommonArgs) -> Result<Self> {
        let file = match &args.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        let paper_scale = args.paper_scale || file.paper_scale.unwrap_or(false);
        let seed = args.seed.or(file.seed).unwrap_or(1);
        let loss = match args.loss.as_deref().or(file.loss.as_deref()) {
            Some(s) => LossKind::parse(s)?,
            None => LossKind::IpcwBrier,
        };
        let horizon = args.horizon.or(file.horizon);
        if let Some(t) = horizon {
            if !(t > 0.0) {
                bail!("horizon must be positive, got {t}");
            }
        }
        let learners = match (&args.learners, &file.learners) {
            (Some(list), _) => list
                .split(',')
                .map(|name| Ok(LearnerSpec::new(LearnerKind::parse(name.trim())?)))
                .collect::<Result<Vec<_>>>()?,
            (None, Some(specs)) => specs.iter().cloned().map(LearnerSpec::with_defaults).collect(),
            (None, None) => default_pool(paper_scale),
        };
        for s in &learners {
            s.validate()?;
        }
        let screen = args.screen || file.screen.unwrap_or(false);
        let screening = if screen {
            let mut sc = file.screening.unwrap_or_default();
            if args.screen_within_folds {
                sc.mode = ScreeningMode::WithinFolds;
            }
            Some(sc)
        } else {
            None
        };
        let censoring = args.censoring.as_deref().or(file.censoring.as_deref()).unwrap_or("refit");
        let censoring_from_development = match censoring {
            "refit" => false,
            "development" => true,
            other => bail!("unknown censoring source `{other}` (expected refit or development)"),
        };
        let folds = args.folds.or(file.folds).unwrap_or(DEFAULT_FOLDS);
        Ok(Self {
            seed,
            out: args.out.clone().or(file.out).unwrap_or_else(|| PathBuf::from(".")),
            horizon,
            loss,
            folds,
            inner_folds: file.inner_folds.unwrap_or(folds),
            boot: args.boot.or(file.boot).unwrap_or(if paper_scale { PAPER_BOOT } else { DESK_BOOT }),
            screening,
            learners,
            schema: file.schema.unwrap_or_default(),
            n: args.n.or(file.n).unwrap_or(if paper_scale { PAPER_N } else { DESK_N }),
            drift: drift_spec(file.drift.as_ref(), args.no_drift, args.event_rate_multiplier, seed)?,
            workers: args.workers.or(file.workers),
            validation_scheme: args
                .validation_scheme
                .map(Into::into)
                .or(file.validation_scheme)
                .unwrap_or(if paper_scale { ValidationScheme::RefitFull } else { ValidationScheme::RefitCandidates }),
            weight_floor: args.weight_floor.or(file.weight_floor).unwrap_or(survsl_core::censoring::DEFAULT_WEIGHT_FLOOR),
            admin_censor: args.admin_censor || file.admin_censor.unwrap_or(false),
            censoring_from_development,
            drift_threshold: file.drift_threshold.unwrap_or(DEFAULT_DRIFT_THRESHOLD),
            reciprocal_mean_calibration: args.reciprocal_mean_calibration || file.reciprocal_mean_calibration.unwrap_or(false),
        })
    }
}
