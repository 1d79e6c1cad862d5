//! `survsl`: simulate cohorts, fit and persist super learners, validate them
//! temporally and render metric tables.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use survsl_core::dataset::{self, DataGeneratingModel, Era, SurvivalDataset};
use survsl_core::metrics::{self, BootstrapConfig, CensoringSource, MetricOptions, MetricReport, ValidationScheme};
use survsl_core::rng::child_seed;
use survsl_core::superlearner::{fit_super_learner, SuperLearnerConfig, SuperLearnerModel};

use config::{RunConfig, DEFAULT_HORIZON};

#[derive(Parser, Debug)]
#[command(name = "survsl", version, about = "Survival super learner with censoring-weighted validation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a development cohort and a drifted later cohort.
    Simulate(SimulateArgs),
    /// Fit a super learner and report internal validation metrics.
    Fit(FitArgs),
    /// Evaluate a frozen model on a new cohort.
    Validate(ValidateArgs),
    /// Render metric reports side by side as a markdown table.
    Report(ReportArgs),
}

#[derive(Copy, Clone, Debug, ValueEnum)]
pub enum SchemeArg {
    ResampleEvaluation,
    RefitFull,
    RefitCandidates,
}

impl From<SchemeArg> for ValidationScheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::ResampleEvaluation => ValidationScheme::ResampleEvaluation,
            SchemeArg::RefitFull => ValidationScheme::RefitFull,
            SchemeArg::RefitCandidates => ValidationScheme::RefitCandidates,
        }
    }
}

/// Flags shared by every command. Unset flags fall back to the config file, then to defaults.
#[derive(Args, Debug, Clone, Default)]
pub struct CommonArgs {
    /// JSON config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Prediction horizon.
    #[arg(long, global = true)]
    pub horizon: Option<f64>,
    /// Loss used to pick weights and hyperparameters: brier, nbll or auroct.
    #[arg(long, global = true)]
    pub loss: Option<String>,
    #[arg(long, global = true)]
    pub folds: Option<usize>,
    /// Bootstrap iterations.
    #[arg(long, global = true)]
    pub boot: Option<usize>,
    /// Screen covariates with an elastic-net Cox fit before fitting the pool.
    #[arg(long, global = true)]
    pub screen: bool,
    /// Repeat screening inside every training fold.
    #[arg(long, global = true)]
    pub screen_within_folds: bool,
    /// Paper-scale defaults (2000 bootstrap iterations, n = 2169, full refits).
    #[arg(long, global = true)]
    pub paper_scale: bool,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Comma-separated learner kinds, each with default hyperparameters.
    #[arg(long, global = true)]
    pub learners: Option<String>,
    #[arg(long, global = true, value_enum)]
    pub validation_scheme: Option<SchemeArg>,
    #[arg(long, global = true)]
    pub weight_floor: Option<f64>,
    /// Treat follow-up beyond the horizon as censored at the horizon.
    #[arg(long, global = true)]
    pub admin_censor: bool,
    /// Censoring model for metrics: refit (on the evaluated cohort) or development.
    #[arg(long, global = true)]
    pub censoring: Option<String>,
    /// Report mean calibration as expected/observed.
    #[arg(long, global = true)]
    pub reciprocal_mean_calibration: bool,
    /// Cohort size for `simulate`.
    #[arg(long, global = true)]
    pub n: Option<usize>,
    /// Simulate without drift.
    #[arg(long, global = true)]
    pub no_drift: bool,
    #[arg(long, global = true)]
    pub event_rate_multiplier: Option<f64>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Training CSV.
    #[arg(long, alias = "data")]
    train: PathBuf,
    /// JSON column mapping ({"time": ..., "event": ..., "covariates": [...]}).
    #[arg(long)]
    schema: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Fitted model JSON.
    #[arg(long)]
    model: PathBuf,
    /// Validation CSV.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Development report to compare against (default: report.json next to the model).
    #[arg(long)]
    dev_report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Report JSON files.
    #[arg(required = true)]
    reports: Vec<PathBuf>,
    /// Column names, comma-separated (default: file stems).
    #[arg(long)]
    names: Option<String>,
}

fn prepare_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
    let probe = dir.join(".survsl_write_test");
    fs::write(&probe, b"").with_context(|| format!("output directory {} is not writable", dir.display()))?;
    let _ = fs::remove_file(probe);
    Ok(())
}

fn init_workers(workers: Option<usize>) -> Result<()> {
    if let Some(w) = workers {
        if w == 0 {
            bail!("--workers must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(w).build_global().context("configuring worker pool")?;
    }
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

fn load_cohort(path: &Path, schema_path: Option<&Path>, rc: &RunConfig) -> Result<SurvivalDataset> {
    if !path.exists() {
        bail!(survsl_core::Error::Validation(format!("input file {} does not exist", path.display())));
    }
    let schema = match schema_path {
        Some(p) => dataset::CsvSchema::from_json_file(p)?,
        None => rc.schema.clone(),
    };
    let loaded = dataset::load_csv(path, &schema)?;
    if loaded.dropped > 0 {
        log::warn!("{}: dropped {} rows with missing values", path.display(), loaded.dropped);
    }
    Ok(loaded.data)
}

fn metric_options(rc: &RunConfig, development: Option<&SuperLearnerModel>) -> Result<MetricOptions> {
    let censoring = if rc.censoring_from_development {
        match development.and_then(|m| m.development_censoring.clone()) {
            Some(c) => CensoringSource::Fixed(c),
            None => bail!(survsl_core::Error::Validation("model has no stored development censoring model".into())),
        }
    } else {
        CensoringSource::Refit
    };
    Ok(MetricOptions {
        weight_floor: rc.weight_floor,
        reciprocal_mean_calibration: rc.reciprocal_mean_calibration,
        censoring,
        ..Default::default()
    })
}

// ---------------------------------------------------------------- simulate

#[derive(Serialize)]
struct CovariateComparison {
    name: String,
    development_mean: f64,
    shifted_mean: f64,
    z: f64,
}

#[derive(Serialize)]
struct SimulationSummary {
    seed: u64,
    n: usize,
    horizon: f64,
    drift: dataset::DriftSpec,
    development_events: usize,
    shifted_events: usize,
    development_observed_risk: f64,
    shifted_observed_risk: f64,
    observed_risk_z: f64,
    covariates: Vec<CovariateComparison>,
    /// `no-drift` when every two-sample z statistic is below the threshold, else `drift`.
    flag: String,
    z_threshold: f64,
}

/// Two-sided 0.1% critical value; with ~10 comparisons a false alarm is rare.
const NO_DRIFT_Z: f64 = 3.29;

fn km_risk_and_se(d: &SurvivalDataset, tau: f64) -> (f64, f64) {
    let km = survsl_core::censoring::kaplan_meier(d.times(), d.events());
    let s = km.eval(tau);
    // Greenwood variance.
    let mut order: Vec<usize> = (0..d.n()).collect();
    order.sort_by(|&a, &b| d.times()[a].total_cmp(&d.times()[b]));
    let mut var = 0.0;
    let mut at_risk = d.n() as f64;
    let mut i = 0;
    while i < order.len() {
        let t = d.times()[order[i]];
        let mut deaths = 0.0;
        let mut leaving = 0.0;
        while i < order.len() && d.times()[order[i]] == t {
            if d.events()[order[i]] {
                deaths += 1.0;
            }
            leaving += 1.0;
            i += 1;
        }
        if t <= tau && deaths > 0.0 && at_risk > deaths {
            var += deaths / (at_risk * (at_risk - deaths));
        }
        at_risk -= leaving;
    }
    (1.0 - s, s * var.sqrt())
}

fn cmd_simulate(rc: &RunConfig) -> Result<()> {
    prepare_out(&rc.out)?;
    if rc.n == 0 {
        bail!(survsl_core::Error::InvalidArgument("--n must be positive".into()));
    }
    let model = DataGeneratingModel::kidney_like();
    let tau = rc.horizon.unwrap_or(model.horizon);
    let model = DataGeneratingModel { horizon: tau, ..model };
    let dev = dataset::generate_cohort(rc.n, Era::Development, &rc.drift, &model)?;
    let shifted = dataset::generate_cohort(rc.n, Era::Shifted, &rc.drift, &model)?;
    dev.data.write_csv(rc.out.join("development.csv"))?;
    shifted.data.write_csv(rc.out.join("shifted.csv"))?;
    let mut sidecar = String::from("cohort,row,true_risk\n");
    for (name, c) in [("development", &dev), ("shifted", &shifted)] {
        for (i, r) in c.true_risk.iter().enumerate() {
            sidecar.push_str(&format!("{name},{i},{r}\n"));
        }
    }
    fs::write(rc.out.join("true_risk.csv"), sidecar)?;

    let ds = dataset::covariate_summary(&dev.data);
    let ss = dataset::covariate_summary(&shifted.data);
    let n = rc.n as f64;
    let covariates: Vec<CovariateComparison> = ds
        .iter()
        .map(|(name, &(m1, s1))| {
            let (m2, s2) = ss[name];
            let se = ((s1 * s1 + s2 * s2) / n).sqrt();
            let z = if se > 0.0 { (m2 - m1) / se } else if m1 == m2 { 0.0 } else { f64::INFINITY };
            CovariateComparison { name: name.clone(), development_mean: m1, shifted_mean: m2, z }
        })
        .collect();
    let (r1, se1) = km_risk_and_se(&dev.data, tau);
    let (r2, se2) = km_risk_and_se(&shifted.data, tau);
    let se = (se1 * se1 + se2 * se2).sqrt();
    let risk_z = if se > 0.0 { (r2 - r1) / se } else { 0.0 };
    let drift = covariates.iter().any(|c| c.z.abs() > NO_DRIFT_Z) || risk_z.abs() > NO_DRIFT_Z;
    let summary = SimulationSummary {
        seed: rc.seed,
        n: rc.n,
        horizon: tau,
        drift: rc.drift.clone(),
        development_events: dev.data.n_events(),
        shifted_events: shifted.data.n_events(),
        development_observed_risk: r1,
        shifted_observed_risk: r2,
        observed_risk_z: risk_z,
        covariates,
        flag: if drift { "drift" } else { "no-drift" }.into(),
        z_threshold: NO_DRIFT_Z,
    };
    write_json(&rc.out.join("simulation_summary.json"), &summary)?;
    println!("{}", serde_json::json!({ "development": rc.n, "shifted": rc.n, "flag": summary.flag }));
    Ok(())
}

// ---------------------------------------------------------------- fit

fn sl_config(rc: &RunConfig, tau: f64) -> SuperLearnerConfig {
    SuperLearnerConfig {
        loss: rc.loss,
        tau,
        k_folds: rc.folds,
        inner_folds: rc.inner_folds,
        seed: rc.seed,
        weight_floor: rc.weight_floor,
        screening: rc.screening,
    }
}

fn cmd_fit(rc: &RunConfig, args: &FitArgs) -> Result<()> {
    let mut data = load_cohort(&args.train, args.schema.as_deref(), rc)?;
    let tau = rc.horizon.unwrap_or(DEFAULT_HORIZON);
    if rc.admin_censor {
        data = data.administratively_censor(tau);
    }
    prepare_out(&rc.out)?;
    let cfg = sl_config(rc, tau);
    let model = fit_super_learner(&rc.learners, &data, &cfg)?;
    for w in &model.cv_report.warnings {
        log::warn!("{}: {}", w.learner, w.message);
    }
    model.save(rc.out.join("model.json"))?;

    let opts = metric_options(rc, Some(&model))?;
    let boot = BootstrapConfig::new(rc.boot, child_seed(rc.seed, 0x626f6f74));
    let specs = rc.learners.clone();
    let report = metrics::internal_validate(&model, &data, &opts, &boot, rc.validation_scheme, |resample, seed| {
        fit_super_learner(&specs, resample, &SuperLearnerConfig { seed, ..cfg.clone() })
    })?;
    report.save(rc.out.join("report.json"))?;
    report.write_curve_csv(rc.out.join("calibration_curve.csv"))?;
    let weights: serde_json::Map<String, serde_json::Value> =
        model.labels().into_iter().zip(&model.weights).map(|(l, &w)| (l, w.into())).collect();
    println!("{}", serde_json::json!({ "weights": weights, "tauroc": report.tauroc.point, "brier": report.brier.point }));
    Ok(())
}

// ---------------------------------------------------------------- validate

fn cmd_validate(rc: &RunConfig, args: &ValidateArgs) -> Result<()> {
    if !args.model.exists() {
        bail!(survsl_core::Error::Validation(format!("model file {} does not exist", args.model.display())));
    }
    let model = SuperLearnerModel::load(&args.model)?;
    let tau = rc.horizon.unwrap_or(model.horizon);
    let mut data = load_cohort(&args.data, args.schema.as_deref(), rc)?;
    if rc.admin_censor {
        data = data.administratively_censor(tau);
    }
    prepare_out(&rc.out)?;
    let opts = metric_options(rc, Some(&model))?;
    let boot = BootstrapConfig::new(rc.boot, child_seed(rc.seed, 0x76616c));
    let report = metrics::temporal_validate(&model, &data, tau, &opts, &boot)?;
    report.save(rc.out.join("report.json"))?;
    report.write_curve_csv(rc.out.join("calibration_curve.csv"))?;

    let dev_path = args
        .dev_report
        .clone()
        .unwrap_or_else(|| args.model.parent().unwrap_or(Path::new(".")).join("report.json"));
    let mut flags = None;
    if dev_path.exists() && dev_path != rc.out.join("report.json") {
        let dev = MetricReport::load(&dev_path)?;
        fs::write(rc.out.join("drift_summary.md"), metrics::drift_summary_markdown(&dev, &report, rc.drift_threshold))?;
        flags = Some(metrics::drift_flags(&dev, &report, rc.drift_threshold));
    } else {
        log::warn!("no development report found at {}; drift summary skipped", dev_path.display());
    }
    println!(
        "{}",
        serde_json::json!({
            "tauroc": report.tauroc.point,
            "mean_calibration": report.mean_calibration.point,
            "brier": report.brier.point,
            "drift": flags,
        })
    );
    Ok(())
}

// ---------------------------------------------------------------- report

fn cmd_report(rc: &RunConfig, args: &ReportArgs) -> Result<()> {
    let names: Vec<String> = match &args.names {
        Some(s) => s.split(',').map(|x| x.trim().to_string()).collect(),
        None => args
            .reports
            .iter()
            .map(|p| {
                let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                match p.parent().and_then(|d| d.file_name()) {
                    Some(dir) if stem == "report" => dir.to_string_lossy().into_owned(),
                    _ => stem,
                }
            })
            .collect(),
    };
    if names.len() != args.reports.len() {
        bail!(survsl_core::Error::InvalidArgument(format!(
            "{} names for {} reports",
            names.len(),
            args.reports.len()
        )));
    }
    let reports = args
        .reports
        .iter()
        .zip(names)
        .map(|(p, name)| {
            MetricReport::load(p)
                .map(|r| (name, r))
                .map_err(|e| anyhow::Error::new(e).context(format!("malformed report {}", p.display())))
        })
        .collect::<Result<Vec<_>>>()?;
    let table = metrics::render_table(&reports);
    if args.common.out.is_some() || rc.out != Path::new(".") {
        prepare_out(&rc.out)?;
        fs::write(rc.out.join("report.md"), &table)?;
    }
    print!("{table}");
    Ok(())
}

// ---------------------------------------------------------------- errors

#[derive(Serialize)]
struct ErrorPayload {
    kind: String,
    message: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    context: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    missing: Vec<String>,
    exit_code: u8,
}

fn classify(err: &anyhow::Error) -> ErrorPayload {
    let core = err.chain().find_map(|e| e.downcast_ref::<survsl_core::Error>());
    let (kind, message, exit_code, missing) = match core {
        Some(e) => {
            let missing = match e {
                survsl_core::Error::MissingCovariates(m) => m.clone(),
                _ => Vec::new(),
            };
            (e.kind().to_string(), e.to_string(), if e.is_numerical() { 2 } else { 1 }, missing)
        }
        None => ("usage".to_string(), err.root_cause().to_string(), 1, Vec::new()),
    };
    let context: Vec<String> = err.chain().map(|e| e.to_string()).filter(|s| *s != message).collect();
    ErrorPayload { kind, message, context, missing, exit_code }
}

fn emit_error(payload: &ErrorPayload) -> ExitCode {
    let body = serde_json::json!({ "error": payload });
    eprintln!("{body}");
    ExitCode::from(payload.exit_code)
}

fn run(cli: Cli) -> Result<()> {
    let common = match &cli.command {
        Command::Simulate(a) => &a.common,
        Command::Fit(a) => &a.common,
        Command::Validate(a) => &a.common,
        Command::Report(a) => &a.common,
    };
    let rc = RunConfig::resolve(common)?;
    init_workers(rc.workers)?;
    match &cli.command {
        Command::Simulate(_) => cmd_simulate(&rc),
        Command::Fit(a) => cmd_fit(&rc, a),
        Command::Validate(a) => cmd_validate(&rc, a),
        Command::Report(a) => cmd_report(&rc, a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            return emit_error(&ErrorPayload {
                kind: "usage".into(),
                message: e.to_string().trim().to_string(),
                context: Vec::new(),
                missing: Vec::new(),
                exit_code: 1,
            })
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => emit_error(&classify(&e)),
    }
}
