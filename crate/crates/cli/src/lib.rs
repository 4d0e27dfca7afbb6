//! Subcommand implementations for the `pimc` binary.
//!
//! Every command writes a plain `key = value` report to a caller-supplied
//! writer, so the same code backs the binary and the test suites.

pub mod verify;

use std::io::{self, Write};
use std::path::{Path, PathBuf};

use pimc_core::chain::{mixing_plan, sample_mu, ChainConfig, ChainError, Steps};
use pimc_core::estimators::{estimate_partition, EstimateError, EstimatorConfig, PartitionEstimate};
use pimc_core::heatbath::{jump_budget, UpdateLimits, DEFAULT_RETRY_CAP};
use pimc_core::model::{beta_thresholds, coupling_stats, ghz_to_kelvin, kelvin_to_ghz, ModelError, Threshold, TimModel};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{0}")]
    InvalidInput(String),
    #[error("refusing to run: {0}")]
    AboveThreshold(ChainError),
    #[error("run aborted: {0}")]
    BudgetFailure(String),
    #[error(transparent)]
    Chain(ChainError),
    #[error(transparent)]
    Estimate(EstimateError),
    #[error("{0} verification check(s) failed")]
    ChecksFailed(usize),
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Model(_) | CliError::InvalidInput(_) | CliError::Estimate(EstimateError::InvalidTarget(_)) => 2,
            CliError::AboveThreshold(_) => 3,
            CliError::BudgetFailure(_) => 4,
            CliError::Chain(ChainError::InvalidEpsilon(_) | ChainError::InvalidBeta(_)) => 2,
            CliError::Estimate(EstimateError::InvalidBeta(_)) => 2,
            _ => 1,
        }
    }
}

impl From<ChainError> for CliError {
    fn from(e: ChainError) -> Self {
        match e {
            ChainError::AboveThreshold { .. } => CliError::AboveThreshold(e),
            other => CliError::Chain(other),
        }
    }
}

impl From<EstimateError> for CliError {
    fn from(e: EstimateError) -> Self {
        match e {
            EstimateError::Chain(c) => c.into(),
            EstimateError::Sampler(msg) => CliError::BudgetFailure(msg),
            other => CliError::Estimate(other),
        }
    }
}

/// Temperature as given on the command line. Units are never inferred.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Temperature {
    /// Inverse temperature in the model's energy unit (1/GHz).
    Beta(f64),
    Kelvin(f64),
    /// Temperature expressed as an energy in GHz.
    Ghz(f64),
}

impl Temperature {
    pub fn beta(self) -> Result<f64, CliError> {
        let beta = match self {
            Temperature::Beta(b) => b,
            Temperature::Kelvin(t) => 1.0 / kelvin_to_ghz(t),
            Temperature::Ghz(t) => 1.0 / t,
        };
        if beta > 0.0 && beta.is_finite() {
            Ok(beta)
        } else {
            Err(CliError::InvalidInput(format!("temperature {self:?} does not give a positive finite beta")))
        }
    }
}

impl std::fmt::Display for Temperature {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Temperature::Beta(b) => write!(f, "beta {b}"),
            Temperature::Kelvin(t) => write!(f, "{t} K"),
            Temperature::Ghz(t) => write!(f, "{t} GHz"),
        }
    }
}

fn load(path: &Path) -> Result<TimModel, CliError> {
    Ok(TimModel::load(path)?)
}

fn threshold_kelvin(threshold: Threshold) -> Result<f64, CliError> {
    // A bounded beta threshold maps to the lowest admissible temperature.
    Ok(match threshold {
        Threshold::Bounded(beta) => ghz_to_kelvin(1.0 / beta)?,
        Threshold::Unbounded => 0.0,
    })
}

pub fn run_threshold(model_path: &Path, kelvin: bool, out: &mut dyn Write) -> Result<(), CliError> {
    let model = load(model_path)?;
    let stats = coupling_stats(&model);
    let report = beta_thresholds(&model);
    writeln!(out, "# pimc threshold report")?;
    writeln!(out, "model = {}", model_path.display())?;
    writeln!(out, "n = {}", model.n())?;
    writeln!(out, "edges = {}", model.edges().len())?;
    writeln!(out, "max_coupling = {}", stats.max_coupling)?;
    writeln!(out, "max_degree = {}", stats.max_degree)?;
    writeln!(out, "beta_simple = {}", report.beta_simple)?;
    writeln!(out, "beta_log = {}", report.beta_log)?;
    writeln!(out, "beta_degree_weighted = {}", report.beta_degree_weighted)?;
    if kelvin {
        writeln!(out, "temperature_simple_kelvin = {}", threshold_kelvin(report.beta_simple)?)?;
        writeln!(out, "temperature_log_kelvin = {}", threshold_kelvin(report.beta_log)?)?;
        writeln!(
            out,
            "temperature_degree_weighted_kelvin = {}",
            threshold_kelvin(report.beta_degree_weighted)?
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct SampleOptions {
    pub model: PathBuf,
    pub temperature: Temperature,
    pub eps: f64,
    pub samples: usize,
    pub seed: u64,
    pub workers: usize,
    pub retry_cap: u64,
    pub fail_prob: f64,
    /// Run exactly this many steps per sample, bypassing the threshold check.
    pub force_steps: Option<u64>,
}

impl SampleOptions {
    pub fn new(model: impl Into<PathBuf>, temperature: Temperature, samples: usize, seed: u64) -> Self {
        Self {
            model: model.into(),
            temperature,
            eps: 0.01,
            samples,
            seed,
            workers: 0,
            retry_cap: DEFAULT_RETRY_CAP,
            fail_prob: 1e-3,
            force_steps: None,
        }
    }
}

fn check_probability(name: &str, value: f64) -> Result<(), CliError> {
    if value > 0.0 && value < 1.0 {
        Ok(())
    } else {
        Err(CliError::InvalidInput(format!("{name} must lie in (0, 1), got {value}")))
    }
}

/// Draw samples of the time-zero slice. Samples go to `csv`, the run report to `report`.
pub fn run_sample(opts: &SampleOptions, report: &mut dyn Write, csv: &mut dyn Write) -> Result<(), CliError> {
    let model = load(&opts.model)?;
    let beta = opts.temperature.beta()?;
    check_probability("eps", opts.eps)?;
    check_probability("fail-prob", opts.fail_prob)?;
    if opts.samples == 0 {
        return Err(CliError::InvalidInput("samples must be positive".into()));
    }

    writeln!(report, "# pimc sample report")?;
    writeln!(report, "seed = {}", opts.seed)?;
    writeln!(report, "model = {}", opts.model.display())?;
    writeln!(report, "n = {}", model.n())?;
    writeln!(report, "temperature = {}", opts.temperature)?;
    writeln!(report, "beta = {beta}")?;
    writeln!(report, "eps = {}", opts.eps)?;
    writeln!(report, "samples_requested = {}", opts.samples)?;
    writeln!(report, "workers = {}", opts.workers)?;
    writeln!(report, "retry_cap = {}", opts.retry_cap)?;
    writeln!(report, "fail_prob = {}", opts.fail_prob)?;

    let steps = match opts.force_steps {
        Some(t) => {
            writeln!(report, "mode = forced-steps (heuristic, no mixing guarantee)")?;
            if let Ok(plan) = mixing_plan(&model, beta, opts.eps) {
                writeln!(report, "alpha = {}", plan.alpha)?;
            }
            Steps::Forced(t)
        }
        None => {
            let plan = mixing_plan(&model, beta, opts.eps)?;
            writeln!(report, "mode = mixing-plan")?;
            writeln!(report, "alpha = {}", plan.alpha)?;
            Steps::Plan(plan)
        }
    };
    writeln!(report, "t_mix = {}", steps.count())?;

    let total_updates = (opts.samples as u64).saturating_mul(steps.count()).max(1);
    let budget = jump_budget(&model, beta, opts.fail_prob, total_updates)
        .map_err(|e| CliError::InvalidInput(e.to_string()))?;
    writeln!(report, "jump_budget = {}", budget.k)?;
    writeln!(report, "jump_rate_bound = {}", budget.rate)?;

    let config = ChainConfig {
        steps,
        num_samples: opts.samples,
        seed: opts.seed,
        workers: opts.workers,
        limits: UpdateLimits::from_budget(&budget).with_retry_cap(opts.retry_cap),
    };
    let run = sample_mu(&model, beta, &config)?;
    let r = &run.report;
    writeln!(report, "samples = {}", r.samples)?;
    writeln!(report, "total_updates = {}", r.total_updates)?;
    writeln!(report, "total_jumps = {}", r.total_jumps)?;
    writeln!(report, "mean_jumps_per_update = {}", r.mean_jumps_per_update())?;
    writeln!(report, "max_update_jumps = {}", r.max_update_jumps)?;
    writeln!(report, "failures = {}", r.failures)?;
    writeln!(report, "seconds_per_update = {:e}", r.seconds_per_update)?;
    writeln!(report, "valid = {}", r.is_valid())?;
    if let Some((sample, err)) = &r.first_failure {
        return Err(CliError::BudgetFailure(format!("sample {sample}: {err}")));
    }

    write_samples(csv, model.n(), &run.values)?;
    Ok(())
}

/// Header `z0,…,z{n-1}`, then one row of ±1 per sample.
pub fn write_samples(out: &mut dyn Write, n: usize, samples: &[Vec<i8>]) -> io::Result<()> {
    let header: Vec<String> = (0..n).map(|k| format!("z{k}")).collect();
    writeln!(out, "{}", header.join(","))?;
    for s in samples {
        let row: Vec<&str> = s.iter().map(|&z| if z > 0 { "1" } else { "-1" }).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct EstimateOptions {
    pub model: PathBuf,
    pub temperature: Temperature,
    pub estimator: EstimatorConfig,
}

pub fn run_estimate(opts: &EstimateOptions, out: &mut dyn Write) -> Result<PartitionEstimate, CliError> {
    let model = load(&opts.model)?;
    let beta = opts.temperature.beta()?;
    let cfg = &opts.estimator;
    check_probability("eps", cfg.eps)?;
    check_probability("fail-prob", cfg.fail_prob)?;
    writeln!(out, "# pimc partition estimate")?;
    writeln!(out, "seed = {}", cfg.seed)?;
    writeln!(out, "model = {}", opts.model.display())?;
    writeln!(out, "n = {}", model.n())?;
    writeln!(out, "temperature = {}", opts.temperature)?;
    writeln!(out, "beta = {beta}")?;
    writeln!(out, "target_rel_error = {}", cfg.target_rel_error)?;
    writeln!(out, "eps = {}", cfg.eps)?;
    writeln!(out, "pilot_samples = {}", cfg.pilot_samples)?;
    writeln!(out, "max_stage_rel_variance = {}", cfg.max_stage_rel_variance)?;
    writeln!(out, "workers = {}", cfg.workers)?;
    writeln!(out, "retry_cap = {}", cfg.retry_cap)?;
    writeln!(out, "fail_prob = {}", cfg.fail_prob)?;
    writeln!(out, "force_annealing = {}", cfg.force_annealing)?;

    let est = estimate_partition(&model, beta, cfg)?;
    writeln!(out, "method = {}", est.method)?;
    if let Some(a) = &est.anchor {
        writeln!(out, "anchor_beta = {}", a.beta)?;
        writeln!(out, "anchor_value = {}", a.value)?;
        writeln!(out, "anchor_remainder = {:e}", a.remainder)?;
    }
    writeln!(out, "stages = {}", est.stages.len())?;
    for (i, s) in est.stages.iter().enumerate() {
        writeln!(
            out,
            "stage.{i} = beta {} -> {} ratio {} stderr {:e} samples {} rel_variance {:e} t_mix {}",
            s.beta_from, s.beta_to, s.ratio, s.stderr, s.samples, s.rel_variance, s.t_mix
        )?;
    }
    writeln!(out, "total_updates = {}", est.total_updates)?;
    writeln!(out, "total_jumps = {}", est.total_jumps)?;
    writeln!(out, "valid = {}", est.is_valid())?;
    if let Some(msg) = &est.failure {
        writeln!(out, "z = 0")?;
        return Err(CliError::BudgetFailure(msg.clone()));
    }
    let (lo, hi) = est.ci();
    writeln!(out, "log_z = {}", est.log_z)?;
    writeln!(out, "z = {}", est.z())?;
    writeln!(out, "ci95_low = {lo}")?;
    writeln!(out, "ci95_high = {hi}")?;
    writeln!(out, "log_ci_half_width = {}", est.rel_half_width)?;
    Ok(est)
}

/// Value of `key` in a `key = value` report.
pub fn report_value<'a>(report: &'a str, key: &str) -> Option<&'a str> {
    report.lines().find_map(|line| {
        let (k, v) = line.split_once(" = ")?;
        (k.trim() == key).then_some(v.trim())
    })
}
