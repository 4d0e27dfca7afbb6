use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use pimc_cli::verify::{run_verify, VerifyOptions};
use pimc_cli::{run_estimate, run_sample, run_threshold, CliError, EstimateOptions, SampleOptions, Temperature};
use pimc_core::estimators::EstimatorConfig;
use pimc_core::heatbath::DEFAULT_RETRY_CAP;

#[derive(Parser)]
#[command(name = "pimc", version, about = "Worldline path-integral Monte Carlo for transverse-field Ising models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Report the inverse-temperature thresholds of a model.
    Threshold {
        #[arg(long)]
        model: PathBuf,
        /// Also report the thresholds as temperatures in kelvin (couplings in GHz).
        #[arg(long)]
        kelvin: bool,
    },
    /// Sample computational-basis measurements of the thermal state.
    Sample(SampleArgs),
    /// Estimate the partition function.
    EstimateZ(EstimateArgs),
    /// Run exact-oracle checks on a small model.
    Verify(VerifyArgs),
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct TemperatureArgs {
    /// Inverse temperature in the model's energy unit.
    #[arg(long)]
    beta: Option<f64>,
    /// Temperature in kelvin; couplings are read as GHz.
    #[arg(long)]
    temp_kelvin: Option<f64>,
    /// Temperature as an energy in GHz.
    #[arg(long)]
    temp_ghz: Option<f64>,
}

impl TemperatureArgs {
    fn resolve(&self) -> Temperature {
        match (self.beta, self.temp_kelvin, self.temp_ghz) {
            (Some(b), _, _) => Temperature::Beta(b),
            (_, Some(t), _) => Temperature::Kelvin(t),
            (_, _, Some(t)) => Temperature::Ghz(t),
            _ => unreachable!("clap enforces exactly one temperature flag"),
        }
    }
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    temperature: TemperatureArgs,
    /// RNG seed; drawn from the clock and reported when omitted.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = one per core).
    #[arg(long, default_value_t = 0)]
    workers: usize,
    #[arg(long, default_value_t = 0.01)]
    eps: f64,
}

#[derive(Args)]
struct SampleArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = DEFAULT_RETRY_CAP)]
    retry_cap: u64,
    /// Target probability that any update exceeds the jump budget.
    #[arg(long, default_value_t = 1e-3)]
    fail_prob: f64,
    /// Run this many steps per sample regardless of the threshold (heuristic).
    #[arg(long)]
    force_steps: Option<u64>,
    /// Sample CSV path; stdout when omitted (the report then goes to stderr).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    common: Common,
    /// Target relative error of the estimate.
    #[arg(long, default_value_t = 0.05)]
    target: f64,
    #[arg(long, default_value_t = 2000)]
    pilot_samples: usize,
    #[arg(long, default_value_t = DEFAULT_RETRY_CAP)]
    retry_cap: u64,
    #[arg(long, default_value_t = 1e-3)]
    fail_prob: f64,
    /// Use annealed ratios even for classical models.
    #[arg(long)]
    force_annealing: bool,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    common: Common,
    /// Trotter number for the discrete checks.
    #[arg(long, default_value_t = 3)]
    trotter: usize,
    #[arg(long, default_value_t = 200)]
    tv_instances: usize,
    #[arg(long, default_value_t = 20_000)]
    samples: usize,
    #[arg(long, default_value_t = 100_000)]
    updates: usize,
}

fn resolve_seed(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_nanos() as u64)
            .unwrap_or(0)
    })
}

fn run(cli: Cli) -> Result<(), CliError> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match cli.command {
        Command::Threshold { model, kelvin } => run_threshold(&model, kelvin, &mut out),
        Command::Sample(args) => {
            let opts = SampleOptions {
                model: args.common.model,
                temperature: args.common.temperature.resolve(),
                eps: args.common.eps,
                samples: args.samples,
                seed: resolve_seed(args.common.seed),
                workers: args.common.workers,
                retry_cap: args.retry_cap,
                fail_prob: args.fail_prob,
                force_steps: args.force_steps,
            };
            match args.out {
                Some(path) => {
                    // Write to memory first so a failed run leaves no partial file.
                    let mut csv = Vec::new();
                    run_sample(&opts, &mut out, &mut csv)?;
                    let mut file = BufWriter::new(File::create(path)?);
                    file.write_all(&csv)?;
                    file.flush()?;
                    Ok(())
                }
                None => run_sample(&opts, &mut io::stderr().lock(), &mut out),
            }
        }
        Command::EstimateZ(args) => {
            let opts = EstimateOptions {
                model: args.common.model,
                temperature: args.common.temperature.resolve(),
                estimator: EstimatorConfig {
                    target_rel_error: args.target,
                    eps: args.common.eps,
                    pilot_samples: args.pilot_samples,
                    seed: resolve_seed(args.common.seed),
                    workers: args.common.workers,
                    fail_prob: args.fail_prob,
                    retry_cap: args.retry_cap,
                    force_annealing: args.force_annealing,
                    ..EstimatorConfig::default()
                },
            };
            run_estimate(&opts, &mut out).map(|_| ())
        }
        Command::Verify(args) => {
            let opts = VerifyOptions {
                model: args.common.model,
                temperature: args.common.temperature.resolve(),
                trotter: args.trotter,
                tv_instances: args.tv_instances,
                samples: args.samples,
                updates: args.updates,
                eps: args.common.eps,
                seed: resolve_seed(args.common.seed),
                workers: args.common.workers,
            };
            run_verify(&opts, &mut out).map(|_| ())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
