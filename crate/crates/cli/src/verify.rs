//! Oracle checks behind `pimc verify`.

use std::io::Write;
use std::path::PathBuf;

use pimc_core::chain::{empirical_distribution, mixing_plan, multinomial_noise_floor, sample_mu, substream, ChainConfig, Steps};
use pimc_core::estimators::{sample_mean, Estimate};
use pimc_core::heatbath::{HeatBath, SamplerError, UpdateLimits};
use pimc_core::model::{beta_thresholds, TimModel};
use pimc_core::trotter::{
    conditional_tv, exact_thermal, heat_bath_transition_matrix, stationarity_residual, total_variation,
    trotter_partition_transfer, DiscreteConfig, OracleError, TvCheck,
};
use pimc_core::worldline::PimcState;
use rand::Rng;

use crate::{CliError, Temperature};

/// `(b, Γ, β)` points for the single-qubit checks.
pub const SINGLE_QUBIT_GRID: [(f64, f64, f64); 4] = [(1.0, 1.0, 0.5), (0.0, 1.0, 1.0), (0.5, 2.0, 0.3), (-1.0, 0.5, 1.0)];

pub const TROTTER_NUMBERS: [usize; 5] = [4, 8, 16, 32, 64];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    Skip,
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skip => "SKIP",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub status: Status,
    pub value: String,
    pub limit: String,
    pub note: String,
}

impl Check {
    fn new(name: impl Into<String>, pass: bool, value: impl ToString, limit: impl ToString) -> Self {
        Self {
            name: name.into(),
            status: if pass { Status::Pass } else { Status::Fail },
            value: value.to_string(),
            limit: limit.to_string(),
            note: String::new(),
        }
    }

    fn skipped(name: impl Into<String>, note: impl ToString) -> Self {
        Self {
            name: name.into(),
            status: Status::Skip,
            value: "-".into(),
            limit: "-".into(),
            note: note.to_string(),
        }
    }

    fn with_note(mut self, note: impl ToString) -> Self {
        self.note = note.to_string();
        self
    }
}

/// `(P(z = +1), E[jumps])` for `H = bZ − ΓX` at inverse temperature `beta`.
pub fn single_qubit_closed_form(b: f64, gamma: f64, beta: f64) -> (f64, f64) {
    let omega = b.hypot(gamma);
    if omega == 0.0 {
        return (0.5, 0.0);
    }
    let t = (beta * omega).tanh();
    (0.5 * (1.0 - b / omega * t), beta * gamma * gamma / omega * t)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingleQubitRun {
    pub p_up: Estimate,
    pub mean_jumps: Estimate,
}

/// Repeated heat-bath resampling of a lone worldline. Each update is an exact
/// independent draw, so plain binomial and sample standard errors apply.
pub fn single_qubit_sampled(b: f64, gamma: f64, beta: f64, updates: usize, seed: u64) -> Result<SingleQubitRun, SamplerError> {
    let model = TimModel::new(1, [], vec![b], vec![gamma]).expect("single-qubit model is valid");
    let mut rng = substream(seed, 0);
    let mut hb = HeatBath::new(UpdateLimits::unbounded());
    let mut state = PimcState::flat(beta, &[1]);
    let mut ups = Vec::with_capacity(updates);
    let mut jumps = Vec::with_capacity(updates);
    for _ in 0..updates {
        let m = hb.resample(&mut state, 0, &model, &mut rng)?;
        ups.push(if state.worldlines[0].s0 > 0 { 1.0 } else { 0.0 });
        jumps.push(m as f64);
    }
    let p_up = sample_mean(&ups).expect("nonempty");
    let mean_jumps = sample_mean(&jumps).expect("nonempty");
    Ok(SingleQubitRun { p_up, mean_jumps })
}

/// One random instance of the conditional TV bound: worldline `j`, two
/// configurations that differ only on worldline `i ≠ j`.
pub fn random_tv_instance(model: &TimModel, l: usize, beta: f64, rng: &mut impl Rng) -> Result<TvCheck, OracleError> {
    let n = model.n();
    assert!(n >= 2, "a TV instance needs two worldlines");
    let j = rng.random_range(0..n);
    let neighbors = model.neighbors(j);
    let i = if !neighbors.is_empty() && rng.random_bool(0.9) {
        neighbors[rng.random_range(0..neighbors.len())].0
    } else {
        (j + rng.random_range(1..n)) % n
    };
    let spins = (0..n * l).map(|_| if rng.random_bool(0.5) { 1 } else { -1 }).collect();
    let z = DiscreteConfig::new(l, n, spins);
    let mut z_prime = z.clone();
    let mut replacement: Vec<i8> = (0..l).map(|_| if rng.random_bool(0.5) { 1 } else { -1 }).collect();
    if replacement == z.worldline(i) {
        replacement[rng.random_range(0..l)] *= -1;
    }
    z_prime.set_worldline(i, &replacement);
    conditional_tv(j, &z, &z_prime, model, beta)
}

/// `|Z_L − 𝒵|` for each Trotter number.
pub fn trotter_errors(model: &TimModel, beta: f64, ls: &[usize]) -> Result<Vec<f64>, OracleError> {
    let exact = exact_thermal(model, beta)?.partition();
    ls.iter()
        .map(|&l| Ok((trotter_partition_transfer(model, beta, l)? - exact).abs()))
        .collect()
}

pub fn strictly_decreasing(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[1] < w[0])
}

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub model: PathBuf,
    pub temperature: Temperature,
    pub trotter: usize,
    pub tv_instances: usize,
    pub samples: usize,
    pub updates: usize,
    pub eps: f64,
    pub seed: u64,
    pub workers: usize,
}

impl VerifyOptions {
    pub fn new(model: impl Into<PathBuf>, temperature: Temperature, seed: u64) -> Self {
        Self {
            model: model.into(),
            temperature,
            trotter: 3,
            tv_instances: 200,
            samples: 20_000,
            updates: 100_000,
            eps: 0.01,
            seed,
            workers: 0,
        }
    }
}

fn guarded(name: &str, result: Result<Check, OracleError>) -> Check {
    result.unwrap_or_else(|e| Check::skipped(name, e))
}

pub fn verify_checks(opts: &VerifyOptions) -> Result<Vec<Check>, CliError> {
    let model = TimModel::load(&opts.model)?;
    let beta = opts.temperature.beta()?;
    let l = opts.trotter;
    let mut checks = Vec::new();

    checks.push(guarded("stationarity", (|| {
        let (p, pi) = heat_bath_transition_matrix(&model, beta, l)?;
        let r = stationarity_residual(&p, &pi);
        Ok(Check::new("stationarity", r < 1e-10, format!("{r:e}"), "1e-10").with_note(format!("L = {l}")))
    })()));

    checks.push(if model.n() < 2 {
        Check::skipped("tv_bound", "needs at least two qubits")
    } else {
        guarded("tv_bound", (|| {
            let mut rng = substream(opts.seed, 1);
            let mut violations = 0;
            let mut worst = 0.0f64;
            for _ in 0..opts.tv_instances {
                let c = random_tv_instance(&model, l, beta, &mut rng)?;
                violations += usize::from(!c.holds);
                if c.bound > 0.0 {
                    worst = worst.max(c.tv / c.bound);
                }
            }
            Ok(Check::new("tv_bound", violations == 0, violations, 0)
                .with_note(format!("{} instances, max tv/bound {worst:.4}", opts.tv_instances)))
        })())
    });

    checks.push(guarded("trotter_convergence", (|| {
        let errors = trotter_errors(&model, beta, &TROTTER_NUMBERS)?;
        let last = *errors.last().expect("nonempty");
        Ok(Check::new("trotter_convergence", strictly_decreasing(&errors), format!("{last:e}"), "strictly decreasing")
            .with_note(format!("errors {errors:?}")))
    })()));

    for (k, &(b, gamma, qb)) in SINGLE_QUBIT_GRID.iter().enumerate() {
        let name = format!("single_qubit.{k}");
        let (p, jumps) = single_qubit_closed_form(b, gamma, qb);
        checks.push(match single_qubit_sampled(b, gamma, qb, opts.updates, opts.seed.wrapping_add(k as u64)) {
            Ok(run) => {
                let zp = (run.p_up.mean - p).abs() / run.p_up.stderr;
                let zj = (run.mean_jumps.mean - jumps).abs() / run.mean_jumps.stderr.max(f64::MIN_POSITIVE);
                Check::new(&name, zp <= 3.0 && zj <= 3.0, format!("{zp:.2} {zj:.2}"), "3 sigma").with_note(format!(
                    "b={b} gamma={gamma} beta={qb}: P(+1) {:.5} vs {p:.5}, jumps {:.5} vs {jumps:.5}",
                    run.p_up.mean, run.mean_jumps.mean
                ))
            }
            Err(e) => Check::new(&name, false, "-", "3 sigma").with_note(e),
        });
    }

    checks.push(mu_oracle_check(&model, beta, opts)?);

    let report = beta_thresholds(&model);
    checks.push(Check::new(
        "below_threshold",
        report.beta_degree_weighted.admits(beta),
        beta,
        report.beta_degree_weighted,
    ));
    Ok(checks)
}

fn mu_oracle_check(model: &TimModel, beta: f64, opts: &VerifyOptions) -> Result<Check, CliError> {
    const NAME: &str = "mu_oracle";
    let plan = match mixing_plan(model, beta, opts.eps) {
        Ok(plan) => plan,
        Err(e) => return Ok(Check::skipped(NAME, e)),
    };
    let exact = match exact_thermal(model, beta) {
        Ok(t) => t.mu,
        Err(e) => return Ok(Check::skipped(NAME, e)),
    };
    let config = ChainConfig {
        steps: Steps::Plan(plan),
        num_samples: opts.samples,
        seed: opts.seed,
        workers: opts.workers,
        limits: UpdateLimits::unbounded(),
    };
    let run = sample_mu(model, beta, &config)?;
    if let Some((sample, err)) = &run.report.first_failure {
        return Ok(Check::new(NAME, false, "-", "-").with_note(format!("sample {sample}: {err}")));
    }
    let tv = total_variation(&empirical_distribution(&run.values, model.n()), &exact);
    let limit = opts.eps + 3.0 * multinomial_noise_floor(&exact, opts.samples);
    Ok(Check::new(NAME, tv <= limit, format!("{tv:.5}"), format!("{limit:.5}"))
        .with_note(format!("t_mix {} samples {}", plan.t_mix, opts.samples)))
}

/// Tab-separated table: `check status value limit note`.
pub fn write_checks(out: &mut dyn Write, checks: &[Check]) -> std::io::Result<()> {
    writeln!(out, "check\tstatus\tvalue\tlimit\tnote")?;
    for c in checks {
        writeln!(out, "{}\t{}\t{}\t{}\t{}", c.name, c.status, c.value, c.limit, c.note)?;
    }
    Ok(())
}

pub fn run_verify(opts: &VerifyOptions, out: &mut dyn Write) -> Result<Vec<Check>, CliError> {
    writeln!(out, "# pimc verify seed = {} beta = {}", opts.seed, opts.temperature.beta()?)?;
    let checks = verify_checks(opts)?;
    write_checks(out, &checks)?;
    let failed = checks.iter().filter(|c| c.status == Status::Fail).count();
    if failed > 0 {
        return Err(CliError::ChecksFailed(failed));
    }
    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_values() {
        let (p, _) = single_qubit_closed_form(1.0, 1.0, 0.5);
        assert!((p - 0.284_735_707_104_863_1).abs() < 1e-12);
        let (p, jumps) = single_qubit_closed_form(0.0, 1.0, 1.0);
        assert_eq!(p, 0.5);
        assert!((jumps - 1f64.tanh()).abs() < 1e-15);
        assert_eq!(single_qubit_closed_form(0.0, 0.0, 2.0), (0.5, 0.0));
    }

    #[test]
    fn tv_instances_differ_on_one_other_worldline() {
        let m = TimModel::new(3, [(0, 1, 0.5), (1, 2, -0.3)], vec![0.0; 3], vec![1.0; 3]).unwrap();
        let mut rng = substream(0, 0);
        for _ in 0..50 {
            let c = random_tv_instance(&m, 4, 0.1, &mut rng).unwrap();
            assert!(c.holds);
        }
    }

    #[test]
    fn decreasing_sequences() {
        assert!(strictly_decreasing(&[3.0, 2.0, 1.0]));
        assert!(!strictly_decreasing(&[3.0, 3.0]));
    }
}
