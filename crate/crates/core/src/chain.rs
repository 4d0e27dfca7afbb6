//! Markov-chain driver.
//!
//! Each step picks a worldline uniformly at random and heat-bath resamples it.
//! Path coupling on the worldline metric gives a contraction rate α. With
//! diameter n this yields `t_mix ≤ α⁻¹ ln(n/ε)`, and every sample is drawn
//! from a fresh chain run for exactly that many steps. Chains are independent.
//! Sample `i` always uses RNG substream `i` of the seed, so output does not
//! depend on the worker count.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::heatbath::{HeatBath, SamplerError, UpdateLimits};
use crate::model::{contraction_rate, TimModel};
use crate::worldline::PimcState;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChainError {
    #[error("beta = {beta} is at or above the rapid-mixing threshold (alpha = {alpha}); pass an explicit step count to override")]
    AboveThreshold { beta: f64, alpha: f64 },
    #[error("epsilon must lie in (0, 1), got {0}")]
    InvalidEpsilon(f64),
    #[error("beta must be finite and non-negative, got {0}")]
    InvalidBeta(f64),
    #[error("worker pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixingPlan {
    pub alpha: f64,
    pub eps: f64,
    pub t_mix: u64,
    /// Diameter of the worldline path metric, `n`.
    pub diam: usize,
}

pub fn mixing_plan(model: &TimModel, beta: f64, eps: f64) -> Result<MixingPlan, ChainError> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(ChainError::InvalidEpsilon(eps));
    }
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(ChainError::InvalidBeta(beta));
    }
    let alpha = contraction_rate(model, beta);
    if alpha <= 0.0 {
        return Err(ChainError::AboveThreshold { beta, alpha });
    }
    let n = model.n();
    let t_mix = ((n as f64 / eps).ln() / alpha).ceil() as u64;
    Ok(MixingPlan {
        alpha,
        eps,
        t_mix,
        diam: n,
    })
}

/// How many steps each fresh chain runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Steps {
    Plan(MixingPlan),
    /// Explicit count with no mixing guarantee.
    Forced(u64),
}

impl Steps {
    pub fn count(&self) -> u64 {
        match self {
            Steps::Plan(p) => p.t_mix,
            Steps::Forced(t) => *t,
        }
    }

    pub fn is_heuristic(&self) -> bool {
        matches!(self, Steps::Forced(_))
    }
}

/// RNG substream `index` of `seed`.
pub fn substream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepOutcome {
    pub site: usize,
    pub jumps: usize,
}

/// One Markov step: choose a worldline uniformly, then resample it.
pub fn step(
    state: &mut PimcState,
    model: &TimModel,
    heatbath: &mut HeatBath,
    rng: &mut impl Rng,
) -> Result<StepOutcome, SamplerError> {
    let site = rng.random_range(0..state.n());
    let jumps = heatbath.resample(state, site, model, rng)?;
    Ok(StepOutcome { site, jumps })
}

/// Fresh all-flat state with independent uniform spins.
pub fn random_flat_state(n: usize, beta: f64, rng: &mut impl Rng) -> PimcState {
    let spins: Vec<i8> = (0..n).map(|_| if rng.random_bool(0.5) { 1 } else { -1 }).collect();
    PimcState::flat(beta, &spins)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub samples: usize,
    pub steps_per_sample: u64,
    pub total_updates: u64,
    pub total_jumps: u64,
    /// Largest jump count of any resampled worldline.
    pub max_update_jumps: usize,
    pub failures: usize,
    pub first_failure: Option<(usize, SamplerError)>,
    pub seconds_per_update: f64,
    pub heuristic: bool,
}

impl RunReport {
    pub fn is_valid(&self) -> bool {
        self.failures == 0
    }

    pub fn mean_jumps_per_update(&self) -> f64 {
        if self.total_updates == 0 {
            0.0
        } else {
            self.total_jumps as f64 / self.total_updates as f64
        }
    }
}

#[derive(Debug, Clone)]
pub struct ChainConfig {
    pub steps: Steps,
    pub num_samples: usize,
    pub seed: u64,
    /// Worker threads; 0 picks the rayon default.
    pub workers: usize,
    pub limits: UpdateLimits,
}

/// Values extracted from each chain's final state, plus the run report.
/// On any sampler failure the values are discarded.
#[derive(Debug, Clone)]
pub struct ChainRun<T> {
    pub values: Vec<T>,
    pub report: RunReport,
}

struct ChainResult<T> {
    value: Result<T, SamplerError>,
    jumps: u64,
    max_jumps: usize,
    updates: u64,
}

fn run_one<T>(
    model: &TimModel,
    beta: f64,
    steps: u64,
    seed: u64,
    index: usize,
    limits: UpdateLimits,
    extract: &(impl Fn(&PimcState) -> T + Sync),
) -> ChainResult<T> {
    let mut rng = substream(seed, index as u64);
    let mut state = random_flat_state(model.n(), beta, &mut rng);
    let mut hb = HeatBath::new(limits);
    let mut jumps = 0u64;
    let mut max_jumps = 0usize;
    for t in 0..steps {
        match step(&mut state, model, &mut hb, &mut rng) {
            Ok(o) => {
                jumps += o.jumps as u64;
                max_jumps = max_jumps.max(o.jumps);
            }
            Err(e) => {
                return ChainResult {
                    value: Err(e),
                    jumps,
                    max_jumps,
                    updates: t + 1,
                }
            }
        }
    }
    ChainResult {
        value: Ok(extract(&state)),
        jumps,
        max_jumps,
        updates: steps,
    }
}

fn with_pool<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> Result<R, ChainError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| ChainError::Pool(e.to_string()))?;
    Ok(pool.install(f))
}

/// Run `num_samples` independent fresh chains and apply `extract` to each final state.
pub fn run_chains<T: Send>(
    model: &TimModel,
    beta: f64,
    config: &ChainConfig,
    extract: impl Fn(&PimcState) -> T + Sync,
) -> Result<ChainRun<T>, ChainError> {
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(ChainError::InvalidBeta(beta));
    }
    let steps = config.steps.count();
    let start = Instant::now();
    let results: Vec<ChainResult<T>> = with_pool(config.workers, || {
        (0..config.num_samples)
            .into_par_iter()
            .map(|i| run_one(model, beta, steps, config.seed, i, config.limits, &extract))
            .collect()
    })?;
    let elapsed = start.elapsed().as_secs_f64();

    let mut report = RunReport {
        samples: 0,
        steps_per_sample: steps,
        total_updates: 0,
        total_jumps: 0,
        max_update_jumps: 0,
        failures: 0,
        first_failure: None,
        seconds_per_update: 0.0,
        heuristic: config.steps.is_heuristic(),
    };
    let mut values = Vec::with_capacity(results.len());
    for (i, r) in results.into_iter().enumerate() {
        report.total_updates += r.updates;
        report.total_jumps += r.jumps;
        report.max_update_jumps = report.max_update_jumps.max(r.max_jumps);
        match r.value {
            Ok(v) => values.push(v),
            Err(e) => {
                report.failures += 1;
                if report.first_failure.is_none() {
                    report.first_failure = Some((i, e));
                }
            }
        }
    }
    if report.total_updates > 0 {
        report.seconds_per_update = elapsed / report.total_updates as f64;
    }
    if report.failures > 0 {
        values.clear();
    }
    report.samples = values.len();
    Ok(ChainRun { values, report })
}

/// Draw approximate samples of `μ_β`: the `t = 0` time slice of each chain.
pub fn sample_mu(model: &TimModel, beta: f64, config: &ChainConfig) -> Result<ChainRun<Vec<i8>>, ChainError> {
    run_chains(model, beta, config, |s| {
        s.worldlines.iter().map(|w| w.s0).collect()
    })
}

/// Single long chain with burn-in and thinning. No mixing guarantee.
pub fn sample_mu_thinned(
    model: &TimModel,
    beta: f64,
    burn_in: u64,
    thin: u64,
    num_samples: usize,
    seed: u64,
    limits: UpdateLimits,
) -> ChainRun<Vec<i8>> {
    let mut rng = substream(seed, 0);
    let mut state = random_flat_state(model.n(), beta, &mut rng);
    let mut hb = HeatBath::new(limits);
    let start = Instant::now();
    let mut report = RunReport {
        samples: 0,
        steps_per_sample: thin,
        total_updates: 0,
        total_jumps: 0,
        max_update_jumps: 0,
        failures: 0,
        first_failure: None,
        seconds_per_update: 0.0,
        heuristic: true,
    };
    let mut values = Vec::with_capacity(num_samples);
    let total = burn_in + thin * num_samples as u64;
    for t in 0..total {
        match step(&mut state, model, &mut hb, &mut rng) {
            Ok(o) => {
                report.total_jumps += o.jumps as u64;
                report.max_update_jumps = report.max_update_jumps.max(o.jumps);
            }
            Err(e) => {
                report.failures = 1;
                report.first_failure = Some((values.len(), e));
                report.total_updates = t + 1;
                values.clear();
                return ChainRun { values, report };
            }
        }
        if t + 1 > burn_in && (t + 1 - burn_in).is_multiple_of(thin.max(1)) {
            values.push(state.worldlines.iter().map(|w| w.s0).collect());
        }
    }
    report.total_updates = total;
    report.seconds_per_update = start.elapsed().as_secs_f64() / total.max(1) as f64;
    report.samples = values.len();
    ChainRun { values, report }
}

/// Empirical distribution of spin samples over basis indices.
pub fn empirical_distribution(samples: &[Vec<i8>], n: usize) -> Vec<f64> {
    let mut counts = vec![0.0; 1 << n];
    for s in samples {
        counts[crate::model::basis_index(s)] += 1.0;
    }
    let total = samples.len().max(1) as f64;
    counts.iter_mut().for_each(|c| *c /= total);
    counts
}

/// `½ Σ_z √(p_z(1 − p_z)/N)`: the scale of TV fluctuations of an
/// `N`-sample empirical distribution around `p`.
pub fn multinomial_noise_floor(p: &[f64], samples: usize) -> f64 {
    0.5 * p
        .iter()
        .map(|&x| (x * (1.0 - x) / samples as f64).sqrt())
        .sum::<f64>()
}
