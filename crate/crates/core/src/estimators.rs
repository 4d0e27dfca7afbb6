//! Observables and partition-function estimation.
//!
//! `𝒵(β)` comes from a telescoping product of ratios `𝒵(β_{i+1})/𝒵(β_i)`.
//! The product is anchored at a small `β₀`, where a second-order
//! high-temperature expansion is accurate to a certified remainder.
//! Each ratio is the mean of an imaginary-time rescaling weight over
//! states sampled at `β_i`.

use rayon::prelude::*;
use thiserror::Error;

use crate::chain::{mixing_plan, run_chains, ChainConfig, ChainError, RunReport, Steps};
use crate::heatbath::{jump_budget, UpdateLimits};
use crate::model::{coupling_stats, TimModel};
use crate::trotter::{classical_log_partition, MAX_CLASSICAL_QUBITS};
use crate::worldline::PimcState;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimateError {
    #[error("no samples")]
    Empty,
    #[error("source beta must be positive for a rescaling weight")]
    ZeroBeta,
    #[error("target relative error must lie in (0, 1), got {0}")]
    InvalidTarget(f64),
    #[error("beta must be finite and non-negative, got {0}")]
    InvalidBeta(f64),
    #[error("sampler failed: {0}")]
    Sampler(String),
    #[error(transparent)]
    Chain(#[from] ChainError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

fn mean_and_stderr(values: impl ExactSizeIterator<Item = f64> + Clone) -> Result<Estimate, EstimateError> {
    let count = values.len();
    if count == 0 {
        return Err(EstimateError::Empty);
    }
    let n = count as f64;
    let mean = values.clone().sum::<f64>() / n;
    let stderr = if count > 1 {
        let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    Ok(Estimate { mean, stderr })
}

/// Sample mean and standard error.
pub fn sample_mean(values: &[f64]) -> Result<Estimate, EstimateError> {
    mean_and_stderr(values.iter().copied())
}

/// Sample mean and standard error of `f(z)`.
pub fn diagonal_observable(samples: &[Vec<i8>], f: impl Fn(&[i8]) -> f64) -> Result<Estimate, EstimateError> {
    let values: Vec<f64> = samples.iter().map(|z| f(z)).collect();
    mean_and_stderr(values.iter().copied())
}

/// `∫₀^β E_cl(z(t)) dt` for a state.
pub fn integrated_diagonal_energy(state: &PimcState, model: &TimModel) -> f64 {
    let mut events: Vec<(f64, usize)> = state
        .worldlines
        .iter()
        .enumerate()
        .flat_map(|(j, w)| w.jumps.iter().map(move |&t| (t, j)))
        .collect();
    events.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut spins: Vec<i8> = state.worldlines.iter().map(|w| w.s0).collect();
    let mut energy = model.classical_energy(&spins);
    let mut last = 0.0;
    let mut total = 0.0;
    for (t, j) in events {
        total += energy * (t - last);
        // Flipping z_j changes E_cl by -2 z_j (b_j + Σ a_jk z_k).
        energy -= 2.0 * spins[j] as f64 * model.local_field(j, &spins);
        spins[j] = -spins[j];
        last = t;
    }
    total + energy * (state.beta - last)
}

/// Weight whose mean under the `β` path measure is `𝒵(β′)/𝒵(β)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioWeight {
    pub beta: f64,
    pub beta_prime: f64,
    pub jumps: usize,
    pub energy_integral: f64,
}

impl RatioWeight {
    pub fn from_state(state: &PimcState, model: &TimModel, beta_prime: f64) -> Result<Self, EstimateError> {
        if state.beta.is_nan() || state.beta <= 0.0 {
            return Err(EstimateError::ZeroBeta);
        }
        Ok(Self {
            beta: state.beta,
            beta_prime,
            jumps: state.total_jumps(),
            energy_integral: integrated_diagonal_energy(state, model),
        })
    }

    pub fn log_weight(&self) -> f64 {
        let r = self.beta_prime / self.beta;
        if r == 1.0 {
            return 0.0;
        }
        self.jumps as f64 * r.ln() - (r - 1.0) * self.energy_integral
    }

    pub fn weight(&self) -> f64 {
        self.log_weight().exp()
    }
}

pub fn ratio_weight(state: &PimcState, model: &TimModel, beta_prime: f64) -> Result<f64, EstimateError> {
    Ok(RatioWeight::from_state(state, model, beta_prime)?.weight())
}

/// Second-order high-temperature value of `𝒵(β₀)` with a bound on the
/// neglected tail: `|𝒵(β₀) − value| ≤ remainder`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anchor {
    pub beta: f64,
    pub value: f64,
    pub remainder: f64,
    /// Upper bound on `‖H‖` used for the remainder.
    pub norm_bound: f64,
}

impl Anchor {
    pub fn log_value(&self) -> f64 {
        self.value.ln()
    }

    pub fn relative_remainder(&self) -> f64 {
        self.remainder / self.value
    }
}

/// `n·JΔ + Σ|b| + ΣΓ`, an upper bound on `‖H‖`.
pub fn norm_bound(model: &TimModel) -> f64 {
    let stats = coupling_stats(model);
    let fields: f64 = model.fields().iter().map(|b| b.abs()).sum();
    let transverse: f64 = model.transverse().iter().map(|g| g.abs()).sum();
    model.n() as f64 * stats.max_coupling * stats.max_degree as f64 + fields + transverse
}

/// Largest anchor temperature allowed: `β₀ · norm_bound ≤ 0.1`.
pub fn anchor_beta(model: &TimModel) -> f64 {
    let norm = norm_bound(model);
    if norm > 0.0 {
        0.1 / norm
    } else {
        f64::INFINITY
    }
}

pub fn anchor(model: &TimModel, beta0: f64) -> Anchor {
    let n = model.n() as f64;
    // tr H = 0 and tr H² = 2ⁿ (Σa² + Σb² + ΣΓ²) since distinct Pauli strings are trace-orthogonal.
    let second: f64 = model.edges().iter().map(|e| e.a * e.a).sum::<f64>()
        + model.fields().iter().map(|b| b * b).sum::<f64>()
        + model.transverse().iter().map(|g| g * g).sum::<f64>();
    let norm = norm_bound(model);
    let x = beta0 * norm;
    let dim = n.exp2();
    // Σ_{k≥3} x^k/k!, summed directly to avoid cancellation at small x.
    let mut term = x * x * x / 6.0;
    let mut tail = 0.0;
    let mut k = 3.0;
    while term > tail * f64::EPSILON && term > 0.0 {
        tail += term;
        k += 1.0;
        term *= x / k;
    }
    Anchor {
        beta: beta0,
        value: dim * (1.0 + 0.5 * beta0 * beta0 * second),
        remainder: dim * tail,
        norm_bound: norm,
    }
}

/// Next temperature of the geometric schedule.
pub fn next_beta(model: &TimModel, beta: f64, target: f64) -> f64 {
    let stats = coupling_stats(model);
    let scale = model.n() as f64 * (stats.max_coupling * stats.max_degree as f64 + stats.max_field);
    (beta * (1.0 + 1.0 / (2.0 + beta * scale))).min(target)
}

/// Default schedule `β₀ < β₁ < … < β_K = β`.
pub fn geometric_schedule(model: &TimModel, beta0: f64, beta: f64) -> Vec<f64> {
    let mut schedule = vec![beta0];
    let mut current = beta0;
    while current < beta {
        current = next_beta(model, current, beta);
        schedule.push(current);
    }
    schedule
}

#[derive(Debug, Clone)]
pub struct EstimatorConfig {
    pub target_rel_error: f64,
    /// Mixing accuracy used for each stage's chains.
    pub eps: f64,
    pub pilot_samples: usize,
    /// Stages whose pilot relative variance exceeds this are bisected.
    pub max_stage_rel_variance: f64,
    pub max_bisections: usize,
    pub seed: u64,
    pub workers: usize,
    pub fail_prob: f64,
    pub retry_cap: u64,
    /// Use the annealed route even when `Γ = 0`.
    pub force_annealing: bool,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            target_rel_error: 0.05,
            eps: 0.01,
            pilot_samples: 2000,
            max_stage_rel_variance: 1.0,
            max_bisections: 32,
            seed: 0,
            workers: 0,
            fail_prob: 1e-3,
            retry_cap: crate::heatbath::DEFAULT_RETRY_CAP,
            force_annealing: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageEstimate {
    pub beta_from: f64,
    pub beta_to: f64,
    pub samples: usize,
    pub ratio: f64,
    pub stderr: f64,
    pub rel_variance: f64,
    pub t_mix: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// `β = 0`: `𝒵 = 2ⁿ`.
    Exact,
    ClassicalEnumeration,
    AnchorOnly,
    Annealed,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Exact => "exact",
            Method::ClassicalEnumeration => "classical-enumeration",
            Method::AnchorOnly => "anchor-only",
            Method::Annealed => "annealed-ratios",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionEstimate {
    pub beta: f64,
    pub method: Method,
    pub log_z: f64,
    pub log_ci: (f64, f64),
    /// Half-width of the 95% interval on `log 𝒵`.
    pub rel_half_width: f64,
    pub anchor: Option<Anchor>,
    pub stages: Vec<StageEstimate>,
    pub total_updates: u64,
    pub total_jumps: u64,
    pub failure: Option<String>,
}

impl PartitionEstimate {
    pub fn is_valid(&self) -> bool {
        self.failure.is_none()
    }

    /// `𝒵`, or 0 when the run failed.
    pub fn z(&self) -> f64 {
        if self.is_valid() {
            self.log_z.exp()
        } else {
            0.0
        }
    }

    pub fn ci(&self) -> (f64, f64) {
        (self.log_ci.0.exp(), self.log_ci.1.exp())
    }

    fn exact(beta: f64, method: Method, log_z: f64, anchor: Option<Anchor>) -> Self {
        let half = anchor.map_or(0.0, |a| a.relative_remainder().ln_1p());
        Self {
            beta,
            method,
            log_z,
            log_ci: (log_z - half, log_z + half),
            rel_half_width: half,
            anchor,
            stages: Vec::new(),
            total_updates: 0,
            total_jumps: 0,
            failure: None,
        }
    }
}

/// Update count the jump budget is sized for; runs are far below this.
const BUDGETED_UPDATES: u64 = 1 << 32;

const Z95: f64 = 1.959_963_984_540_054;

struct StageRun {
    weights: Vec<f64>,
    report: RunReport,
    t_mix: u64,
}

fn stage_run(
    model: &TimModel,
    beta_from: f64,
    beta_to: f64,
    samples: usize,
    stream_seed: u64,
    limits: UpdateLimits,
    config: &EstimatorConfig,
) -> Result<StageRun, EstimateError> {
    let plan = mixing_plan(model, beta_from, config.eps)?;
    let chain = ChainConfig {
        steps: Steps::Plan(plan),
        num_samples: samples,
        seed: stream_seed,
        workers: config.workers,
        limits,
    };
    let run = run_chains(model, beta_from, &chain, |s| RatioWeight::from_state(s, model, beta_to))?;
    let weights = run
        .values
        .into_iter()
        .map(|w| w.map(|w| w.weight()))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(StageRun {
        weights,
        report: run.report,
        t_mix: plan.t_mix,
    })
}

fn rel_variance(weights: &[f64]) -> f64 {
    let est = mean_and_stderr(weights.iter().copied()).expect("nonempty");
    let var = est.stderr * est.stderr * weights.len() as f64;
    var / (est.mean * est.mean)
}

fn seed_for_stage(seed: u64, stage: u64, pass: u64) -> u64 {
    // Distinct stages and passes use disjoint seeds derived from the user seed.
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(stage.wrapping_mul(0xBF58_476D_1CE4_E5B9))
        .wrapping_add(pass)
}

/// Estimate `𝒵(β)`.
pub fn estimate_partition(
    model: &TimModel,
    beta: f64,
    config: &EstimatorConfig,
) -> Result<PartitionEstimate, EstimateError> {
    let target = config.target_rel_error;
    if !(target > 0.0 && target < 1.0) {
        return Err(EstimateError::InvalidTarget(target));
    }
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(EstimateError::InvalidBeta(beta));
    }
    let n = model.n();
    if beta == 0.0 {
        return Ok(PartitionEstimate::exact(beta, Method::Exact, n as f64 * std::f64::consts::LN_2, None));
    }
    if model.is_classical() && n <= MAX_CLASSICAL_QUBITS && !config.force_annealing {
        let log_z = classical_log_partition(model, beta).expect("size checked");
        return Ok(PartitionEstimate::exact(beta, Method::ClassicalEnumeration, log_z, None));
    }
    // Refuse before any sampling.
    mixing_plan(model, beta, config.eps)?;

    let beta0 = anchor_beta(model).min(beta);
    let anchor = anchor(model, beta0);
    if beta0 >= beta {
        return Ok(PartitionEstimate::exact(beta, Method::AnchorOnly, anchor.log_value(), Some(anchor)));
    }

    let mut schedule = geometric_schedule(model, beta0, beta);
    let budget = jump_budget(model, beta, config.fail_prob, BUDGETED_UPDATES)
        .map_err(|e| EstimateError::Sampler(e.to_string()))?;
    let limits = UpdateLimits::from_budget(&budget).with_retry_cap(config.retry_cap);

    let mut result = PartitionEstimate {
        beta,
        method: Method::Annealed,
        log_z: 0.0,
        log_ci: (0.0, 0.0),
        rel_half_width: 0.0,
        anchor: Some(anchor),
        stages: Vec::new(),
        total_updates: 0,
        total_jumps: 0,
        failure: None,
    };
    let absorb = |result: &mut PartitionEstimate, report: &RunReport| -> bool {
        result.total_updates += report.total_updates;
        result.total_jumps += report.total_jumps;
        if let Some((sample, err)) = &report.first_failure {
            result.failure = Some(format!("sample {sample}: {err}"));
            false
        } else {
            true
        }
    };

    // Pilot pass: measure each stage's relative variance, bisecting stages that exceed the bound.
    let mut pilots: Vec<StageRun> = Vec::new();
    let mut bisections = 0;
    let mut i = 0;
    while i + 1 < schedule.len() {
        let (lo, hi) = (schedule[i], schedule[i + 1]);
        let run = stage_run(
            model,
            lo,
            hi,
            config.pilot_samples,
            seed_for_stage(config.seed, (bisections * 1000 + i) as u64, 0),
            limits,
            config,
        )?;
        if !absorb(&mut result, &run.report) {
            return Ok(result.invalidated());
        }
        let v = rel_variance(&run.weights);
        if v > config.max_stage_rel_variance && bisections < config.max_bisections {
            schedule.insert(i + 1, 0.5 * (lo + hi));
            bisections += 1;
            continue;
        }
        pilots.push(run);
        i += 1;
    }

    // Allocate the main-pass sample sizes so Σ v_s/N_s ≤ (target/z₉₅)²/1.2.
    let stages = pilots.len();
    let allowed = (target / Z95).powi(2) / 1.2;
    let variances: Vec<f64> = pilots.iter().map(|p| rel_variance(&p.weights)).collect();

    let mut log_z = anchor.log_value();
    let mut log_var = 0.0;
    for (s, pilot) in pilots.into_iter().enumerate() {
        let (lo, hi) = (schedule[s], schedule[s + 1]);
        let needed = (stages as f64 * variances[s] / allowed).ceil() as usize;
        let mut weights = pilot.weights;
        if needed > weights.len() {
            let extra = stage_run(
                model,
                lo,
                hi,
                needed - weights.len(),
                seed_for_stage(config.seed, s as u64, 1 + bisections as u64),
                limits,
                config,
            )?;
            if !absorb(&mut result, &extra.report) {
                return Ok(result.invalidated());
            }
            weights.extend(extra.weights);
        }
        let est = mean_and_stderr(weights.iter().copied())?;
        let rel_var = rel_variance(&weights);
        log_z += est.mean.ln();
        log_var += (est.stderr / est.mean).powi(2);
        result.stages.push(StageEstimate {
            beta_from: lo,
            beta_to: hi,
            samples: weights.len(),
            ratio: est.mean,
            stderr: est.stderr,
            rel_variance: rel_var,
            t_mix: pilot.t_mix,
        });
    }
    let half = Z95 * log_var.sqrt() + anchor.relative_remainder().ln_1p();
    result.log_z = log_z;
    result.log_ci = (log_z - half, log_z + half);
    result.rel_half_width = half;
    Ok(result)
}

impl PartitionEstimate {
    fn invalidated(mut self) -> Self {
        self.log_z = f64::NEG_INFINITY;
        self.log_ci = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        self.rel_half_width = f64::INFINITY;
        self
    }
}

/// Second differences of `log 𝒵` on a uniform grid; convexity makes them non-negative.
pub fn second_differences(values: &[f64]) -> Vec<f64> {
    values.windows(3).map(|w| w[0] - 2.0 * w[1] + w[2]).collect()
}

/// Mean of `W` over states sampled at `beta`, evaluated for each target in `targets`.
pub fn ratio_means(
    model: &TimModel,
    beta: f64,
    targets: &[f64],
    chain: &ChainConfig,
) -> Result<Vec<Estimate>, EstimateError> {
    let run = run_chains(model, beta, chain, |s| {
        targets
            .iter()
            .map(|&t| RatioWeight::from_state(s, model, t).map(|w| w.weight()))
            .collect::<Result<Vec<f64>, _>>()
    })?;
    if let Some((sample, err)) = run.report.first_failure {
        return Err(EstimateError::Sampler(format!("sample {sample}: {err}")));
    }
    let rows = run.values.into_iter().collect::<Result<Vec<_>, _>>()?;
    (0..targets.len())
        .into_par_iter()
        .map(|k| mean_and_stderr(rows.iter().map(|r| r[k]).collect::<Vec<_>>().into_iter()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{sample_mu, substream};
    use crate::heatbath::HeatBath;
    use crate::trotter::exact_thermal;
    use crate::worldline::Worldline;

    fn chain(steps: Steps, num_samples: usize, seed: u64) -> ChainConfig {
        ChainConfig {
            steps,
            num_samples,
            seed,
            workers: 0,
            limits: UpdateLimits::unbounded(),
        }
    }

    #[test]
    fn constant_observable() {
        let samples = vec![vec![1, -1], vec![-1, -1], vec![1, 1]];
        let e = diagonal_observable(&samples, |_| 1.0).unwrap();
        assert_eq!(e, Estimate { mean: 1.0, stderr: 0.0 });
        assert_eq!(diagonal_observable(&[], |_| 1.0), Err(EstimateError::Empty));
    }

    #[test]
    fn magnetization_vanishes_at_infinite_temperature() {
        let m = TimModel::new(2, [(0, 1, -1.0)], vec![0.7, 0.0], vec![1.0; 2]).unwrap();
        let run = sample_mu(&m, 0.0, &chain(Steps::Forced(20), 20_000, 1)).unwrap();
        let e = diagonal_observable(&run.values, |z| z[0] as f64).unwrap();
        assert!(e.mean.abs() < 3.0 * e.stderr.max(1e-3));
    }

    #[test]
    fn correlation_matches_exact() {
        let m = TimModel::new(2, [(0, 1, -1.0)], vec![0.0; 2], vec![1.0; 2]).unwrap();
        let beta = 0.1;
        let plan = mixing_plan(&m, beta, 0.001).unwrap();
        let run = sample_mu(&m, beta, &chain(Steps::Plan(plan), 100_000, 2)).unwrap();
        let e = diagonal_observable(&run.values, |z| (z[0] * z[1]) as f64).unwrap();
        let exact = exact_thermal(&m, beta).unwrap().expect_diag(|z| (z[0] * z[1]) as f64);
        assert!((e.mean - exact).abs() < 3.0 * e.stderr, "{} vs {exact}", e.mean);
    }

    #[test]
    fn energy_integral_of_hand_built_state() {
        let m = TimModel::new(2, [(0, 1, 1.5)], vec![0.5, -0.25], vec![1.0; 2]).unwrap();
        let beta = 2.0;
        let state = PimcState {
            beta,
            worldlines: vec![
                Worldline::with_jumps(1, vec![0.5, 1.5]),
                Worldline::with_jumps(1, vec![1.0, 1.25]),
            ],
        };
        // Slices: [0,.5) ++, [.5,1) -+, [1,1.25) --, [1.25,1.5) -+, [1.5,2) ++.
        let e = |z: [i8; 2]| m.classical_energy(&z);
        let oracle = 0.5 * e([1, 1]) + 0.5 * e([-1, 1]) + 0.25 * e([-1, -1]) + 0.25 * e([-1, 1]) + 0.5 * e([1, 1]);
        assert!((integrated_diagonal_energy(&state, &m) - oracle).abs() < 1e-12);
        let flat = PimcState::flat(beta, &[1, -1]);
        assert!((integrated_diagonal_energy(&flat, &m) - beta * e([1, -1])).abs() < 1e-12);
    }

    #[test]
    fn identity_rescaling_has_unit_weight() {
        let m = TimModel::new(3, [(0, 1, 0.4), (1, 2, -0.3)], vec![0.2, 0.0, 0.1], vec![1.0; 3]).unwrap();
        let mut rng = substream(3, 0);
        let mut state = PimcState::flat(0.7, &[1, -1, 1]);
        let mut hb = HeatBath::new(UpdateLimits::unbounded());
        for _ in 0..50 {
            crate::chain::step(&mut state, &m, &mut hb, &mut rng).unwrap();
            assert_eq!(ratio_weight(&state, &m, 0.7).unwrap(), 1.0);
        }
        assert_eq!(
            ratio_weight(&PimcState::flat(0.0, &[1, 1, 1]), &m, 1.0),
            Err(EstimateError::ZeroBeta)
        );
    }

    #[test]
    fn two_level_ratio() {
        let m = TimModel::new(1, [], vec![0.0], vec![1.0]).unwrap();
        let (beta, beta_prime) = (0.5, 0.8);
        let plan = mixing_plan(&m, beta, 0.001).unwrap();
        let est = ratio_means(&m, beta, &[beta_prime], &chain(Steps::Plan(plan), 100_000, 4)).unwrap()[0];
        let exact = beta_prime.cosh() / beta.cosh();
        assert!((est.mean - exact).abs() < 3.0 * est.stderr, "{} ± {} vs {exact}", est.mean, est.stderr);
    }

    #[test]
    fn staged_ratio_matches_exact() {
        let m = TimModel::new(2, [(0, 1, 0.6)], vec![0.3, -0.2], vec![1.0, 0.8]).unwrap();
        let beta0 = 0.05;
        let beta = 0.2;
        let schedule = geometric_schedule(&m, beta0, beta);
        let mut log_ratio = 0.0;
        let mut log_var = 0.0;
        for (s, w) in schedule.windows(2).enumerate() {
            let plan = mixing_plan(&m, w[0], 0.001).unwrap();
            let est = ratio_means(&m, w[0], &[w[1]], &chain(Steps::Plan(plan), 100_000, 10 + s as u64)).unwrap()[0];
            log_ratio += est.mean.ln();
            log_var += (est.stderr / est.mean).powi(2);
        }
        let exact = exact_thermal(&m, beta).unwrap().log_partition - exact_thermal(&m, beta0).unwrap().log_partition;
        assert!((log_ratio - exact).abs() < 3.0 * log_var.sqrt(), "{log_ratio} vs {exact}");
    }

    #[test]
    fn anchor_against_exact() {
        let m = TimModel::new(3, [(0, 1, 1.0), (1, 2, -0.5)], vec![0.3, 0.0, -0.4], vec![1.0, 0.5, 0.8]).unwrap();
        let beta0 = anchor_beta(&m);
        assert!((beta0 * norm_bound(&m) - 0.1).abs() < 1e-15);
        let a = anchor(&m, beta0);
        let exact = exact_thermal(&m, beta0).unwrap().partition();
        assert!((a.value - exact).abs() <= a.remainder);
        // Remainder is Σ_{k≥3} xᵏ/k! with x = 0.1.
        let x: f64 = 0.1;
        let tail = x.exp() - 1.0 - x - 0.5 * x * x;
        assert!((a.remainder / 8.0 - tail).abs() < 1e-15);
    }

    #[test]
    fn degenerate_schedule_returns_anchor() {
        let m = TimModel::new(2, [(0, 1, 1.0)], vec![0.0; 2], vec![1.0; 2]).unwrap();
        let beta = 0.5 * anchor_beta(&m);
        let est = estimate_partition(&m, beta, &EstimatorConfig::default()).unwrap();
        assert_eq!(est.method, Method::AnchorOnly);
        assert!(est.stages.is_empty());
        let a = anchor(&m, beta);
        assert_eq!(est.log_z, a.log_value());
        let exact = exact_thermal(&m, beta).unwrap().log_partition;
        assert!(est.log_ci.0 <= exact && exact <= est.log_ci.1);
    }

    #[test]
    fn classical_fallback_is_exact() {
        let m = TimModel::new(3, [(0, 1, 1.0), (1, 2, -0.7)], vec![0.2, 0.1, 0.0], vec![0.0; 3]).unwrap();
        let est = estimate_partition(&m, 0.4, &EstimatorConfig::default()).unwrap();
        assert_eq!(est.method, Method::ClassicalEnumeration);
        assert_eq!(est.log_z, classical_log_partition(&m, 0.4).unwrap());
        let zero = estimate_partition(&m, 0.0, &EstimatorConfig::default()).unwrap();
        assert!((zero.z() - 8.0).abs() < 1e-12);
    }

    #[test]
    fn annealed_estimate_covers_exact() {
        let m = TimModel::new(3, [(0, 1, 1.0), (1, 2, -0.8), (0, 2, 0.5)], vec![0.2, -0.3, 0.1], vec![1.0, 0.7, 0.9])
            .unwrap();
        let beta = 0.8 * crate::model::beta_thresholds(&m).beta_simple.value().unwrap();
        let config = EstimatorConfig {
            seed: 5,
            ..EstimatorConfig::default()
        };
        let est = estimate_partition(&m, beta, &config).unwrap();
        assert!(est.is_valid());
        assert_eq!(est.method, Method::Annealed);
        assert_eq!(est.stages.last().unwrap().beta_to, beta);
        assert!(est.rel_half_width <= 0.05 + 1e-9);
        let exact = exact_thermal(&m, beta).unwrap().log_partition;
        assert!(est.log_ci.0 <= exact && exact <= est.log_ci.1, "{:?} vs {exact}", est.log_ci);
    }

    #[test]
    fn forced_annealing_on_classical_model() {
        let m = TimModel::new(2, [(0, 1, 0.5)], vec![0.3, 0.0], vec![0.0; 2]).unwrap();
        let beta = 0.8 * crate::model::beta_thresholds(&m).beta_simple.value().unwrap();
        let config = EstimatorConfig {
            force_annealing: true,
            seed: 6,
            ..EstimatorConfig::default()
        };
        let est = estimate_partition(&m, beta, &config).unwrap();
        assert_eq!(est.method, Method::Annealed);
        let exact = classical_log_partition(&m, beta).unwrap();
        assert!(est.log_ci.0 <= exact && exact <= est.log_ci.1);
    }

    #[test]
    fn log_partition_is_convex_for_single_qubit() {
        let m = TimModel::new(1, [], vec![0.4], vec![1.0]).unwrap();
        let grid: Vec<f64> = (1..=6).map(|k| 0.25 * k as f64).collect();
        let config = EstimatorConfig {
            target_rel_error: 0.005,
            seed: 7,
            ..EstimatorConfig::default()
        };
        let ests: Vec<PartitionEstimate> = grid.iter().map(|&b| estimate_partition(&m, b, &config).unwrap()).collect();
        let logs: Vec<f64> = ests.iter().map(|e| e.log_z).collect();
        let noise = ests.iter().map(|e| e.rel_half_width).fold(0.0, f64::max);
        for d in second_differences(&logs) {
            assert!(d > -4.0 * noise, "{d}");
        }
    }

    #[test]
    fn schedule_rule() {
        let m = TimModel::new(3, [(0, 1, 1.0), (1, 2, 1.0)], vec![0.5, 0.0, 0.0], vec![1.0; 3]).unwrap();
        let s = geometric_schedule(&m, 0.01, 0.3);
        assert_eq!(*s.last().unwrap(), 0.3);
        for w in s.windows(2) {
            assert!(w[1] > w[0]);
            // n (JΔ + |b|max) = 3 (2 + 0.5)
            assert!(w[1] <= w[0] * (1.0 + 1.0 / (2.0 + w[0] * 7.5)) * (1.0 + 1e-15));
        }
    }

    #[test]
    fn above_threshold_refused() {
        let m = TimModel::new(2, [(0, 1, 1.0)], vec![0.0; 2], vec![1.0; 2]).unwrap();
        let r = estimate_partition(&m, 5.0, &EstimatorConfig::default());
        assert!(matches!(r, Err(EstimateError::Chain(ChainError::AboveThreshold { .. }))));
    }
}
