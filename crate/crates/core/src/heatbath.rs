//! Exact worldline heat-bath updates in continuous imaginary time.
//!
//! Resampling worldline `j` given its neighbors happens in three stages:
//!
//! 1. Build the cavity field `F_j(t)`, constant on segments between neighbor
//!    jumps.
//! 2. Draw the spins `s_0 … s_q` at the segment boundaries from
//!    `⟨s_0|A_q|s_q⟩ ⋯ ⟨s_1|A_0|s_0⟩ / Tr[A_q ⋯ A_0]` with
//!    `A_i = exp(−λ_i (h_i Z − c X))`.
//! 3. Fill each segment with a path from `s_i` to `s_{i+1}`. The path comes
//!    from a flip process with rate `ω + B h` for current spin `B`, where
//!    `ω = √(h² + c²)`, repeated until it ends on `s_{i+1}`.
//!
//! Step 3 is exact because consecutive rates multiply to `ω² − h² = c²`. For
//! fixed endpoints every path's density is therefore a constant times
//! `c^w exp(−h ∫ z)`.
//!
//! Runaway updates are cut off by the [`JumpBudget`]: a worldline that would
//! carry more than `k` jumps aborts the run.

use nalgebra::Matrix2;
use rand::Rng;
use rand_distr::Exp1;
use thiserror::Error;

use crate::model::{coupling_stats, TimModel};
use crate::worldline::{local_field_profile_into, PiecewiseField, PimcState, Worldline};

pub const DEFAULT_RETRY_CAP: u64 = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplerError {
    #[error("worldline {worldline} exceeded the jump budget of {limit}")]
    JumpBudgetExceeded { worldline: usize, limit: usize },
    #[error("subpath rejection loop exceeded {attempts} attempts")]
    RetryLimitExceeded { attempts: u64 },
    #[error("boundary spins {s_in} -> {s_out} are unreachable without a transverse field")]
    ImpossibleBoundary { s_in: i8, s_out: i8 },
    #[error("numerical failure in boundary sampling: {0}")]
    Numerical(&'static str),
    #[error("invalid jump budget request: {0}")]
    InvalidBudget(&'static str),
}

#[inline]
fn idx(s: i8) -> usize {
    if s > 0 {
        0
    } else {
        1
    }
}

/// `A = exp(−λ(hZ − cX))`, stored as `e^{log_scale} · scaled`.
/// Row/column 0 is spin up.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferMatrix {
    pub h: f64,
    pub c: f64,
    pub length: f64,
    pub log_scale: f64,
    pub scaled: Matrix2<f64>,
}

impl TransferMatrix {
    pub fn matrix(&self) -> Matrix2<f64> {
        self.scaled * self.log_scale.exp()
    }

    /// `⟨s_out|A|s_in⟩ e^{−log_scale}`.
    #[inline]
    pub fn scaled_entry(&self, s_out: i8, s_in: i8) -> f64 {
        self.scaled[(idx(s_out), idx(s_in))]
    }

    pub fn entry(&self, s_out: i8, s_in: i8) -> f64 {
        self.scaled_entry(s_out, s_in) * self.log_scale.exp()
    }

    pub fn log_trace(&self) -> f64 {
        self.scaled.trace().ln() + self.log_scale
    }
}

/// Closed form `cosh(λω) I − sinh(λω)/ω (hZ − cX)`.
pub fn transfer_matrix(h: f64, c: f64, length: f64) -> TransferMatrix {
    let omega = h.hypot(c);
    let x = length * omega;
    if omega == 0.0 || x == 0.0 {
        return TransferMatrix {
            h,
            c,
            length,
            log_scale: 0.0,
            scaled: Matrix2::identity(),
        };
    }
    let e = (-2.0 * x).exp();
    let sp = -0.5 * (-2.0 * x).exp_m1();
    // 1 ∓ h/ω without cancellation.
    let one_minus = if h >= 0.0 { c * c / (omega * (omega + h)) } else { 1.0 - h / omega };
    let one_plus = if h <= 0.0 { c * c / (omega * (omega - h)) } else { 1.0 + h / omega };
    let up = 0.5 * (one_minus + e * one_plus);
    let down = 0.5 * (one_plus + e * one_minus);
    let off = sp * c / omega;
    TransferMatrix {
        h,
        c,
        length,
        log_scale: x,
        scaled: Matrix2::new(up, off, off, down),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundarySpins {
    /// `spins[i]` is the spin at the start of segment `i`.
    pub spins: Vec<i8>,
}

fn normalized(m: Matrix2<f64>) -> Matrix2<f64> {
    let top = m.max();
    if top > 0.0 && top.is_finite() {
        m / top
    } else {
        m
    }
}

fn pick(rng: &mut impl Rng, w_up: f64, w_down: f64) -> Result<i8, SamplerError> {
    let total = w_up + w_down;
    if total <= 0.0 || !total.is_finite() {
        return Err(SamplerError::Numerical("non-positive boundary weights"));
    }
    Ok(if rng.random::<f64>() * total < w_up { 1 } else { -1 })
}

fn sample_boundaries_into(
    mats: &[TransferMatrix],
    suffix: &mut Vec<Matrix2<f64>>,
    out: &mut Vec<i8>,
    rng: &mut impl Rng,
) -> Result<(), SamplerError> {
    let q1 = mats.len();
    // suffix[i] ∝ A_q ⋯ A_i, suffix[q+1] = I.
    suffix.clear();
    suffix.resize(q1 + 1, Matrix2::identity());
    for i in (0..q1).rev() {
        suffix[i] = normalized(suffix[i + 1] * mats[i].scaled);
    }
    out.clear();
    let s0 = pick(rng, suffix[0][(0, 0)], suffix[0][(1, 1)])?;
    out.push(s0);
    let a0 = idx(s0);
    for i in 0..q1 - 1 {
        let cur = idx(out[i]);
        let rest = &suffix[i + 1];
        let a = &mats[i].scaled;
        let w_up = a[(0, cur)] * rest[(a0, 0)];
        let w_down = a[(1, cur)] * rest[(a0, 1)];
        out.push(pick(rng, w_up, w_down)?);
    }
    Ok(())
}

/// Exact draw of the segment boundary spins for a cavity field profile.
pub fn sample_boundaries(
    profile: &PiecewiseField,
    c: f64,
    rng: &mut impl Rng,
) -> Result<BoundarySpins, SamplerError> {
    let mats: Vec<TransferMatrix> = profile
        .values
        .iter()
        .zip(profile.lengths())
        .map(|(&h, l)| transfer_matrix(h, c, l))
        .collect();
    let mut suffix = Vec::new();
    let mut spins = Vec::new();
    sample_boundaries_into(&mats, &mut suffix, &mut spins, rng)?;
    Ok(BoundarySpins { spins })
}

/// Per-update limits enforced by the sampler.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UpdateLimits {
    /// Maximum jumps a worldline may carry.
    pub max_jumps: usize,
    /// Maximum rejection-loop attempts for one segment.
    pub retry_cap: u64,
}

impl UpdateLimits {
    pub fn unbounded() -> Self {
        Self {
            max_jumps: usize::MAX,
            retry_cap: DEFAULT_RETRY_CAP,
        }
    }

    pub fn from_budget(budget: &JumpBudget) -> Self {
        Self {
            max_jumps: budget.k,
            retry_cap: DEFAULT_RETRY_CAP,
        }
    }

    pub fn with_retry_cap(mut self, retry_cap: u64) -> Self {
        self.retry_cap = retry_cap;
        self
    }
}

// Appends absolute jump times in (start, end) to `out`. `room` is how many
// more jumps the worldline may take.
#[allow(clippy::too_many_arguments)]
fn sample_subpath_into(
    s_in: i8,
    s_out: i8,
    h: f64,
    c: f64,
    start: f64,
    end: f64,
    room: usize,
    retry_cap: u64,
    worldline: usize,
    rng: &mut impl Rng,
    out: &mut Vec<f64>,
) -> Result<(), SamplerError> {
    if c == 0.0 {
        return if s_in == s_out {
            Ok(())
        } else {
            Err(SamplerError::ImpossibleBoundary { s_in, s_out })
        };
    }
    let omega = h.hypot(c);
    let len = end - start;
    let base = out.len();
    for _ in 0..retry_cap {
        out.truncate(base);
        let mut b = s_in;
        let mut elapsed = 0.0;
        let mut ok = true;
        loop {
            let rate = omega + f64::from(b) * h;
            let u: f64 = rng.sample(Exp1);
            elapsed += u / rate;
            if elapsed >= len {
                break;
            }
            let t = start + elapsed;
            let prev = out.last().copied().unwrap_or(f64::NEG_INFINITY);
            if !(t > prev && t < end) {
                // Floating-point collision; treat as a rejection.
                ok = false;
                break;
            }
            if out.len() - base >= room {
                return Err(SamplerError::JumpBudgetExceeded { worldline, limit: room });
            }
            out.push(t);
            b = -b;
        }
        if ok && b == s_out {
            return Ok(());
        }
    }
    out.truncate(base);
    Err(SamplerError::RetryLimitExceeded {
        attempts: retry_cap,
    })
}

/// Flip offsets in `(0, length)` of a path from `s_in` to `s_out` under
/// constant field `h` and transverse strength `c`.
#[allow(clippy::too_many_arguments)]
pub fn sample_subpath(
    s_in: i8,
    s_out: i8,
    h: f64,
    length: f64,
    c: f64,
    limits: &UpdateLimits,
    rng: &mut impl Rng,
) -> Result<Vec<f64>, SamplerError> {
    let mut out = Vec::new();
    sample_subpath_into(
        s_in,
        s_out,
        h,
        c,
        0.0,
        length,
        limits.max_jumps,
        limits.retry_cap,
        0,
        rng,
        &mut out,
    )
    .map_err(|e| match e {
        SamplerError::JumpBudgetExceeded { worldline, .. } => SamplerError::JumpBudgetExceeded {
            worldline,
            limit: limits.max_jumps,
        },
        other => other,
    })?;
    Ok(out)
}

/// Reusable scratch space for worldline updates.
#[derive(Debug, Clone)]
pub struct HeatBath {
    limits: UpdateLimits,
    profile: PiecewiseField,
    events: Vec<(f64, f64)>,
    mats: Vec<TransferMatrix>,
    suffix: Vec<Matrix2<f64>>,
    bounds: Vec<i8>,
    jumps: Vec<f64>,
}

impl HeatBath {
    pub fn new(limits: UpdateLimits) -> Self {
        Self {
            limits,
            profile: PiecewiseField::default(),
            events: Vec::new(),
            mats: Vec::new(),
            suffix: Vec::new(),
            bounds: Vec::new(),
            jumps: Vec::new(),
        }
    }

    pub fn limits(&self) -> &UpdateLimits {
        &self.limits
    }

    /// Replace worldline `j` with an exact draw from its conditional given the
    /// rest of the state. Returns the new jump count. On error the state is
    /// left unchanged.
    pub fn resample(
        &mut self,
        state: &mut PimcState,
        j: usize,
        model: &TimModel,
        rng: &mut impl Rng,
    ) -> Result<usize, SamplerError> {
        local_field_profile_into(state, j, model, &mut self.profile, &mut self.events);
        let c = model.transverse()[j].abs();

        if c == 0.0 {
            // Two flat candidates with weights e^{∓∫F}.
            let integral = self.profile.integral();
            let p_up = 0.5 * (1.0 - integral.tanh());
            let s = if rng.random::<f64>() < p_up { 1 } else { -1 };
            state.worldlines[j] = Worldline::flat(s);
            return Ok(0);
        }

        self.mats.clear();
        for (i, &h) in self.profile.values.iter().enumerate() {
            self.mats.push(transfer_matrix(h, c, self.profile.length(i)));
        }
        sample_boundaries_into(&self.mats, &mut self.suffix, &mut self.bounds, rng)?;

        self.jumps.clear();
        let q1 = self.bounds.len();
        for i in 0..q1 {
            let s_in = self.bounds[i];
            let s_out = self.bounds[(i + 1) % q1];
            let room = self.limits.max_jumps.saturating_sub(self.jumps.len());
            sample_subpath_into(
                s_in,
                s_out,
                self.profile.values[i],
                c,
                self.profile.breaks[i],
                self.profile.breaks[i + 1],
                room,
                self.limits.retry_cap,
                j,
                rng,
                &mut self.jumps,
            )
            .map_err(|e| match e {
                SamplerError::JumpBudgetExceeded { .. } => SamplerError::JumpBudgetExceeded {
                    worldline: j,
                    limit: self.limits.max_jumps,
                },
                other => other,
            })?;
        }

        let w = &mut state.worldlines[j];
        w.s0 = self.bounds[0];
        w.jumps.clear();
        w.jumps.extend_from_slice(&self.jumps);
        Ok(w.jumps.len())
    }
}

/// One-shot form of [`HeatBath::resample`].
pub fn resample_worldline(
    state: &mut PimcState,
    j: usize,
    model: &TimModel,
    limits: &UpdateLimits,
    rng: &mut impl Rng,
) -> Result<usize, SamplerError> {
    HeatBath::new(*limits).resample(state, j, model, rng)
}

/// Cap on jumps per worldline and the numbers it was derived from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpBudget {
    pub k: usize,
    /// Maximum flip rate `√(h_max² + Γ_max²) + h_max`.
    pub rate: f64,
    /// `⌈rate · β · e²⌉`.
    pub poisson_term: usize,
    /// `⌈ln(total_updates / target_fail_prob)⌉`.
    pub log_term: usize,
    pub target_fail_prob: f64,
    pub total_updates: u64,
}

/// Largest longitudinal field magnitude a worldline can feel: `ΔJ + max|b|`.
pub fn max_field(model: &TimModel) -> f64 {
    let s = coupling_stats(model);
    s.max_degree as f64 * s.max_coupling + s.max_field
}

pub fn jump_budget(
    model: &TimModel,
    beta: f64,
    target_fail_prob: f64,
    total_updates: u64,
) -> Result<JumpBudget, SamplerError> {
    if total_updates == 0 {
        return Err(SamplerError::InvalidBudget("total_updates must be at least 1"));
    }
    if !(target_fail_prob > 0.0 && target_fail_prob < 1.0) {
        return Err(SamplerError::InvalidBudget("target failure probability must be in (0, 1)"));
    }
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(SamplerError::InvalidBudget("beta must be finite and non-negative"));
    }
    let h_max = max_field(model);
    let gamma_max = coupling_stats(model).max_transverse;
    let rate = h_max.hypot(gamma_max) + h_max;
    let e2 = std::f64::consts::E * std::f64::consts::E;
    let poisson_term = (rate * beta * e2).ceil() as usize;
    let log_term = (total_updates as f64 / target_fail_prob).ln().ceil() as usize;
    Ok(JumpBudget {
        k: poisson_term.max(log_term),
        rate,
        poisson_term,
        log_term,
        target_fail_prob,
        total_updates,
    })
}
