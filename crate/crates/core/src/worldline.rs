//! Continuous imaginary-time worldlines.
//!
//! A worldline is an initial spin plus the sorted times in `(0, β)` at which
//! it flips. The state of the chain is one worldline per qubit. The cavity
//! field felt by worldline `j` is piecewise constant between the jump times
//! of its neighbors.

use std::fmt::Write as _;

use thiserror::Error;

use crate::model::TimModel;

#[derive(Debug, Error, PartialEq)]
pub enum WorldlineError {
    #[error("time {t} outside [0, {beta})")]
    TimeOutOfRange { t: f64, beta: f64 },
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Worldline {
    pub s0: i8,
    pub jumps: Vec<f64>,
}

impl Worldline {
    pub fn flat(s0: i8) -> Self {
        Self {
            s0,
            jumps: Vec::new(),
        }
    }

    pub fn with_jumps(s0: i8, jumps: Vec<f64>) -> Self {
        Self { s0, jumps }
    }

    pub fn jump_count(&self) -> usize {
        self.jumps.len()
    }

    /// Spin at `t`: `s0` flipped once per jump at or before `t`. No range check.
    #[inline]
    pub fn spin_at_unchecked(&self, t: f64) -> i8 {
        let passed = self.jumps.partition_point(|&x| x <= t);
        if passed % 2 == 0 {
            self.s0
        } else {
            -self.s0
        }
    }

    /// `∫_0^β z(t) dt`.
    pub fn signed_time(&self, beta: f64) -> f64 {
        let mut acc = 0.0;
        let mut prev = 0.0;
        let mut s = f64::from(self.s0);
        for &t in &self.jumps {
            acc += s * (t - prev);
            prev = t;
            s = -s;
        }
        acc + s * (beta - prev)
    }
}

pub fn spin_at(w: &Worldline, t: f64, beta: f64) -> Result<i8, WorldlineError> {
    if !(0.0..beta).contains(&t) {
        return Err(WorldlineError::TimeOutOfRange { t, beta });
    }
    Ok(w.spin_at_unchecked(t))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PimcState {
    pub beta: f64,
    pub worldlines: Vec<Worldline>,
}

impl PimcState {
    /// All worldlines flat with the given spins.
    pub fn flat(beta: f64, spins: &[i8]) -> Self {
        Self {
            beta,
            worldlines: spins.iter().map(|&s| Worldline::flat(s)).collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.worldlines.len()
    }

    pub fn total_jumps(&self) -> usize {
        self.worldlines.iter().map(Worldline::jump_count).sum()
    }

    /// Plain-text checkpoint: a `beta` header, then one `s0, [t_1, …, t_m]` line per worldline.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "# pimc worldline state").unwrap();
        writeln!(out, "beta = {:?}", self.beta).unwrap();
        writeln!(out, "n = {}", self.n()).unwrap();
        for w in &self.worldlines {
            let times: Vec<String> = w.jumps.iter().map(|t| format!("{t:?}")).collect();
            writeln!(out, "{}, [{}]", w.s0, times.join(", ")).unwrap();
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, WorldlineError> {
        let err = |line: usize, message: &str| WorldlineError::Format {
            line,
            message: message.to_string(),
        };
        let mut beta = None;
        let mut n = None;
        let mut worldlines = Vec::new();
        for (k, raw) in text.lines().enumerate() {
            let line_no = k + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(rest) = line.strip_prefix("beta") {
                let v = rest.trim_start().strip_prefix('=').ok_or_else(|| err(line_no, "expected `beta = <value>`"))?;
                beta = Some(v.trim().parse::<f64>().map_err(|e| err(line_no, &e.to_string()))?);
                continue;
            }
            if let Some(rest) = line.strip_prefix("n ") {
                let v = rest.trim_start().strip_prefix('=').ok_or_else(|| err(line_no, "expected `n = <count>`"))?;
                n = Some(v.trim().parse::<usize>().map_err(|e| err(line_no, &e.to_string()))?);
                continue;
            }
            let (spin, rest) = line.split_once(',').ok_or_else(|| err(line_no, "expected `s0, [times]`"))?;
            let s0: i8 = spin.trim().parse().map_err(|_| err(line_no, "initial spin must be 1 or -1"))?;
            if s0 != 1 && s0 != -1 {
                return Err(err(line_no, "initial spin must be 1 or -1"));
            }
            let body = rest
                .trim()
                .strip_prefix('[')
                .and_then(|r| r.strip_suffix(']'))
                .ok_or_else(|| err(line_no, "jump times must be bracketed"))?;
            let jumps = body
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<f64>().map_err(|e| err(line_no, &e.to_string())))
                .collect::<Result<Vec<_>, _>>()?;
            worldlines.push(Worldline { s0, jumps });
        }
        let beta = beta.ok_or_else(|| err(0, "missing beta"))?;
        if let Some(n) = n {
            if n != worldlines.len() {
                return Err(err(0, &format!("header says n = {n}, found {} worldlines", worldlines.len())));
            }
        }
        Ok(Self { beta, worldlines })
    }
}

/// Spins of every worldline at imaginary time `t`.
pub fn read_timeslice(state: &PimcState, t: f64) -> Result<Vec<i8>, WorldlineError> {
    state
        .worldlines
        .iter()
        .map(|w| spin_at(w, t, state.beta))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum StateViolation {
    BadBeta(f64),
    NotASpin { worldline: usize, value: i8 },
    Unordered { worldline: usize, index: usize },
    OutOfRange { worldline: usize, time: f64 },
    OddParity { worldline: usize, jumps: usize },
    OverBudget { worldline: usize, jumps: usize, limit: usize },
}

/// Structural checks on a state. Jump times must lie strictly inside `(0, β)`
/// so that `spin_at(·, 0) = s0`.
pub fn validate_state(state: &PimcState, jump_limit: Option<usize>) -> Vec<StateViolation> {
    let mut out = Vec::new();
    if !(state.beta >= 0.0 && state.beta.is_finite()) {
        out.push(StateViolation::BadBeta(state.beta));
    }
    for (k, w) in state.worldlines.iter().enumerate() {
        if w.s0 != 1 && w.s0 != -1 {
            out.push(StateViolation::NotASpin {
                worldline: k,
                value: w.s0,
            });
        }
        for (i, pair) in w.jumps.windows(2).enumerate() {
            if pair[1] <= pair[0] {
                out.push(StateViolation::Unordered {
                    worldline: k,
                    index: i + 1,
                });
            }
        }
        for &t in &w.jumps {
            if !(t > 0.0 && t < state.beta) {
                out.push(StateViolation::OutOfRange { worldline: k, time: t });
            }
        }
        if w.jumps.len() % 2 == 1 {
            out.push(StateViolation::OddParity {
                worldline: k,
                jumps: w.jumps.len(),
            });
        }
        if let Some(limit) = jump_limit {
            if w.jumps.len() > limit {
                out.push(StateViolation::OverBudget {
                    worldline: k,
                    jumps: w.jumps.len(),
                    limit,
                });
            }
        }
    }
    out
}

/// Piecewise-constant cavity field: `values[i]` holds on `[breaks[i], breaks[i+1])`,
/// with `breaks[0] = 0` and `breaks[q+1] = β`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PiecewiseField {
    pub breaks: Vec<f64>,
    pub values: Vec<f64>,
}

impl PiecewiseField {
    pub fn constant(h: f64, beta: f64) -> Self {
        Self {
            breaks: vec![0.0, beta],
            values: vec![h],
        }
    }

    pub fn segment_count(&self) -> usize {
        self.values.len()
    }

    pub fn beta(&self) -> f64 {
        *self.breaks.last().expect("profile has breakpoints")
    }

    pub fn length(&self, i: usize) -> f64 {
        self.breaks[i + 1] - self.breaks[i]
    }

    pub fn lengths(&self) -> impl Iterator<Item = f64> + '_ {
        self.breaks.windows(2).map(|w| w[1] - w[0])
    }

    pub fn value_at(&self, t: f64) -> f64 {
        let idx = self.breaks.partition_point(|&b| b <= t);
        self.values[idx.saturating_sub(1).min(self.values.len() - 1)]
    }

    /// `∫_0^β F(t) dt`.
    pub fn integral(&self) -> f64 {
        self.values.iter().zip(self.lengths()).map(|(h, l)| h * l).sum()
    }
}

/// Cavity field on worldline `j`: `Σ_{i∈N(j)} a_ij z_i(t) + b_j`.
pub fn local_field_profile(state: &PimcState, j: usize, model: &TimModel) -> PiecewiseField {
    let mut profile = PiecewiseField::default();
    let mut events = Vec::new();
    local_field_profile_into(state, j, model, &mut profile, &mut events);
    profile
}

/// Allocation-reusing form of [`local_field_profile`]. `events` is scratch.
pub fn local_field_profile_into(
    state: &PimcState,
    j: usize,
    model: &TimModel,
    profile: &mut PiecewiseField,
    events: &mut Vec<(f64, f64)>,
) {
    profile.breaks.clear();
    profile.values.clear();
    events.clear();

    let mut h = model.fields()[j];
    for &(i, a) in model.neighbors(j) {
        let w = &state.worldlines[i];
        let mut s = f64::from(w.s0);
        h += a * s;
        for &t in &w.jumps {
            // Flipping s changes the field by −2as.
            events.push((t, -2.0 * a * s));
            s = -s;
        }
    }
    events.sort_unstable_by(|x, y| x.0.total_cmp(&y.0));

    profile.breaks.push(0.0);
    let mut k = 0;
    while k < events.len() {
        let t = events[k].0;
        profile.values.push(h);
        profile.breaks.push(t);
        while k < events.len() && events[k].0 == t {
            h += events[k].1;
            k += 1;
        }
    }
    profile.values.push(h);
    profile.breaks.push(state.beta);
}
