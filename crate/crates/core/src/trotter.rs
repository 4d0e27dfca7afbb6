//! Exact desk-scale oracles.
//!
//! The discrete quantum-to-classical mapping on `L` replicas, exact
//! single-worldline conditionals, the conditional TV bound, the full heat-bath
//! transition matrix, and dense diagonalization of the quantum Hamiltonian.
//! Everything here enumerates, so every entry point carries a size guard.

use nalgebra::{DMatrix, SymmetricEigen};
use thiserror::Error;

use crate::model::{basis_spins, TimModel};

pub const MAX_ENUMERATED_SPINS: usize = 24;
pub const MAX_CONDITIONAL_REPLICAS: usize = 16;
pub const MAX_TRANSITION_SPINS: usize = 12;
pub const MAX_DENSE_QUBITS: usize = 10;
pub const MAX_CLASSICAL_QUBITS: usize = 20;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("size guard: {what} needs {size}, limit is {limit}")]
    SizeGuard {
        what: &'static str,
        size: usize,
        limit: usize,
    },
    #[error("configurations have different shapes")]
    ShapeMismatch,
    #[error("configurations differ on worldlines {0:?}; expected at most one")]
    MultipleWorldlines(Vec<usize>),
    #[error("configurations differ on the target worldline {0}")]
    DiffersOnTarget(usize),
    #[error("Trotter number must be at least 2, got {0}")]
    TrotterNumber(usize),
}

fn guard(what: &'static str, size: usize, limit: usize) -> Result<(), OracleError> {
    if size > limit {
        Err(OracleError::SizeGuard { what, size, limit })
    } else {
        Ok(())
    }
}

/// `L × n` classical spins; `spins[i * n + j]` is replica `i`, qubit `j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiscreteConfig {
    l: usize,
    n: usize,
    spins: Vec<i8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConfigViolation {
    Shape { expected: usize, found: usize },
    NotASpin { replica: usize, qubit: usize, value: i8 },
    TrotterNumber(usize),
}

impl DiscreteConfig {
    pub fn new(l: usize, n: usize, spins: Vec<i8>) -> Self {
        assert_eq!(spins.len(), l * n, "spin array must be L×n");
        Self { l, n, spins }
    }

    pub fn uniform(l: usize, n: usize, spin: i8) -> Self {
        Self::new(l, n, vec![spin; l * n])
    }

    /// Every replica equal to `state`.
    pub fn constant(l: usize, state: &[i8]) -> Self {
        let n = state.len();
        Self::new(l, n, state.repeat(l))
    }

    /// Configuration number `index` in the enumeration order used by the
    /// oracles (bit `i * n + j` set means `z_ij = −1`).
    pub fn from_index(l: usize, n: usize, index: usize) -> Self {
        Self::new(l, n, basis_spins(index, l * n))
    }

    pub fn trotter_number(&self) -> usize {
        self.l
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn spin(&self, replica: usize, qubit: usize) -> i8 {
        self.spins[replica * self.n + qubit]
    }

    pub fn replica(&self, i: usize) -> &[i8] {
        &self.spins[i * self.n..(i + 1) * self.n]
    }

    pub fn worldline(&self, j: usize) -> Vec<i8> {
        (0..self.l).map(|i| self.spin(i, j)).collect()
    }

    pub fn set_worldline(&mut self, j: usize, values: &[i8]) {
        assert_eq!(values.len(), self.l);
        for (i, &s) in values.iter().enumerate() {
            self.spins[i * self.n + j] = s;
        }
    }

    pub fn flipped(&self) -> Self {
        Self::new(self.l, self.n, self.spins.iter().map(|s| -s).collect())
    }

    pub fn index(&self) -> usize {
        crate::model::basis_index(&self.spins)
    }

    pub fn validate(&self) -> Vec<ConfigViolation> {
        let mut out = Vec::new();
        if self.l < 2 {
            out.push(ConfigViolation::TrotterNumber(self.l));
        }
        if self.spins.len() != self.l * self.n {
            out.push(ConfigViolation::Shape {
                expected: self.l * self.n,
                found: self.spins.len(),
            });
            return out;
        }
        for i in 0..self.l {
            for j in 0..self.n {
                let v = self.spin(i, j);
                if v != 1 && v != -1 {
                    out.push(ConfigViolation::NotASpin {
                        replica: i,
                        qubit: j,
                        value: v,
                    });
                }
            }
        }
        out
    }
}

/// Sign changes along a worldline, counting the wrap from replica `L` back to 1.
pub fn periodic_jumps(worldline: &[i8]) -> usize {
    let l = worldline.len();
    (0..l).filter(|&k| worldline[k] != worldline[(k + 1) % l]).count()
}

/// `tanh(βΓ/L)^jumps`, with `0^0 = 1` when `Γ = 0`.
pub fn phi_from_jumps(jumps: usize, beta: f64, gamma: f64, l: usize) -> f64 {
    if jumps == 0 {
        return 1.0;
    }
    if gamma == 0.0 {
        return 0.0;
    }
    (beta * gamma / l as f64).tanh().powi(jumps as i32)
}

pub fn worldline_phi(worldline: &[i8], beta: f64, gamma: f64, l: usize) -> f64 {
    phi_from_jumps(periodic_jumps(worldline), beta, gamma, l)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalWeight {
    /// `−(β/L) Σ_i E_cl(z_i)`.
    pub exponent: f64,
    pub phis: Vec<f64>,
    pub weight: f64,
}

pub fn classical_weight(config: &DiscreteConfig, model: &TimModel, beta: f64) -> ClassicalWeight {
    let l = config.trotter_number();
    let energy: f64 = (0..l).map(|i| model.classical_energy(config.replica(i))).sum();
    let exponent = -beta / l as f64 * energy;
    let phis: Vec<f64> = (0..model.n())
        .map(|j| worldline_phi(&config.worldline(j), beta, model.transverse()[j], l))
        .collect();
    let weight = exponent.exp() * phis.iter().product::<f64>();
    ClassicalWeight {
        exponent,
        phis,
        weight,
    }
}

/// Sum of [`classical_weight`] over all `2^{nL}` configurations.
pub fn trotter_partition(model: &TimModel, beta: f64, l: usize) -> Result<f64, OracleError> {
    if l < 2 {
        return Err(OracleError::TrotterNumber(l));
    }
    let size = model.n() * l;
    guard("trotter enumeration (n·L spins)", size, MAX_ENUMERATED_SPINS)?;
    Ok((0..1usize << size)
        .map(|idx| classical_weight(&DiscreteConfig::from_index(l, model.n(), idx), model, beta).weight)
        .sum())
}

/// Symmetric transfer matrix `D^{1/2} M D^{1/2}` between adjacent replicas.
/// `Tr[S^L]` equals [`trotter_partition`].
pub fn trotter_transfer_matrix(
    model: &TimModel,
    beta: f64,
    l: usize,
) -> Result<DMatrix<f64>, OracleError> {
    if l < 2 {
        return Err(OracleError::TrotterNumber(l));
    }
    let n = model.n();
    guard("trotter transfer matrix (qubits)", n, MAX_DENSE_QUBITS)?;
    let dim = 1usize << n;
    let eps = beta / l as f64;
    let half: Vec<f64> = (0..dim)
        .map(|z| (-0.5 * eps * model.classical_energy(&basis_spins(z, n))).exp())
        .collect();
    let t: Vec<f64> = model
        .transverse()
        .iter()
        .map(|&g| (eps * g).tanh())
        .collect();
    Ok(DMatrix::from_fn(dim, dim, |a, b| {
        let diff = a ^ b;
        let m: f64 = (0..n)
            .filter(|&k| diff >> k & 1 == 1)
            .map(|k| t[k])
            .product();
        half[a] * m * half[b]
    }))
}

fn matrix_power(m: &DMatrix<f64>, mut e: usize) -> DMatrix<f64> {
    let mut result = DMatrix::identity(m.nrows(), m.ncols());
    let mut base = m.clone();
    while e > 0 {
        if e & 1 == 1 {
            result = &result * &base;
        }
        e >>= 1;
        if e > 0 {
            base = &base * &base;
        }
    }
    result
}

pub fn trotter_partition_transfer(model: &TimModel, beta: f64, l: usize) -> Result<f64, OracleError> {
    let s = trotter_transfer_matrix(model, beta, l)?;
    Ok(matrix_power(&s, l).trace())
}

/// Marginal of the normalised discrete measure on a single replica.
pub fn replica_marginal(model: &TimModel, beta: f64, l: usize) -> Result<Vec<f64>, OracleError> {
    let s = trotter_transfer_matrix(model, beta, l)?;
    let p = matrix_power(&s, l);
    let tr = p.trace();
    Ok(p.diagonal().iter().map(|d| d / tr).collect())
}

/// `g_j(z̄′_j | z) = Σ_k [Σ_{i∈N(j)} a_ij z_ki z′_kj + b_j z′_kj]`.
pub fn conditional_energy(j: usize, candidate: &[i8], config: &DiscreteConfig, model: &TimModel) -> f64 {
    debug_assert_eq!(candidate.len(), config.trotter_number());
    candidate
        .iter()
        .enumerate()
        .map(|(k, &s)| {
            let replica = config.replica(k);
            let field: f64 = model
                .neighbors(j)
                .iter()
                .map(|&(i, a)| a * f64::from(replica[i]))
                .sum();
            (field + model.fields()[j]) * f64::from(s)
        })
        .sum()
}

/// Candidate worldline number `index` (bit `k` set means `−1` at replica `k`).
pub fn candidate_worldline(index: usize, l: usize) -> Vec<i8> {
    basis_spins(index, l)
}

/// Exact heat-bath conditional of worldline `j`, indexed by [`candidate_worldline`].
pub fn exact_conditional(
    j: usize,
    config: &DiscreteConfig,
    model: &TimModel,
    beta: f64,
) -> Result<Vec<f64>, OracleError> {
    let l = config.trotter_number();
    guard("exact conditional (replicas)", l, MAX_CONDITIONAL_REPLICAS)?;
    let gamma = model.transverse()[j];
    let scale = beta / l as f64;
    let logs: Vec<f64> = (0..1usize << l)
        .map(|c| {
            let cand = candidate_worldline(c, l);
            let phi = worldline_phi(&cand, beta, gamma, l);
            if phi == 0.0 {
                f64::NEG_INFINITY
            } else {
                -scale * conditional_energy(j, &cand, config, model) + phi.ln()
            }
        })
        .collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logs.iter().map(|x| (x - top).exp()).collect();
    let total: f64 = w.iter().sum();
    Ok(w.into_iter().map(|x| x / total).collect())
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    debug_assert_eq!(p.len(), q.len());
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TvCheck {
    pub tv: f64,
    pub bound: f64,
    pub holds: bool,
}

/// TV distance between the conditionals of worldline `j` under two
/// configurations that differ on at most one other worldline `i`, against
/// `½(e^{4β|a_ij|} − 1)`.
pub fn conditional_tv(
    j: usize,
    z: &DiscreteConfig,
    z_prime: &DiscreteConfig,
    model: &TimModel,
    beta: f64,
) -> Result<TvCheck, OracleError> {
    if z.n() != z_prime.n() || z.trotter_number() != z_prime.trotter_number() {
        return Err(OracleError::ShapeMismatch);
    }
    let differing: Vec<usize> = (0..z.n())
        .filter(|&w| z.worldline(w) != z_prime.worldline(w))
        .collect();
    if differing.len() > 1 {
        return Err(OracleError::MultipleWorldlines(differing));
    }
    if differing == [j] {
        return Err(OracleError::DiffersOnTarget(j));
    }
    let coupling = differing
        .first()
        .and_then(|&i| model.neighbors(j).iter().find(|&&(k, _)| k == i))
        .map_or(0.0, |&(_, a)| a.abs());
    let p = exact_conditional(j, z, model, beta)?;
    let q = exact_conditional(j, z_prime, model, beta)?;
    let tv = total_variation(&p, &q);
    let bound = 0.5 * (4.0 * beta * coupling).exp_m1();
    Ok(TvCheck {
        tv,
        bound,
        holds: tv <= bound + 1e-15,
    })
}

/// Heat-bath chain on the discrete configurations: pick a worldline uniformly
/// and resample it from its exact conditional. Returns `(P, π)`.
pub fn heat_bath_transition_matrix(
    model: &TimModel,
    beta: f64,
    l: usize,
) -> Result<(DMatrix<f64>, Vec<f64>), OracleError> {
    if l < 2 {
        return Err(OracleError::TrotterNumber(l));
    }
    let n = model.n();
    guard("heat-bath transition matrix (n·L spins)", n * l, MAX_TRANSITION_SPINS)?;
    let dim = 1usize << (n * l);
    let mut p = DMatrix::zeros(dim, dim);
    for x in 0..dim {
        let config = DiscreteConfig::from_index(l, n, x);
        for j in 0..n {
            let cond = exact_conditional(j, &config, model, beta)?;
            for (c, prob) in cond.iter().enumerate() {
                let mut y = config.clone();
                y.set_worldline(j, &candidate_worldline(c, l));
                p[(x, y.index())] += prob / n as f64;
            }
        }
    }
    let weights: Vec<f64> = (0..dim)
        .map(|x| classical_weight(&DiscreteConfig::from_index(l, n, x), model, beta).weight)
        .collect();
    let total: f64 = weights.iter().sum();
    let pi = weights.into_iter().map(|w| w / total).collect();
    Ok((p, pi))
}

/// `‖πP − π‖_∞`.
pub fn stationarity_residual(p: &DMatrix<f64>, pi: &[f64]) -> f64 {
    (0..pi.len())
        .map(|y| {
            let flow: f64 = (0..pi.len()).map(|x| pi[x] * p[(x, y)]).sum();
            (flow - pi[y]).abs()
        })
        .fold(0.0, f64::max)
}

/// Exact thermal data of the quantum model.
#[derive(Debug, Clone)]
pub struct ExactThermal {
    pub beta: f64,
    pub log_partition: f64,
    /// `μ_β(z) = ⟨z|e^{−βH}|z⟩ / 𝒵`, indexed by [`basis_spins`].
    pub mu: Vec<f64>,
    pub z_mean: Vec<f64>,
    pub x_mean: Vec<f64>,
}

impl ExactThermal {
    pub fn partition(&self) -> f64 {
        self.log_partition.exp()
    }

    /// Thermal expectation of a diagonal observable.
    pub fn expect_diag(&self, f: impl Fn(&[i8]) -> f64) -> f64 {
        let n = self.z_mean.len();
        self.mu
            .iter()
            .enumerate()
            .map(|(z, p)| p * f(&basis_spins(z, n)))
            .sum()
    }
}

pub fn hamiltonian_matrix(model: &TimModel) -> Result<DMatrix<f64>, OracleError> {
    let n = model.n();
    guard("dense Hamiltonian (qubits)", n, MAX_DENSE_QUBITS)?;
    let dim = 1usize << n;
    let mut h = DMatrix::zeros(dim, dim);
    for z in 0..dim {
        h[(z, z)] = model.classical_energy(&basis_spins(z, n));
        for (k, &g) in model.transverse().iter().enumerate() {
            if g != 0.0 {
                h[(z ^ (1 << k), z)] -= g;
            }
        }
    }
    Ok(h)
}

pub fn exact_thermal(model: &TimModel, beta: f64) -> Result<ExactThermal, OracleError> {
    let n = model.n();
    let h = hamiltonian_matrix(model)?;
    let dim = h.nrows();
    let eig = SymmetricEigen::new(h);
    let e_min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = eig
        .eigenvalues
        .iter()
        .map(|&e| (-beta * (e - e_min)).exp())
        .collect();
    let total: f64 = w.iter().sum();
    let log_partition = -beta * e_min + total.ln();

    let v = &eig.eigenvectors;
    let mu: Vec<f64> = (0..dim)
        .map(|z| (0..dim).map(|k| w[k] * v[(z, k)] * v[(z, k)]).sum::<f64>() / total)
        .collect();
    let z_mean = (0..n)
        .map(|q| {
            mu.iter()
                .enumerate()
                .map(|(z, p)| if z >> q & 1 == 0 { *p } else { -p })
                .sum()
        })
        .collect();
    let x_mean = (0..n)
        .map(|q| {
            (0..dim)
                .map(|k| {
                    let overlap: f64 = (0..dim).map(|z| v[(z, k)] * v[(z ^ (1 << q), k)]).sum();
                    w[k] * overlap
                })
                .sum::<f64>()
                / total
        })
        .collect();
    Ok(ExactThermal {
        beta,
        log_partition,
        mu,
        z_mean,
        x_mean,
    })
}

/// Gibbs distribution of the diagonal part alone, `e^{−βE_cl(z)} / Σ`.
pub fn classical_gibbs(model: &TimModel, beta: f64) -> Result<Vec<f64>, OracleError> {
    let n = model.n();
    guard("classical enumeration (qubits)", n, MAX_CLASSICAL_QUBITS)?;
    let logs: Vec<f64> = (0..1usize << n)
        .map(|z| -beta * model.classical_energy(&basis_spins(z, n)))
        .collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logs.iter().map(|x| (x - top).exp()).collect();
    let total: f64 = w.iter().sum();
    Ok(w.into_iter().map(|x| x / total).collect())
}

/// `log Σ_z e^{−βE_cl(z)}`.
pub fn classical_log_partition(model: &TimModel, beta: f64) -> Result<f64, OracleError> {
    let n = model.n();
    guard("classical enumeration (qubits)", n, MAX_CLASSICAL_QUBITS)?;
    let logs: Vec<f64> = (0..1usize << n)
        .map(|z| -beta * model.classical_energy(&basis_spins(z, n)))
        .collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(top + logs.iter().map(|x| (x - top).exp()).sum::<f64>().ln())
}
