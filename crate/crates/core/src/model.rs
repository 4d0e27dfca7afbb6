//! Generalized transverse-field Ising models.
//!
//! A model on `n` qubits is
//!
//! ```text
//! H = Σ_{i~j} a_ij Z_i Z_j + Σ_i b_i Z_i − Σ_i Γ_i X_i
//! ```
//!
//! This module holds the Hamiltonian data, its validation and loading from
//! JSON, and the temperature thresholds below which the worldline heat-bath
//! chain is provably rapidly mixing.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Planck constant over Boltzmann constant, in kelvin per GHz (exact SI values).
pub const KELVIN_PER_GHZ: f64 = 6.626_070_15e-34 / 1.380_649e-23 * 1e9;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("model must have at least one qubit")]
    Empty,
    #[error("{location}: expected {expected} entries, found {found}")]
    Length {
        location: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("edges[{edge}]: qubit index {index} out of range for n = {n}")]
    IndexOutOfRange { edge: usize, index: usize, n: usize },
    #[error("edges[{edge}]: self-edge on qubit {qubit}")]
    SelfEdge { edge: usize, qubit: usize },
    #[error("edges[{edge}]: duplicate of edges[{first}] for pair ({i}, {j})")]
    DuplicateEdge {
        edge: usize,
        first: usize,
        i: usize,
        j: usize,
    },
    #[error("{location}: non-finite value")]
    NonFinite { location: String },
    #[error("negative frequency {0} GHz")]
    NegativeFrequency(f64),
}

/// One ZZ coupling, stored with `i < j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub a: f64,
}

/// On-disk layout of a model file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelDocument {
    pub n: usize,
    pub edges: Vec<(usize, usize, f64)>,
    pub b: Vec<f64>,
    pub gamma: Vec<f64>,
}

/// A validated transverse-field Ising model. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct TimModel {
    n: usize,
    edges: Vec<Edge>,
    fields: Vec<f64>,
    transverse: Vec<f64>,
    // N(j) = {i : a_ij != 0}, with the coupling.
    neighbors: Vec<Vec<(usize, f64)>>,
}

impl TimModel {
    pub fn new(
        n: usize,
        edges: impl IntoIterator<Item = (usize, usize, f64)>,
        fields: Vec<f64>,
        transverse: Vec<f64>,
    ) -> Result<Self, ModelError> {
        if n == 0 {
            return Err(ModelError::Empty);
        }
        if fields.len() != n {
            return Err(ModelError::Length {
                location: "b",
                expected: n,
                found: fields.len(),
            });
        }
        if transverse.len() != n {
            return Err(ModelError::Length {
                location: "gamma",
                expected: n,
                found: transverse.len(),
            });
        }
        for (k, v) in fields.iter().enumerate() {
            if !v.is_finite() {
                return Err(ModelError::NonFinite {
                    location: format!("b[{k}]"),
                });
            }
        }
        for (k, v) in transverse.iter().enumerate() {
            if !v.is_finite() {
                return Err(ModelError::NonFinite {
                    location: format!("gamma[{k}]"),
                });
            }
        }

        let mut seen = std::collections::HashMap::new();
        let mut out = Vec::new();
        for (k, (i, j, a)) in edges.into_iter().enumerate() {
            for idx in [i, j] {
                if idx >= n {
                    return Err(ModelError::IndexOutOfRange { edge: k, index: idx, n });
                }
            }
            if i == j {
                return Err(ModelError::SelfEdge { edge: k, qubit: i });
            }
            if !a.is_finite() {
                return Err(ModelError::NonFinite {
                    location: format!("edges[{k}]"),
                });
            }
            let (lo, hi) = if i < j { (i, j) } else { (j, i) };
            if let Some(&first) = seen.get(&(lo, hi)) {
                return Err(ModelError::DuplicateEdge {
                    edge: k,
                    first,
                    i: lo,
                    j: hi,
                });
            }
            seen.insert((lo, hi), k);
            out.push(Edge { i: lo, j: hi, a });
        }

        let mut neighbors = vec![Vec::new(); n];
        for e in &out {
            if e.a != 0.0 {
                neighbors[e.i].push((e.j, e.a));
                neighbors[e.j].push((e.i, e.a));
            }
        }
        for list in &mut neighbors {
            list.sort_by_key(|&(k, _)| k);
        }

        Ok(Self {
            n,
            edges: out,
            fields,
            transverse,
            neighbors,
        })
    }

    pub fn from_document(doc: ModelDocument) -> Result<Self, ModelError> {
        Self::new(doc.n, doc.edges, doc.b, doc.gamma)
    }

    pub fn from_json_str(text: &str) -> Result<Self, ModelError> {
        let doc: ModelDocument = serde_json::from_str(text).map_err(|e| ModelError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        Self::from_document(doc)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&text)
    }

    pub fn to_document(&self) -> ModelDocument {
        ModelDocument {
            n: self.n,
            edges: self.edges.iter().map(|e| (e.i, e.j, e.a)).collect(),
            b: self.fields.clone(),
            gamma: self.transverse.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("model document serializes")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Longitudinal fields `b_i`.
    pub fn fields(&self) -> &[f64] {
        &self.fields
    }

    /// Transverse fields `Γ_i`.
    pub fn transverse(&self) -> &[f64] {
        &self.transverse
    }

    /// Neighbors of qubit `j` with their couplings.
    pub fn neighbors(&self, j: usize) -> &[(usize, f64)] {
        &self.neighbors[j]
    }

    /// Qubits with `Γ_i = 0`; their worldlines are classical.
    pub fn degenerate_sites(&self) -> Vec<usize> {
        (0..self.n).filter(|&i| self.transverse[i] == 0.0).collect()
    }

    pub fn is_classical(&self) -> bool {
        self.transverse.iter().all(|&g| g == 0.0)
    }

    /// Diagonal energy `Σ a_ij s_i s_j + Σ b_i s_i` of a spin configuration.
    pub fn classical_energy(&self, spins: &[i8]) -> f64 {
        debug_assert_eq!(spins.len(), self.n);
        let coupling: f64 = self
            .edges
            .iter()
            .map(|e| e.a * f64::from(spins[e.i]) * f64::from(spins[e.j]))
            .sum();
        let field: f64 = self
            .fields
            .iter()
            .zip(spins)
            .map(|(b, &s)| b * f64::from(s))
            .sum();
        coupling + field
    }

    /// Local longitudinal field on `j`: `Σ_{i∈N(j)} a_ij s_i + b_j`.
    pub fn local_field(&self, j: usize, spins: &[i8]) -> f64 {
        self.neighbors[j]
            .iter()
            .map(|&(i, a)| a * f64::from(spins[i]))
            .sum::<f64>()
            + self.fields[j]
    }

    /// Relabel qubits: qubit `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self, ModelError> {
        assert_eq!(perm.len(), self.n);
        let mut b = vec![0.0; self.n];
        let mut g = vec![0.0; self.n];
        for i in 0..self.n {
            b[perm[i]] = self.fields[i];
            g[perm[i]] = self.transverse[i];
        }
        Self::new(
            self.n,
            self.edges.iter().map(|e| (perm[e.i], perm[e.j], e.a)),
            b,
            g,
        )
    }
}

/// Conjugate by `⊗ Z^{(1 − sign Γ_i)/2}`: flips the sign of every negative
/// transverse field. Z-diagonal terms commute with the conjugation.
pub fn cure_sign(model: &TimModel) -> TimModel {
    let mut cured = model.clone();
    for g in &mut cured.transverse {
        *g = g.abs();
    }
    cured
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingStats {
    /// `J = max |a_ij|`.
    pub max_coupling: f64,
    /// `Δ`, the maximum interaction degree.
    pub max_degree: usize,
    pub max_transverse: f64,
    pub max_field: f64,
    /// `Σ_j |a_ij|` for each qubit.
    pub site_abs_sums: Vec<f64>,
}

pub fn coupling_stats(model: &TimModel) -> CouplingStats {
    let max_coupling = model.edges.iter().map(|e| e.a.abs()).fold(0.0, f64::max);
    let max_degree = model.neighbors.iter().map(Vec::len).max().unwrap_or(0);
    let max_transverse = model.transverse.iter().map(|g| g.abs()).fold(0.0, f64::max);
    let max_field = model.fields.iter().map(|b| b.abs()).fold(0.0, f64::max);
    let site_abs_sums = model
        .neighbors
        .iter()
        .map(|nb| nb.iter().map(|&(_, a)| a.abs()).sum())
        .collect();
    CouplingStats {
        max_coupling,
        max_degree,
        max_transverse,
        max_field,
        site_abs_sums,
    }
}

/// An inverse-temperature threshold; `Unbounded` when the model has no
/// interactions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Threshold {
    Bounded(f64),
    Unbounded,
}

impl Threshold {
    pub fn value(self) -> Option<f64> {
        match self {
            Threshold::Bounded(b) => Some(b),
            Threshold::Unbounded => None,
        }
    }

    /// True when `beta` lies at or below the threshold.
    pub fn admits(self, beta: f64) -> bool {
        match self {
            Threshold::Bounded(b) => beta <= b,
            Threshold::Unbounded => true,
        }
    }
}

impl fmt::Display for Threshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Threshold::Bounded(b) => write!(f, "{b}"),
            Threshold::Unbounded => f.write_str("unbounded"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ThresholdReport {
    /// `1 / (2J(Δ + 2))`.
    pub beta_simple: Threshold,
    /// `log(2/Δ + 1) / (4J)`.
    pub beta_log: Threshold,
    /// Root of the degree-weighted contraction rate.
    pub beta_degree_weighted: Threshold,
    n: usize,
    site_couplings: Vec<Vec<f64>>,
}

impl ThresholdReport {
    /// Path-coupling contraction rate at `beta`.
    pub fn alpha_at(&self, beta: f64) -> f64 {
        degree_weighted_alpha(self.n, &self.site_couplings, beta)
    }
}

fn site_abs_couplings(model: &TimModel) -> Vec<Vec<f64>> {
    model
        .neighbors
        .iter()
        .map(|nb| nb.iter().map(|&(_, a)| a.abs()).collect())
        .collect()
}

fn max_site_excess(site_couplings: &[Vec<f64>], beta: f64) -> f64 {
    site_couplings
        .iter()
        .map(|cs| cs.iter().map(|a| (4.0 * beta * a).exp_m1()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn degree_weighted_alpha(n: usize, site_couplings: &[Vec<f64>], beta: f64) -> f64 {
    (2.0 - max_site_excess(site_couplings, beta)) / (2.0 * n as f64)
}

/// `α(β) = (1/2n)[2 − max_i Σ_{j∈N(i)} (e^{4β|a_ij|} − 1)]`.
pub fn contraction_rate(model: &TimModel, beta: f64) -> f64 {
    degree_weighted_alpha(model.n, &site_abs_couplings(model), beta)
}

pub fn beta_thresholds(model: &TimModel) -> ThresholdReport {
    let stats = coupling_stats(model);
    let site_couplings = site_abs_couplings(model);
    let j = stats.max_coupling;
    let delta = stats.max_degree as f64;

    let (beta_simple, beta_log, beta_degree_weighted) = if j > 0.0 && stats.max_degree > 0 {
        let simple = 1.0 / (2.0 * j * (delta + 2.0));
        let log = (2.0 / delta + 1.0).ln() / (4.0 * j);
        let root = bisect_root(&site_couplings, 0.0, log * delta);
        (
            Threshold::Bounded(simple),
            Threshold::Bounded(log),
            Threshold::Bounded(root),
        )
    } else {
        (Threshold::Unbounded, Threshold::Unbounded, Threshold::Unbounded)
    };

    ThresholdReport {
        beta_simple,
        beta_log,
        beta_degree_weighted,
        n: model.n,
        site_couplings,
    }
}

// The excess is increasing in beta; bisect until the bracket stops shrinking.
fn bisect_root(site_couplings: &[Vec<f64>], mut lo: f64, mut hi: f64) -> f64 {
    while max_site_excess(site_couplings, hi) < 2.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if max_site_excess(site_couplings, mid) < 2.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (fl, fh) = (
        (max_site_excess(site_couplings, lo) - 2.0).abs(),
        (max_site_excess(site_couplings, hi) - 2.0).abs(),
    );
    if fl <= fh {
        lo
    } else {
        hi
    }
}

/// Convert an energy in GHz to the equivalent temperature in kelvin.
pub fn ghz_to_kelvin(freq_ghz: f64) -> Result<f64, ModelError> {
    if freq_ghz < 0.0 || freq_ghz.is_nan() {
        return Err(ModelError::NegativeFrequency(freq_ghz));
    }
    Ok(freq_ghz * KELVIN_PER_GHZ)
}

/// Inverse of [`ghz_to_kelvin`].
pub fn kelvin_to_ghz(kelvin: f64) -> f64 {
    kelvin / KELVIN_PER_GHZ
}

/// Spins of basis state `index`: bit `k` set means qubit `k` points down (−1).
pub fn basis_spins(index: usize, n: usize) -> Vec<i8> {
    (0..n).map(|k| if index >> k & 1 == 0 { 1 } else { -1 }).collect()
}

/// Inverse of [`basis_spins`].
pub fn basis_index(spins: &[i8]) -> usize {
    spins
        .iter()
        .enumerate()
        .filter(|(_, &s)| s < 0)
        .fold(0, |acc, (k, _)| acc | 1 << k)
}

/// Pairs `(i, j)` of a 2k-regular circulant graph on `n` vertices with offsets `1..=k`.
pub fn circulant_edges(n: usize, k: usize) -> Vec<(usize, usize)> {
    let mut set = HashSet::new();
    for v in 0..n {
        for d in 1..=k {
            let w = (v + d) % n;
            let e = if v < w { (v, w) } else { (w, v) };
            set.insert(e);
        }
    }
    let mut out: Vec<_> = set.into_iter().collect();
    out.sort_unstable();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn path3() -> TimModel {
        TimModel::new(3, [(0, 1, 0.5), (1, 2, -1.0)], vec![0.0; 3], vec![1.0; 3]).unwrap()
    }

    fn six_regular() -> TimModel {
        let edges = circulant_edges(8, 3);
        let signed = edges
            .iter()
            .enumerate()
            .map(|(k, &(i, j))| (i, j, if k % 3 == 0 { -1.0 } else { 1.0 }));
        TimModel::new(8, signed, vec![0.0; 8], vec![1.0; 8]).unwrap()
    }

    #[test]
    fn loads_minimal_document() {
        let m = TimModel::from_json_str(r#"{"n":2,"edges":[[0,1,1.0]],"b":[0,0],"gamma":[1,1]}"#)
            .unwrap();
        assert_eq!(m.n(), 2);
        assert_eq!(m.edges(), &[Edge { i: 0, j: 1, a: 1.0 }]);
        assert_eq!(m.neighbors(0), &[(1, 1.0)]);
    }

    #[test]
    fn rejects_self_edge() {
        let err = TimModel::from_json_str(r#"{"n":2,"edges":[[0,0,1.0]],"b":[0,0],"gamma":[1,1]}"#)
            .unwrap_err();
        assert!(matches!(err, ModelError::SelfEdge { edge: 0, qubit: 0 }), "{err}");
    }

    #[test]
    fn rejects_duplicate_pair() {
        let err = TimModel::from_json_str(
            r#"{"n":2,"edges":[[0,1,0.5],[1,0,0.3]],"b":[0,0],"gamma":[1,1]}"#,
        )
        .unwrap_err();
        assert!(
            matches!(err, ModelError::DuplicateEdge { edge: 1, first: 0, i: 0, j: 1 }),
            "{err}"
        );
    }

    #[test]
    fn rejects_out_of_range_and_bad_lengths() {
        let err = TimModel::from_json_str(r#"{"n":2,"edges":[[0,2,1.0]],"b":[0,0],"gamma":[1,1]}"#)
            .unwrap_err();
        assert!(matches!(err, ModelError::IndexOutOfRange { index: 2, .. }));
        let err = TimModel::from_json_str(r#"{"n":2,"edges":[],"b":[0],"gamma":[1,1]}"#).unwrap_err();
        assert!(matches!(err, ModelError::Length { location: "b", .. }));
        let err = TimModel::from_json_str(r#"{"n":0,"edges":[],"b":[],"gamma":[]}"#).unwrap_err();
        assert!(matches!(err, ModelError::Empty));
    }

    #[test]
    fn parse_error_reports_location() {
        let err = TimModel::from_json_str("{\n  \"n\": 2,\n  \"edges\": [oops]\n}").unwrap_err();
        match err {
            ModelError::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn cure_sign_cases() {
        let m = TimModel::new(2, [(0, 1, 0.7)], vec![0.1, -0.2], vec![-1.0, 2.0]).unwrap();
        let c = cure_sign(&m);
        assert_eq!(c.transverse(), &[1.0, 2.0]);
        assert_eq!(c.edges(), m.edges());
        assert_eq!(c.fields(), m.fields());

        let m = TimModel::new(2, [(0, 1, 0.7)], vec![0.0; 2], vec![1.0, 1.0]).unwrap();
        assert_eq!(cure_sign(&m), m);

        let m = TimModel::new(2, [], vec![0.0; 2], vec![0.0, -3.0]).unwrap();
        let c = cure_sign(&m);
        assert_eq!(c.transverse(), &[0.0, 3.0]);
        assert_eq!(c.degenerate_sites(), vec![0]);
    }

    #[test]
    fn coupling_stats_examples() {
        let s = coupling_stats(&path3());
        assert_eq!(s.max_coupling, 1.0);
        assert_eq!(s.max_degree, 2);
        assert_eq!(s.site_abs_sums, vec![0.5, 1.5, 1.0]);

        let edgeless = TimModel::new(3, [], vec![0.0; 3], vec![1.0; 3]).unwrap();
        let s = coupling_stats(&edgeless);
        assert_eq!(s.max_coupling, 0.0);
        assert_eq!(s.max_degree, 0);

        let s = coupling_stats(&six_regular());
        assert_eq!(s.max_coupling, 1.0);
        assert_eq!(s.max_degree, 6);
    }

    #[test]
    fn thresholds_for_valence_six() {
        let r = beta_thresholds(&six_regular());
        assert_eq!(r.beta_simple, Threshold::Bounded(0.0625));
        let log = r.beta_log.value().unwrap();
        assert!((log - 0.071_920_518_112_945_23).abs() < 1e-15);
        // Uniform |a| = J: the degree-weighted root coincides with beta_log.
        let dw = r.beta_degree_weighted.value().unwrap();
        assert!((dw - log).abs() < 1e-12);
        assert!(r.alpha_at(dw).abs() < 1e-12);
    }

    #[test]
    fn edgeless_thresholds_unbounded() {
        let m = TimModel::new(4, [], vec![0.3; 4], vec![1.0; 4]).unwrap();
        let r = beta_thresholds(&m);
        assert_eq!(r.beta_simple, Threshold::Unbounded);
        assert_eq!(r.beta_log, Threshold::Unbounded);
        assert_eq!(r.beta_degree_weighted, Threshold::Unbounded);
        for beta in [0.0, 1.0, 100.0] {
            assert_eq!(r.alpha_at(beta), 0.25);
        }
        assert_eq!(r.beta_simple.to_string(), "unbounded");
    }

    #[test]
    fn kelvin_conversion() {
        assert!((ghz_to_kelvin(16.0).unwrap() - 0.767_878_891_738_595_4).abs() < 1e-12);
        assert_eq!(ghz_to_kelvin(0.0).unwrap(), 0.0);
        assert!((ghz_to_kelvin(1.0).unwrap() - 0.047_992_430_733_662_21).abs() < 1e-15);
        assert!(matches!(ghz_to_kelvin(-1.0), Err(ModelError::NegativeFrequency(_))));
        assert!((kelvin_to_ghz(ghz_to_kelvin(3.5).unwrap()) - 3.5).abs() < 1e-12);
    }

    #[test]
    fn json_round_trip() {
        let m = path3();
        assert_eq!(TimModel::from_json_str(&m.to_json()).unwrap(), m);
    }

    fn arb_model() -> impl Strategy<Value = TimModel> {
        (2usize..7).prop_flat_map(|n| {
            let pairs: Vec<(usize, usize)> = (0..n)
                .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
                .collect();
            let m = pairs.len();
            (
                Just(n),
                Just(pairs),
                proptest::collection::vec(proptest::option::of(-2.0f64..2.0), m),
                proptest::collection::vec(-1.0f64..1.0, n),
                proptest::collection::vec(-2.0f64..2.0, n),
            )
                .prop_map(|(n, pairs, couplings, b, g)| {
                    let edges = pairs
                        .into_iter()
                        .zip(couplings)
                        .filter_map(|((i, j), a)| a.map(|a| (i, j, a)));
                    TimModel::new(n, edges, b, g).unwrap()
                })
        })
    }

    proptest! {
        #[test]
        fn threshold_ordering(m in arb_model()) {
            let r = beta_thresholds(&m);
            if let (Some(s), Some(l), Some(d)) =
                (r.beta_simple.value(), r.beta_log.value(), r.beta_degree_weighted.value())
            {
                prop_assert!(s <= l);
                prop_assert!(l <= d * (1.0 + 1e-12));
                prop_assert!(r.alpha_at(d).abs() < 1e-12);
                prop_assert!(r.alpha_at(0.5 * d) > r.alpha_at(d));
                prop_assert!(r.alpha_at(d) > r.alpha_at(1.5 * d));
            }
        }

        #[test]
        fn uniform_couplings_equalize_log_and_degree_weighted(n in 3usize..9, k in 1usize..3, jv in 0.1f64..3.0) {
            prop_assume!(2 * k < n);
            let edges = circulant_edges(n, k).into_iter().map(|(i, j)| (i, j, -jv));
            let m = TimModel::new(n, edges, vec![0.0; n], vec![1.0; n]).unwrap();
            let r = beta_thresholds(&m);
            let l = r.beta_log.value().unwrap();
            let d = r.beta_degree_weighted.value().unwrap();
            prop_assert!((l - d).abs() <= 1e-12 * l.max(1.0));
        }

        #[test]
        fn cure_sign_idempotent(m in arb_model()) {
            let once = cure_sign(&m);
            prop_assert_eq!(cure_sign(&once), once.clone());
            prop_assert!(once.transverse().iter().all(|&g| g >= 0.0));
        }

        #[test]
        fn stats_invariant_under_relabeling(m in arb_model(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut perm: Vec<usize> = (0..m.n()).collect();
            perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let p = m.permuted(&perm).unwrap();
            let (a, b) = (coupling_stats(&m), coupling_stats(&p));
            prop_assert_eq!(a.max_coupling, b.max_coupling);
            prop_assert_eq!(a.max_degree, b.max_degree);
            for (i, &target) in perm.iter().enumerate() {
                prop_assert!((a.site_abs_sums[i] - b.site_abs_sums[target]).abs() < 1e-12);
                prop_assert!(a.site_abs_sums[i] <= a.max_coupling * a.max_degree as f64 + 1e-12);
            }
        }
    }
}
