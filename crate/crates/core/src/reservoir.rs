//! Echo state network construction, driving and evaluation.
//!
//! The state update is
//!
//! ```text
//! z(t) = W a(t-1) + w_in u(t) + w_fb f(t-1) + mu_b
//! a(t) = (1 - gamma) a(t-1) + tanh(z(t)) * xi(t),   xi_i ~ N(1, epsilon^2)
//! x(t) = a(t) . w_out
//! ```
//!
//! where `f` is the teacher signal while training and the network's own
//! output while predicting.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// RNG stream used for reservoir construction; noise uses [`NOISE_STREAM`].
const BUILD_STREAM: u64 = 0;
const NOISE_STREAM: u64 = 1;

/// The eight tunable reservoir hyperparameters, in natural units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    /// Standard deviation of the reservoir weights.
    pub sigma_res: f64,
    /// Mean of the reservoir weights.
    pub mu_res: f64,
    /// Half-range of the uniform input weights.
    pub omega_in: f64,
    /// Half-range of the uniform feedback weights.
    pub omega_fb: f64,
    /// Probability that a reservoir edge is dropped.
    pub sparsity: f64,
    /// Leakage.
    pub gamma: f64,
    /// Constant bias added to every raw potential.
    pub mu_b: f64,
    /// Standard deviation of the multiplicative internal noise.
    pub epsilon: f64,
}

impl Hyperparameters {
    pub const NAMES: [&'static str; 8] = [
        "sigma_res",
        "mu_res",
        "omega_in",
        "omega_fb",
        "sparsity",
        "gamma",
        "mu_b",
        "epsilon",
    ];

    pub fn from_array(v: [f64; 8]) -> Self {
        Hyperparameters {
            sigma_res: v[0],
            mu_res: v[1],
            omega_in: v[2],
            omega_fb: v[3],
            sparsity: v[4],
            gamma: v[5],
            mu_b: v[6],
            epsilon: v[7],
        }
    }

    pub fn to_array(&self) -> [f64; 8] {
        [
            self.sigma_res,
            self.mu_res,
            self.omega_in,
            self.omega_fb,
            self.sparsity,
            self.gamma,
            self.mu_b,
            self.epsilon,
        ]
    }

    /// Index of a hyperparameter by name, in [`Hyperparameters::NAMES`] order.
    pub fn index_of(name: &str) -> Result<usize> {
        Self::NAMES
            .iter()
            .position(|n| *n == name)
            .ok_or_else(|| Error::UnknownParameter {
                name: name.to_string(),
                valid: Self::NAMES.join(", "),
            })
    }

    pub fn get(&self, name: &str) -> Result<f64> {
        Ok(self.to_array()[Self::index_of(name)?])
    }

    pub fn with(&self, name: &str, value: f64) -> Result<Self> {
        let mut v = self.to_array();
        v[Self::index_of(name)?] = value;
        Ok(Self::from_array(v))
    }

    pub fn validate(&self) -> Result<()> {
        if self.to_array().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("hyperparameters"));
        }
        if !(0.0..=1.0).contains(&self.sparsity) {
            return Err(Error::InvalidArgument(format!(
                "sparsity {} outside [0, 1]",
                self.sparsity
            )));
        }
        for (name, v) in [
            ("sigma_res", self.sigma_res),
            ("omega_in", self.omega_in),
            ("omega_fb", self.omega_fb),
            ("epsilon", self.epsilon),
        ] {
            if v < 0.0 {
                return Err(Error::InvalidArgument(format!("{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TopologyKind {
    Sparse,
    Permutation,
    Chain,
    Ring,
}

impl TopologyKind {
    pub const ALL: [TopologyKind; 4] = [
        TopologyKind::Sparse,
        TopologyKind::Permutation,
        TopologyKind::Chain,
        TopologyKind::Ring,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TopologyKind::Sparse => "sparse",
            TopologyKind::Permutation => "permutation",
            TopologyKind::Chain => "chain",
            TopologyKind::Ring => "ring",
        }
    }
}

impl fmt::Display for TopologyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TopologyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TopologyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown topology `{s}`; expected one of sparse, permutation, chain, ring"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topology {
    pub kind: TopologyKind,
    pub n: usize,
}

impl Topology {
    pub fn new(kind: TopologyKind, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("neuron count must be >= 1".into()));
        }
        Ok(Topology { kind, n })
    }

    /// Number of candidate edges before any are dropped.
    pub fn structural_edges(&self) -> usize {
        match self.kind {
            TopologyKind::Sparse => self.n * self.n,
            TopologyKind::Chain => self.n - 1,
            TopologyKind::Ring | TopologyKind::Permutation => self.n,
        }
    }

    /// Expected number of inputs per neuron once edges are dropped with
    /// probability `sparsity`.
    pub fn average_in_degree(&self, sparsity: f64) -> f64 {
        (1.0 - sparsity) * self.structural_edges() as f64 / self.n as f64
    }
}

/// Square matrix in compressed sparse row form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Triplets", into = "Triplets")]
pub struct SparseMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    values: Vec<f64>,
}

/// Serialized form of [`SparseMatrix`].
#[derive(Debug, Clone, Serialize, Deserialize)]
struct Triplets {
    n: usize,
    rows: Vec<usize>,
    cols: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds from `(row, col, value)` entries; duplicates are not merged.
    pub fn from_triplets(n: usize, mut entries: Vec<(usize, usize, f64)>) -> Result<Self> {
        if entries.iter().any(|&(r, c, _)| r >= n || c >= n) {
            return Err(Error::InvalidArgument("matrix entry out of range".into()));
        }
        entries.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0; n + 1];
        for &(r, _, _) in &entries {
            row_ptr[r + 1] += 1;
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(SparseMatrix {
            n,
            row_ptr,
            cols: entries.iter().map(|e| e.1).collect(),
            values: entries.iter().map(|e| e.2).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Stored entries in row-major order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (r, self.cols[k], self.values[k]))
        })
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for (r, c, v) in self.entries() {
            m[(r, c)] += v;
        }
        m
    }

    #[inline]
    fn row_dot(&self, row: usize, x: &[f64]) -> f64 {
        let (lo, hi) = (self.row_ptr[row], self.row_ptr[row + 1]);
        self.cols[lo..hi]
            .iter()
            .zip(&self.values[lo..hi])
            .map(|(&c, &v)| v * x[c])
            .sum()
    }
}

impl TryFrom<Triplets> for SparseMatrix {
    type Error = Error;

    fn try_from(t: Triplets) -> Result<Self> {
        if t.rows.len() != t.cols.len() || t.rows.len() != t.values.len() {
            return Err(Error::LengthMismatch {
                left: t.rows.len(),
                right: t.values.len(),
            });
        }
        let entries = t
            .rows
            .into_iter()
            .zip(t.cols)
            .zip(t.values)
            .map(|((r, c), v)| (r, c, v))
            .collect();
        SparseMatrix::from_triplets(t.n, entries)
    }
}

impl From<SparseMatrix> for Triplets {
    fn from(m: SparseMatrix) -> Self {
        let (mut rows, mut cols, mut values) = (Vec::new(), Vec::new(), Vec::new());
        for (r, c, v) in m.entries() {
            rows.push(r);
            cols.push(c);
            values.push(v);
        }
        Triplets {
            n: m.n,
            rows,
            cols,
            values,
        }
    }
}

/// Position of the noise generator, enough to resume it exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct NoiseCursor {
    seed: u64,
    word_pos: u128,
}

/// A reservoir with fixed random weights, a trainable readout and mutable
/// activation state.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "NetworkDoc", into = "NetworkDoc")]
pub struct EsnNetwork {
    topology: Topology,
    hp: Hyperparameters,
    seed: u64,
    reservoir: SparseMatrix,
    w_in: Vec<f64>,
    w_fb: Vec<f64>,
    w_out: Option<Vec<f64>>,
    state: Vec<f64>,
    last_feedback: f64,
    diverged: bool,
    noise_seed: u64,
    noise: ChaCha8Rng,
    scratch: Vec<f64>,
}

/// On-disk document for [`EsnNetwork`].
#[derive(Debug, Clone, Serialize, Deserialize)]
struct NetworkDoc {
    topology: Topology,
    hyperparameters: Hyperparameters,
    seed: u64,
    reservoir: SparseMatrix,
    w_in: Vec<f64>,
    w_fb: Vec<f64>,
    w_out: Option<Vec<f64>>,
    state: Vec<f64>,
    last_feedback: f64,
    diverged: bool,
    noise: NoiseCursor,
}

impl From<EsnNetwork> for NetworkDoc {
    fn from(net: EsnNetwork) -> Self {
        NetworkDoc {
            topology: net.topology,
            hyperparameters: net.hp,
            seed: net.seed,
            noise: NoiseCursor {
                seed: net.noise_seed,
                word_pos: net.noise.get_word_pos(),
            },
            reservoir: net.reservoir,
            w_in: net.w_in,
            w_fb: net.w_fb,
            w_out: net.w_out,
            state: net.state,
            last_feedback: net.last_feedback,
            diverged: net.diverged,
        }
    }
}

impl TryFrom<NetworkDoc> for EsnNetwork {
    type Error = Error;

    fn try_from(doc: NetworkDoc) -> Result<Self> {
        let n = doc.topology.n;
        if n == 0 || doc.reservoir.dim() != n {
            return Err(Error::InvalidArgument("reservoir size does not match topology".into()));
        }
        for (what, len) in [
            ("w_in", doc.w_in.len()),
            ("w_fb", doc.w_fb.len()),
            ("state", doc.state.len()),
            ("w_out", doc.w_out.as_ref().map_or(n, Vec::len)),
        ] {
            if len != n {
                return Err(Error::InvalidArgument(format!("{what} has length {len}, expected {n}")));
            }
        }
        let mut noise = noise_rng(doc.noise.seed);
        noise.set_word_pos(doc.noise.word_pos);
        Ok(EsnNetwork {
            topology: doc.topology,
            hp: doc.hyperparameters,
            seed: doc.seed,
            reservoir: doc.reservoir,
            w_in: doc.w_in,
            w_fb: doc.w_fb,
            w_out: doc.w_out,
            state: doc.state,
            last_feedback: doc.last_feedback,
            diverged: doc.diverged,
            noise_seed: doc.noise.seed,
            noise,
            scratch: vec![0.0; n],
        })
    }
}

fn noise_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(NOISE_STREAM);
    rng
}

/// Activations collected while driving a network.
#[derive(Debug, Clone)]
pub struct RunRecord {
    /// Row `i` is the activation vector after the `i`-th recorded step.
    pub activations: DMatrix<f64>,
    /// Readout outputs per recorded step; empty when the network is untrained.
    pub outputs: Vec<f64>,
    pub diverged: bool,
}

/// Generates a network for `topology` with weights drawn from `hp`.
///
/// The same `(topology, hp, seed)` always yields the same network. The
/// internal noise generator is seeded from `seed` as well, on a separate stream.
pub fn build_reservoir(topology: Topology, hp: &Hyperparameters, seed: u64) -> Result<EsnNetwork> {
    if topology.n == 0 {
        return Err(Error::InvalidArgument("neuron count must be >= 1".into()));
    }
    hp.validate()?;
    let n = topology.n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(BUILD_STREAM);

    let structure: Vec<(usize, usize)> = match topology.kind {
        TopologyKind::Sparse => (0..n).flat_map(|r| (0..n).map(move |c| (r, c))).collect(),
        TopologyKind::Chain => (0..n - 1).map(|i| (i + 1, i)).collect(),
        TopologyKind::Ring => ring_edges(n),
        TopologyKind::Permutation => {
            // Row r of the result is row perm[r] of the ring matrix.
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            let mut source_row_to_target = vec![0; n];
            for (target, &source) in perm.iter().enumerate() {
                source_row_to_target[source] = target;
            }
            let mut edges: Vec<(usize, usize)> = ring_edges(n)
                .into_iter()
                .map(|(r, c)| (source_row_to_target[r], c))
                .collect();
            edges.sort_unstable();
            edges
        }
    };

    let mut entries = Vec::with_capacity(structure.len());
    for (r, c) in structure {
        if rng.random::<f64>() < hp.sparsity {
            continue;
        }
        let z: f64 = rng.sample(StandardNormal);
        entries.push((r, c, hp.mu_res + hp.sigma_res * z));
    }
    let reservoir = SparseMatrix::from_triplets(n, entries)?;

    let w_in = (0..n).map(|_| symmetric_uniform(&mut rng, hp.omega_in)).collect();
    let w_fb = (0..n).map(|_| symmetric_uniform(&mut rng, hp.omega_fb)).collect();

    Ok(EsnNetwork {
        topology,
        hp: *hp,
        seed,
        reservoir,
        w_in,
        w_fb,
        w_out: None,
        state: vec![0.0; n],
        last_feedback: 0.0,
        diverged: false,
        noise_seed: seed,
        noise: noise_rng(seed),
        scratch: vec![0.0; n],
    })
}

fn ring_edges(n: usize) -> Vec<(usize, usize)> {
    let mut edges: Vec<(usize, usize)> = (0..n - 1).map(|i| (i + 1, i)).collect();
    edges.push((0, n - 1));
    edges
}

fn symmetric_uniform(rng: &mut ChaCha8Rng, half_range: f64) -> f64 {
    half_range * (2.0 * rng.random::<f64>() - 1.0)
}

impl EsnNetwork {
    /// Assembles a network from explicit weights. The readout starts untrained.
    pub fn from_parts(
        topology: Topology,
        hp: Hyperparameters,
        reservoir: SparseMatrix,
        w_in: Vec<f64>,
        w_fb: Vec<f64>,
        noise_seed: u64,
    ) -> Result<Self> {
        let n = topology.n;
        if reservoir.dim() != n || w_in.len() != n || w_fb.len() != n {
            return Err(Error::InvalidArgument("weight dimensions do not match topology".into()));
        }
        Ok(EsnNetwork {
            topology,
            hp,
            seed: noise_seed,
            reservoir,
            w_in,
            w_fb,
            w_out: None,
            state: vec![0.0; n],
            last_feedback: 0.0,
            diverged: false,
            noise_seed,
            noise: noise_rng(noise_seed),
            scratch: vec![0.0; n],
        })
    }

    pub fn topology(&self) -> Topology {
        self.topology
    }

    pub fn hyperparameters(&self) -> &Hyperparameters {
        &self.hp
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn reservoir(&self) -> &SparseMatrix {
        &self.reservoir
    }

    pub fn w_in(&self) -> &[f64] {
        &self.w_in
    }

    pub fn w_fb(&self) -> &[f64] {
        &self.w_fb
    }

    pub fn w_out(&self) -> Option<&[f64]> {
        self.w_out.as_deref()
    }

    pub fn state(&self) -> &[f64] {
        &self.state
    }

    pub fn diverged(&self) -> bool {
        self.diverged
    }

    /// Value fed through the feedback weights on the next step.
    pub fn last_feedback(&self) -> f64 {
        self.last_feedback
    }

    pub fn set_state(&mut self, state: &[f64]) -> Result<()> {
        if state.len() != self.topology.n {
            return Err(Error::LengthMismatch {
                left: state.len(),
                right: self.topology.n,
            });
        }
        self.state.copy_from_slice(state);
        Ok(())
    }

    pub fn set_readout(&mut self, w_out: Vec<f64>) -> Result<()> {
        if w_out.len() != self.topology.n {
            return Err(Error::LengthMismatch {
                left: w_out.len(),
                right: self.topology.n,
            });
        }
        self.w_out = Some(w_out);
        Ok(())
    }

    pub fn clear_readout(&mut self) {
        self.w_out = None;
    }

    /// Restarts the internal noise sequence from `seed`.
    pub fn reseed_noise(&mut self, seed: u64) {
        self.noise_seed = seed;
        self.noise = noise_rng(seed);
    }

    /// Zeroes activations and the feedback memory and clears the divergence flag.
    pub fn reset(&mut self) {
        self.state.fill(0.0);
        self.last_feedback = 0.0;
        self.diverged = false;
    }

    /// Advances the state by one step with the given input and feedback value.
    pub fn step(&mut self, input: f64, feedback: f64) {
        let leak = 1.0 - self.hp.gamma;
        let eps = self.hp.epsilon;
        for i in 0..self.topology.n {
            self.scratch[i] = self.reservoir.row_dot(i, &self.state)
                + self.w_in[i] * input
                + self.w_fb[i] * feedback
                + self.hp.mu_b;
        }
        let mut finite = true;
        for (a, &z) in self.state.iter_mut().zip(&self.scratch) {
            let xi = if eps == 0.0 {
                1.0
            } else {
                let g: f64 = self.noise.sample(StandardNormal);
                1.0 + eps * g
            };
            *a = leak * *a + z.tanh() * xi;
            finite &= a.is_finite();
        }
        if !finite {
            self.diverged = true;
        }
    }

    /// Readout applied to the current state, if trained.
    pub fn output(&self) -> Option<f64> {
        self.w_out
            .as_ref()
            .map(|w| w.iter().zip(&self.state).map(|(w, a)| w * a).sum())
    }

    /// Drives the network from the zero state, feeding `y(t-1)` back at step
    /// `t`, and records activations after the first `washout` steps.
    pub fn run_teacher_forced(&mut self, u: &[f64], y: &[f64], washout: usize) -> Result<RunRecord> {
        if u.len() != y.len() {
            return Err(Error::LengthMismatch {
                left: u.len(),
                right: y.len(),
            });
        }
        if washout >= u.len() {
            return Err(Error::InvalidArgument(format!(
                "washout {washout} leaves no steps out of {}",
                u.len()
            )));
        }
        check_finite(u, "input sequence")?;
        check_finite(y, "target sequence")?;

        self.reset();
        let n = self.topology.n;
        let k = u.len() - washout;
        let mut activations = DMatrix::zeros(k, n);
        let mut outputs = Vec::new();
        for (t, (&ut, &yt)) in u.iter().zip(y).enumerate() {
            self.step(ut, self.last_feedback);
            self.last_feedback = yt;
            if t >= washout {
                let row = t - washout;
                for (j, &a) in self.state.iter().enumerate() {
                    activations[(row, j)] = a;
                }
                if let Some(x) = self.output() {
                    outputs.push(x);
                }
            }
        }
        Ok(RunRecord {
            activations,
            outputs,
            diverged: self.diverged,
        })
    }

    /// Runs on `u` with the network's own previous output as feedback,
    /// continuing from the current state.
    ///
    /// The first step feeds back [`EsnNetwork::last_feedback`], which after a
    /// teacher-forced run holds the last teacher value.
    pub fn predict_free_running(&mut self, u: &[f64]) -> Result<Vec<f64>> {
        let w_out = self
            .w_out
            .clone()
            .ok_or_else(|| Error::InvalidArgument("readout is not trained".into()))?;
        check_finite(u, "input sequence")?;
        let mut outputs = Vec::with_capacity(u.len());
        for &ut in u {
            self.step(ut, self.last_feedback);
            let x: f64 = w_out.iter().zip(&self.state).map(|(w, a)| w * a).sum();
            if !x.is_finite() {
                self.diverged = true;
            }
            self.last_feedback = x;
            outputs.push(x);
        }
        Ok(outputs)
    }

    /// Activation history for `u` driven from the zero state with zero
    /// feedback; row `t` is the state after step `t`.
    pub fn dump_activations(&mut self, u: &[f64]) -> DMatrix<f64> {
        self.reset();
        let mut m = DMatrix::zeros(u.len(), self.topology.n);
        for (t, &ut) in u.iter().enumerate() {
            self.step(ut, 0.0);
            for (j, &a) in self.state.iter().enumerate() {
                m[(t, j)] = a;
            }
        }
        m
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

pub(crate) fn check_finite(v: &[f64], what: &'static str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn hp() -> Hyperparameters {
        Hyperparameters {
            sigma_res: 0.3,
            mu_res: 0.0,
            omega_in: 0.5,
            omega_fb: 0.1,
            sparsity: 0.0,
            gamma: 1.0,
            mu_b: 0.0,
            epsilon: 0.0,
        }
    }

    fn scalar_net(w: f64, w_in: f64, w_fb: f64, hp: Hyperparameters) -> EsnNetwork {
        let topo = Topology::new(TopologyKind::Ring, 1).unwrap();
        let m = SparseMatrix::from_triplets(1, vec![(0, 0, w)]).unwrap();
        EsnNetwork::from_parts(topo, hp, m, vec![w_in], vec![w_fb], 0).unwrap()
    }

    /// Follows each row's single nonzero to recover the permutation's cycles.
    fn cycle_lengths(m: &SparseMatrix) -> Vec<usize> {
        let n = m.dim();
        let mut next = vec![usize::MAX; n];
        for (r, c, _) in m.entries() {
            next[c] = r;
        }
        let mut seen = vec![false; n];
        let mut lengths = Vec::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            let mut len = 0;
            let mut i = start;
            while !seen[i] {
                seen[i] = true;
                i = next[i];
                len += 1;
            }
            assert_eq!(i, start, "walk must close on its starting neuron");
            lengths.push(len);
        }
        lengths
    }

    #[test]
    fn chain_has_subdiagonal_only() {
        let net = build_reservoir(Topology::new(TopologyKind::Chain, 4).unwrap(), &hp(), 3).unwrap();
        let pos: Vec<_> = net.reservoir().entries().map(|(r, c, _)| (r, c)).collect();
        assert_eq!(pos, vec![(1, 0), (2, 1), (3, 2)]);
    }

    #[test]
    fn full_sparsity_empties_reservoir() {
        let mut h = hp();
        h.sparsity = 1.0;
        let net = build_reservoir(Topology::new(TopologyKind::Sparse, 30).unwrap(), &h, 1).unwrap();
        assert_eq!(net.reservoir().nnz(), 0);
        assert!(net.reservoir().to_dense().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn permutation_splits_into_rings() {
        let mut total_cycles = 0;
        for seed in 0..20 {
            let net =
                build_reservoir(Topology::new(TopologyKind::Permutation, 100).unwrap(), &hp(), seed)
                    .unwrap();
            let w = net.reservoir();
            assert_eq!(w.nnz(), 100);
            let dense = w.to_dense();
            for i in 0..100 {
                assert_eq!(dense.row(i).iter().filter(|v| **v != 0.0).count(), 1);
                assert_eq!(dense.column(i).iter().filter(|v| **v != 0.0).count(), 1);
            }
            let cycles = cycle_lengths(w);
            assert_eq!(cycles.iter().sum::<usize>(), 100);
            total_cycles += cycles.len();
        }
        // A uniform permutation of 100 has ~5.2 cycles on average.
        assert!(total_cycles > 20, "shuffling should split the ring, got {total_cycles}");
    }

    #[test]
    fn ring_closes_the_chain() {
        let net = build_reservoir(Topology::new(TopologyKind::Ring, 5).unwrap(), &hp(), 0).unwrap();
        let pos: Vec<_> = net.reservoir().entries().map(|(r, c, _)| (r, c)).collect();
        assert_eq!(pos, vec![(0, 4), (1, 0), (2, 1), (3, 2), (4, 3)]);
    }

    #[test]
    fn step_examples() {
        let mut h = hp();
        h.omega_fb = 0.0;
        let mut net = scalar_net(0.0, 1.0, 0.0, h);
        net.step(0.0, 0.0);
        assert_eq!(net.state()[0], 0.0);

        h.mu_b = 0.1;
        let mut net = scalar_net(0.5, 1.0, 0.0, h);
        net.set_state(&[0.2]).unwrap();
        net.step(0.3, 0.0);
        assert!((net.state()[0] - 0.5f64.tanh()).abs() < 1e-15);

        let mut h = hp();
        h.gamma = 0.5;
        let mut net = scalar_net(0.0, 0.0, 0.0, h);
        net.set_state(&[1.0]).unwrap();
        net.step(0.0, 0.0);
        assert_eq!(net.state()[0], 0.5);
    }

    #[test]
    fn teacher_forcing_matches_scalar_recurrence() {
        // n = 2, hand-written weights; oracle is an explicit loop.
        let mut h = hp();
        h.gamma = 0.8;
        h.mu_b = 0.05;
        let topo = Topology::new(TopologyKind::Sparse, 2).unwrap();
        let w = [[0.1, -0.4], [0.7, 0.2]];
        let m = SparseMatrix::from_triplets(
            2,
            vec![(0, 0, w[0][0]), (0, 1, w[0][1]), (1, 0, w[1][0]), (1, 1, w[1][1])],
        )
        .unwrap();
        let w_in = [0.3, -0.6];
        let w_fb = [0.9, 0.25];
        let mut net = EsnNetwork::from_parts(topo, h, m, w_in.to_vec(), w_fb.to_vec(), 0).unwrap();
        let u = [0.5, -1.0, 0.25];
        let y = [0.2, 0.4, -0.3];
        let rec = net.run_teacher_forced(&u, &y, 0).unwrap();

        let mut a = [0.0f64; 2];
        let mut fb = 0.0;
        for t in 0..3 {
            let z0 = w[0][0] * a[0] + w[0][1] * a[1] + w_in[0] * u[t] + w_fb[0] * fb + 0.05;
            let z1 = w[1][0] * a[0] + w[1][1] * a[1] + w_in[1] * u[t] + w_fb[1] * fb + 0.05;
            a = [0.2 * a[0] + z0.tanh(), 0.2 * a[1] + z1.tanh()];
            fb = y[t];
            assert!((rec.activations[(t, 0)] - a[0]).abs() < 1e-14);
            assert!((rec.activations[(t, 1)] - a[1]).abs() < 1e-14);
        }
    }

    #[test]
    fn washout_trims_rows() {
        let mut net = build_reservoir(Topology::new(TopologyKind::Ring, 6).unwrap(), &hp(), 2).unwrap();
        let u = vec![0.1; 10];
        let rec = net.run_teacher_forced(&u, &u, 9).unwrap();
        assert_eq!(rec.activations.nrows(), 1);
        assert!(net.run_teacher_forced(&u, &u, 10).is_err());
    }

    #[test]
    fn severed_feedback_ignores_teacher() {
        let mut h = hp();
        h.omega_fb = 0.0;
        let topo = Topology::new(TopologyKind::Sparse, 10).unwrap();
        let u: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin()).collect();
        let y: Vec<f64> = (0..50).map(|i| (i as f64 * 1.7).cos()).collect();
        let mut a = build_reservoir(topo, &h, 4).unwrap();
        let mut b = a.clone();
        let ra = a.run_teacher_forced(&u, &vec![0.0; 50], 5).unwrap();
        let rb = b.run_teacher_forced(&u, &y, 5).unwrap();
        assert_eq!(ra.activations, rb.activations);
    }

    #[test]
    fn free_running_matches_scalar_recurrence() {
        let mut h = hp();
        h.gamma = 0.9;
        h.mu_b = -0.1;
        let mut net = scalar_net(0.6, 0.8, 0.5, h);
        net.set_readout(vec![1.5]).unwrap();
        let u = [0.3, 0.0, -0.2];
        let out = net.predict_free_running(&u).unwrap();

        let (mut a, mut x) = (0.0f64, 0.0f64);
        for t in 0..3 {
            a = 0.1 * a + (0.6 * a + 0.8 * u[t] + 0.5 * x - 0.1).tanh();
            x = 1.5 * a;
            assert!((out[t] - x).abs() < 1e-14);
        }
    }

    #[test]
    fn free_running_without_feedback_equals_open_loop() {
        let mut h = hp();
        h.omega_fb = 0.0;
        let topo = Topology::new(TopologyKind::Permutation, 12).unwrap();
        let u: Vec<f64> = (0..40).map(|i| (i as f64 * 0.7).sin() * 0.5).collect();
        let mut a = build_reservoir(topo, &h, 9).unwrap();
        a.set_readout((0..12).map(|i| i as f64 * 0.1 - 0.5).collect()).unwrap();
        let mut b = a.clone();
        let free = a.predict_free_running(&u).unwrap();
        let forced = b.run_teacher_forced(&u, &vec![1.0; 40], 0).unwrap();
        assert_eq!(free, forced.outputs);
    }

    #[test]
    fn zero_network_outputs_zero() {
        let h = Hyperparameters {
            sigma_res: 0.0,
            mu_res: 0.0,
            omega_in: 0.0,
            omega_fb: 0.0,
            sparsity: 0.0,
            gamma: 1.0,
            mu_b: 0.0,
            epsilon: 0.0,
        };
        let mut net = build_reservoir(Topology::new(TopologyKind::Sparse, 5).unwrap(), &h, 0).unwrap();
        net.set_readout(vec![0.0; 5]).unwrap();
        assert!(net.predict_free_running(&[0.0; 20]).unwrap().iter().all(|&x| x == 0.0));
        let dump = net.dump_activations(&[0.0; 7]);
        assert_eq!(dump.shape(), (7, 5));
        assert!(dump.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn noise_seed_changes_trajectory() {
        let mut h = hp();
        h.epsilon = 0.01;
        let topo = Topology::new(TopologyKind::Sparse, 8).unwrap();
        let mut a = build_reservoir(topo, &h, 1).unwrap();
        let mut b = a.clone();
        b.reseed_noise(2);
        let u = vec![0.3; 20];
        let da = a.dump_activations(&u);
        let db = b.dump_activations(&u);
        assert_ne!(da, db);

        let mut c = build_reservoir(topo, &h, 1).unwrap();
        assert_eq!(da, c.dump_activations(&u));
    }

    #[test]
    fn divergence_is_flagged() {
        let mut h = hp();
        h.gamma = -1e308;
        let mut net = scalar_net(0.0, 1.0, 0.0, h);
        net.set_state(&[1e308]).unwrap();
        net.step(0.0, 0.0);
        assert!(net.diverged());
    }

    #[test]
    fn json_round_trip_is_exact() {
        let mut h = hp();
        h.epsilon = 1e-3;
        let mut net = build_reservoir(Topology::new(TopologyKind::Permutation, 17).unwrap(), &h, 5).unwrap();
        net.set_readout((0..17).map(|i| (i as f64).sqrt() / 3.0).collect()).unwrap();
        net.step(0.123, 0.456);
        let mut back = EsnNetwork::from_json(&net.to_json().unwrap()).unwrap();
        assert_eq!(back.reservoir(), net.reservoir());
        assert_eq!(back.state(), net.state());
        assert_eq!(back.w_out(), net.w_out());
        // Resumed noise stream continues identically.
        let u = [0.1, 0.2, 0.3];
        assert_eq!(back.predict_free_running(&u).unwrap(), net.predict_free_running(&u).unwrap());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn structural_positions_hold(seed in any::<u64>(), n in 1usize..40, sparsity in 0.0f64..0.6) {
            let mut h = hp();
            h.sparsity = sparsity;
            for kind in TopologyKind::ALL {
                let net = build_reservoir(Topology::new(kind, n).unwrap(), &h, seed).unwrap();
                let mut rows = vec![0; n];
                let mut cols = vec![0; n];
                for (r, c, _) in net.reservoir().entries() {
                    rows[r] += 1;
                    cols[c] += 1;
                    match kind {
                        TopologyKind::Chain => prop_assert_eq!(r, c + 1),
                        TopologyKind::Ring => prop_assert!(r == c + 1 || (r == 0 && c == n - 1)),
                        _ => {}
                    }
                }
                if kind == TopologyKind::Permutation {
                    prop_assert!(rows.iter().all(|&k| k <= 1));
                    prop_assert!(cols.iter().all(|&k| k <= 1));
                }
                prop_assert!(net.reservoir().nnz() <= Topology::new(kind, n).unwrap().structural_edges());
            }
        }

        #[test]
        fn same_seed_same_network(seed in any::<u64>()) {
            let topo = Topology::new(TopologyKind::Sparse, 12).unwrap();
            let a = build_reservoir(topo, &hp(), seed).unwrap();
            let b = build_reservoir(topo, &hp(), seed).unwrap();
            prop_assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        }

        #[test]
        fn tanh_range_without_leak(seed in any::<u64>(), u in -5.0f64..5.0) {
            let mut h = hp();
            h.sigma_res = 2.0;
            let mut net = build_reservoir(Topology::new(TopologyKind::Sparse, 10).unwrap(), &h, seed).unwrap();
            for _ in 0..5 {
                net.step(u, 0.0);
                prop_assert!(net.state().iter().all(|a| a.abs() <= 1.0));
            }
        }
    }
}
