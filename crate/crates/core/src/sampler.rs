//! QUBO sampling backends: exhaustive enumeration, simulated annealing and a
//! remote HTTP client.
//!
//! Every backend returns samples sorted by `(energy, bits)`, so ties go to
//! the lexicographically smallest bit vector.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoding::QuboProblem;

/// Largest problem the exhaustive backend accepts.
pub const EXHAUSTIVE_MAX_BITS: usize = 24;

/// Remote energies may differ from the local recomputation by this much
/// (relative to `max(1, |E|)`).
pub const REMOTE_ENERGY_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplerError {
    #[error("exhaustive sampler limited to {max} bits, problem has {n_bits}")]
    TooManyBits { n_bits: usize, max: usize },
    #[error("invalid sampler configuration: {0}")]
    InvalidConfig(String),
    #[error("remote sampler timed out: {0}")]
    Timeout(String),
    #[error("remote sampler transport error: {0}")]
    Transport(String),
    #[error("remote sampler returned HTTP {status}: {body}")]
    HttpStatus { status: u16, body: String },
    #[error("malformed remote response: {0}")]
    Malformed(String),
    #[error("remote protocol violation: {0}")]
    ProtocolViolation(String),
}

impl SamplerError {
    /// Whether the error came from talking to a remote service.
    pub fn is_remote(&self) -> bool {
        !matches!(
            self,
            SamplerError::TooManyBits { .. } | SamplerError::InvalidConfig(_)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub bits: Vec<u8>,
    /// `bᵀQb`, offset excluded.
    pub energy: f64,
    pub occurrences: u64,
}

fn sample_order(a: &Sample, b: &Sample) -> Ordering {
    a.energy
        .total_cmp(&b.energy)
        .then_with(|| a.bits.cmp(&b.bits))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub num_reads: usize,
    pub seed: u64,
    pub sa_sweeps: usize,
    /// Remote request timeout in seconds.
    pub timeout_secs: f64,
    /// Extra attempts after a remote timeout or transport failure.
    pub retries: u32,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            num_reads: 200,
            seed: 0,
            sa_sweeps: 1000,
            timeout_secs: 30.0,
            retries: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), SamplerError> {
        if self.num_reads == 0 {
            return Err(SamplerError::InvalidConfig(
                "num_reads must be at least 1".into(),
            ));
        }
        if !(self.timeout_secs > 0.0) || !self.timeout_secs.is_finite() {
            return Err(SamplerError::InvalidConfig(format!(
                "timeout must be positive, got {}",
                self.timeout_secs
            )));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }
}

/// SplitMix64 mixing of `(base, index)`; used for every derived seed.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub trait Sampler {
    /// Non-empty, sorted ascending by `(energy, bits)`.
    fn sample(
        &self,
        problem: &QuboProblem,
        config: &SamplerConfig,
    ) -> Result<Vec<Sample>, SamplerError>;

    fn name(&self) -> &'static str;
}

impl<S: Sampler + ?Sized> Sampler for &S {
    fn sample(
        &self,
        problem: &QuboProblem,
        config: &SamplerConfig,
    ) -> Result<Vec<Sample>, SamplerError> {
        (**self).sample(problem, config)
    }

    fn name(&self) -> &'static str {
        (**self).name()
    }
}

impl<S: Sampler + ?Sized> Sampler for Box<S> {
    fn sample(
        &self,
        problem: &QuboProblem,
        config: &SamplerConfig,
    ) -> Result<Vec<Sample>, SamplerError> {
        (**self).sample(problem, config)
    }

    fn name(&self) -> &'static str {
        (**self).name()
    }
}

fn empty_sample() -> Vec<Sample> {
    vec![Sample {
        bits: Vec::new(),
        energy: 0.0,
        occurrences: 1,
    }]
}

/// Full enumeration; the `num_reads` lowest states are returned.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExhaustiveSampler;

#[derive(Debug, Clone, Copy)]
struct Ranked {
    energy: f64,
    mask: u32,
}

impl PartialEq for Ranked {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Ranked {}

impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Ranked {
    fn cmp(&self, other: &Self) -> Ordering {
        self.energy
            .total_cmp(&other.energy)
            .then(self.mask.cmp(&other.mask))
    }
}

impl Sampler for ExhaustiveSampler {
    fn sample(
        &self,
        problem: &QuboProblem,
        config: &SamplerConfig,
    ) -> Result<Vec<Sample>, SamplerError> {
        config.validate()?;
        let n = problem.n_bits();
        if n > EXHAUSTIVE_MAX_BITS {
            return Err(SamplerError::TooManyBits {
                n_bits: n,
                max: EXHAUSTIVE_MAX_BITS,
            });
        }
        if n == 0 {
            return Ok(empty_sample());
        }

        // cols[k] lists (j, Q_jk) for j < k; bit 0 is the most significant
        // bit of the counter so that counting order is lexicographic order.
        let mut diag = vec![0.0; n];
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (i, j, v) in problem.entries() {
            if i == j {
                diag[i] += v;
            } else {
                cols[j].push((i, v));
            }
        }

        let keep = config.num_reads.min(1usize << n);
        let mut heap: BinaryHeap<Ranked> = BinaryHeap::with_capacity(keep + 1);
        let mut bits = vec![0u8; n];
        // partial[k] = energy of bits[..k]
        let mut partial = vec![0.0; n + 1];
        let total: u32 = 1u32 << n;
        let mut first_changed = 0;
        for mask in 0..total {
            if mask > 0 {
                let tz = mask.trailing_zeros() as usize;
                first_changed = n - 1 - tz;
                for (k, b) in bits.iter_mut().enumerate().skip(first_changed) {
                    *b = ((mask >> (n - 1 - k)) & 1) as u8;
                }
            }
            for k in first_changed..n {
                let mut e = partial[k];
                if bits[k] != 0 {
                    e += diag[k];
                    for &(j, v) in &cols[k] {
                        if bits[j] != 0 {
                            e += v;
                        }
                    }
                }
                partial[k + 1] = e;
            }
            let cand = Ranked {
                energy: partial[n],
                mask,
            };
            if heap.len() < keep {
                heap.push(cand);
            } else if let Some(worst) = heap.peek() {
                if cand < *worst {
                    heap.pop();
                    heap.push(cand);
                }
            }
        }

        let mut out: Vec<Sample> = heap
            .into_iter()
            .map(|r| {
                let bits: Vec<u8> = (0..n)
                    .map(|k| ((r.mask >> (n - 1 - k)) & 1) as u8)
                    .collect();
                Sample {
                    energy: problem.energy(&bits),
                    bits,
                    occurrences: 1,
                }
            })
            .collect();
        out.sort_by(sample_order);
        Ok(out)
    }

    fn name(&self) -> &'static str {
        "exhaustive"
    }
}

/// Single-flip Metropolis annealing with `num_reads` independent restarts.
#[derive(Debug, Clone, Copy, Default)]
pub struct SimulatedAnnealingSampler;

struct LocalFields<'a> {
    diag: &'a [f64],
    adj: &'a [Vec<(usize, f64)>],
    field: Vec<f64>,
    bits: Vec<u8>,
}

impl<'a> LocalFields<'a> {
    fn new(diag: &'a [f64], adj: &'a [Vec<(usize, f64)>], bits: Vec<u8>) -> Self {
        let mut field = vec![0.0; bits.len()];
        for (i, f) in field.iter_mut().enumerate() {
            *f = adj[i]
                .iter()
                .filter(|(j, _)| bits[*j] != 0)
                .map(|(_, v)| v)
                .sum();
        }
        Self {
            diag,
            adj,
            field,
            bits,
        }
    }

    fn delta(&self, i: usize) -> f64 {
        let gain = self.diag[i] + self.field[i];
        if self.bits[i] == 0 {
            gain
        } else {
            -gain
        }
    }

    fn flip(&mut self, i: usize) {
        let sign = if self.bits[i] == 0 { 1.0 } else { -1.0 };
        self.bits[i] ^= 1;
        for &(j, v) in &self.adj[i] {
            self.field[j] += sign * v;
        }
    }

    /// Greedy sweeps until stable: a 0 becomes 1 only on strict improvement,
    /// a 1 becomes 0 whenever that does not raise the energy.
    fn descend(&mut self) {
        loop {
            let mut changed = false;
            for i in 0..self.bits.len() {
                let d = self.delta(i);
                if (self.bits[i] == 0 && d < 0.0) || (self.bits[i] == 1 && d <= 0.0) {
                    self.flip(i);
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
    }
}

impl SimulatedAnnealingSampler {
    fn restart(
        diag: &[f64],
        adj: &[Vec<(usize, f64)>],
        n: usize,
        sweeps: usize,
        scale: f64,
        seed: u64,
    ) -> Vec<u8> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let init: Vec<u8> = (0..n).map(|_| rng.random_range(0..2u8)).collect();
        let mut state = LocalFields::new(diag, adj, init);
        let mut energy = 0.0;
        let mut best_energy = 0.0;
        let mut best = state.bits.clone();
        if scale > 0.0 && sweeps > 0 {
            let t_hot = scale;
            let t_cold = 1e-3 * scale;
            let ratio = if sweeps > 1 {
                (t_cold / t_hot).powf(1.0 / (sweeps - 1) as f64)
            } else {
                1.0
            };
            let mut t = if sweeps > 1 { t_hot } else { t_cold };
            for _ in 0..sweeps {
                for i in 0..n {
                    let d = state.delta(i);
                    if d <= 0.0 || rng.random::<f64>() < (-d / t).exp() {
                        state.flip(i);
                        energy += d;
                        if energy < best_energy {
                            best_energy = energy;
                            best.copy_from_slice(&state.bits);
                        }
                    }
                }
                t *= ratio;
            }
        }
        let mut state = LocalFields::new(diag, adj, best);
        state.descend();
        state.bits
    }
}

impl Sampler for SimulatedAnnealingSampler {
    fn sample(
        &self,
        problem: &QuboProblem,
        config: &SamplerConfig,
    ) -> Result<Vec<Sample>, SamplerError> {
        config.validate()?;
        let n = problem.n_bits();
        if n == 0 {
            return Ok(empty_sample());
        }
        let (diag, adj) = problem.neighbours();
        let scale = problem.max_abs();
        let mut found: BTreeMap<Vec<u8>, u64> = BTreeMap::new();
        for r in 0..config.num_reads {
            let bits = Self::restart(
                &diag,
                &adj,
                n,
                config.sa_sweeps,
                scale,
                derive_seed(config.seed, r as u64),
            );
            *found.entry(bits).or_insert(0) += 1;
        }
        let mut out: Vec<Sample> = found
            .into_iter()
            .map(|(bits, occurrences)| Sample {
                energy: problem.energy(&bits),
                bits,
                occurrences,
            })
            .collect();
        out.sort_by(sample_order);
        Ok(out)
    }

    fn name(&self) -> &'static str {
        "sa"
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RemoteRequest {
    pub n_bits: usize,
    pub qubo: Vec<(usize, usize, f64)>,
    pub num_reads: usize,
    pub seed: u64,
}

impl RemoteRequest {
    pub fn new(problem: &QuboProblem, config: &SamplerConfig) -> Self {
        Self {
            n_bits: problem.n_bits(),
            qubo: problem.entries().collect(),
            num_reads: config.num_reads,
            seed: config.seed,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RemoteResponse {
    pub samples: Vec<Sample>,
}

/// Client for `POST {endpoint}/v1/sample`.
#[derive(Debug, Clone)]
pub struct RemoteSampler {
    endpoint: String,
}

impl RemoteSampler {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    pub fn url(&self) -> String {
        format!("{}/v1/sample", self.endpoint.trim_end_matches('/'))
    }

    fn attempt(
        &self,
        client: &reqwest::blocking::Client,
        request: &RemoteRequest,
    ) -> Result<String, SamplerError> {
        let classify = |e: reqwest::Error| {
            if e.is_timeout() {
                SamplerError::Timeout(e.to_string())
            } else {
                SamplerError::Transport(e.to_string())
            }
        };
        let resp = client
            .post(self.url())
            .json(request)
            .send()
            .map_err(classify)?;
        let status = resp.status();
        let body = resp.text().map_err(classify)?;
        if status != reqwest::StatusCode::OK {
            return Err(SamplerError::HttpStatus {
                status: status.as_u16(),
                body,
            });
        }
        Ok(body)
    }

    /// Checks a decoded response against the problem it answers.
    pub fn validate(
        problem: &QuboProblem,
        response: RemoteResponse,
    ) -> Result<Vec<Sample>, SamplerError> {
        if response.samples.is_empty() {
            return Err(SamplerError::ProtocolViolation(
                "no samples returned".into(),
            ));
        }
        let n = problem.n_bits();
        let mut out = Vec::with_capacity(response.samples.len());
        for (k, s) in response.samples.into_iter().enumerate() {
            if s.bits.len() != n {
                return Err(SamplerError::ProtocolViolation(format!(
                    "sample {k} has {} bits, expected {n}",
                    s.bits.len()
                )));
            }
            if s.bits.iter().any(|&b| b > 1) {
                return Err(SamplerError::ProtocolViolation(format!(
                    "sample {k} contains a non-binary value"
                )));
            }
            if s.occurrences == 0 {
                return Err(SamplerError::ProtocolViolation(format!(
                    "sample {k} has zero occurrences"
                )));
            }
            let local = problem.energy(&s.bits);
            if !s.energy.is_finite()
                || (local - s.energy).abs() > REMOTE_ENERGY_TOL * local.abs().max(1.0)
            {
                return Err(SamplerError::ProtocolViolation(format!(
                    "sample {k} reports energy {} but its bits give {local}",
                    s.energy
                )));
            }
            out.push(Sample { energy: local, ..s });
        }
        out.sort_by(sample_order);
        Ok(out)
    }
}

impl Sampler for RemoteSampler {
    fn sample(
        &self,
        problem: &QuboProblem,
        config: &SamplerConfig,
    ) -> Result<Vec<Sample>, SamplerError> {
        config.validate()?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(config.timeout_secs))
            .build()
            .map_err(|e| SamplerError::Transport(e.to_string()))?;
        let request = RemoteRequest::new(problem, config);
        let mut attempt = 0;
        let body = loop {
            match self.attempt(&client, &request) {
                Ok(body) => break body,
                Err(SamplerError::Timeout(_) | SamplerError::Transport(_))
                    if attempt < config.retries =>
                {
                    attempt += 1
                }
                Err(e) => return Err(e),
            }
        };
        let response: RemoteResponse =
            serde_json::from_str(&body).map_err(|e| SamplerError::Malformed(e.to_string()))?;
        Self::validate(problem, response)
    }

    fn name(&self) -> &'static str {
        "remote"
    }
}
