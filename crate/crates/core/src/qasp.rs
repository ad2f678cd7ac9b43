//! Sequential programming driver: at each iterate a local quadratic model is
//! binarised on a grid of spacing ε, minimised by a QUBO sampler, and the step
//! is kept only if the true objective strictly decreases. Failures shrink ε.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoding::{decode, qubo_from_quadratic, range_from_error, EncodingError, EncodingSpec};
use crate::quad::QuadraticForm;
use crate::sampler::{derive_seed, Sampler, SamplerConfig, SamplerError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QaspError {
    #[error("invalid QA-SP configuration: {0}")]
    InvalidConfig(String),
    #[error("starting point component {index} = {value} outside [{lower}, {upper}]")]
    InfeasibleStart {
        index: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },
    #[error("{what}: expected length {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
}

/// A scalar broadcast to every variable, or one value per variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerVariable {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl PerVariable {
    pub fn resolve(&self, n: usize, what: &'static str) -> Result<DVector<f64>, QaspError> {
        match self {
            PerVariable::Scalar(v) => Ok(DVector::from_element(n, *v)),
            PerVariable::Vector(v) if v.len() == n => Ok(DVector::from_column_slice(v)),
            PerVariable::Vector(v) => Err(QaspError::DimensionMismatch {
                what,
                expected: n,
                found: v.len(),
            }),
        }
    }
}

impl From<f64> for PerVariable {
    fn from(v: f64) -> Self {
        PerVariable::Scalar(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QaspConfig {
    pub bits_per_var: u32,
    pub epsilon0: PerVariable,
    pub box_min: PerVariable,
    pub box_max: PerVariable,
    pub xi: f64,
    pub n_steps: usize,
    pub n_failed: usize,
    pub epsilon_min: f64,
}

impl Default for QaspConfig {
    fn default() -> Self {
        Self {
            bits_per_var: 2,
            epsilon0: PerVariable::Scalar(1e-4 / 3.0),
            box_min: PerVariable::Scalar(f64::NEG_INFINITY),
            box_max: PerVariable::Scalar(f64::INFINITY),
            xi: 0.5,
            n_steps: 200,
            n_failed: 10,
            epsilon_min: 1e-14,
        }
    }
}

impl QaspConfig {
    /// `ε₀ = 10⁻⁴/(2ᴸ − 1)` with the given box.
    pub fn with_box(bits_per_var: u32, box_min: f64, box_max: f64) -> Self {
        Self {
            bits_per_var,
            epsilon0: PerVariable::Scalar(1e-4 / ((1u64 << bits_per_var) - 1) as f64),
            box_min: box_min.into(),
            box_max: box_max.into(),
            ..Self::default()
        }
    }

    fn resolved(&self, n: usize) -> Result<Resolved, QaspError> {
        let bad = |m: String| Err(QaspError::InvalidConfig(m));
        if self.bits_per_var == 0 || self.bits_per_var > crate::encoding::MAX_BITS_PER_VAR {
            return bad(format!("bits_per_var = {}", self.bits_per_var));
        }
        if !(self.xi > 0.0 && self.xi < 1.0) {
            return bad(format!("shrink factor xi = {} not in (0, 1)", self.xi));
        }
        if !(self.epsilon_min > 0.0) || !self.epsilon_min.is_finite() {
            return bad(format!("epsilon_min = {}", self.epsilon_min));
        }
        let eps = self.epsilon0.resolve(n, "epsilon0")?;
        let box_min = self.box_min.resolve(n, "box_min")?;
        let box_max = self.box_max.resolve(n, "box_max")?;
        for i in 0..n {
            if !(eps[i] > 0.0) || !eps[i].is_finite() {
                return bad(format!("epsilon0[{i}] = {}", eps[i]));
            }
            if !(box_min[i] <= 0.0 && box_max[i] >= 0.0) {
                return bad(format!(
                    "box [{}, {}] at {i} does not contain 0",
                    box_min[i], box_max[i]
                ));
            }
        }
        Ok(Resolved {
            eps,
            box_min,
            box_max,
        })
    }
}

struct Resolved {
    eps: DVector<f64>,
    box_min: DVector<f64>,
    box_max: DVector<f64>,
}

/// The objective the driver minimises.
pub trait QaspProblem {
    fn n_vars(&self) -> usize;
    fn evaluate(&self, x: &DVector<f64>) -> f64;
    /// Local model in the increment `δ`; its constant equals `evaluate(x)`.
    fn model_at(&self, x: &DVector<f64>) -> QuadraticForm;
    fn lower(&self) -> DVector<f64>;
    fn upper(&self) -> DVector<f64>;
}

/// `f(x) = c + gᵀx + xᵀAx` on a box.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticObjective {
    pub form: QuadraticForm,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

impl QuadraticObjective {
    pub fn unbounded(form: QuadraticForm) -> Self {
        let n = form.n_vars();
        Self {
            form,
            lower: DVector::from_element(n, f64::NEG_INFINITY),
            upper: DVector::from_element(n, f64::INFINITY),
        }
    }
}

impl QaspProblem for QuadraticObjective {
    fn n_vars(&self) -> usize {
        self.form.n_vars()
    }

    fn evaluate(&self, x: &DVector<f64>) -> f64 {
        self.form.evaluate(x)
    }

    fn model_at(&self, x: &DVector<f64>) -> QuadraticForm {
        QuadraticForm {
            constant: self.form.evaluate(x),
            gradient: &self.form.gradient + (&self.form.a * x) * 2.0,
            a: self.form.a.clone(),
        }
    }

    fn lower(&self) -> DVector<f64> {
        self.lower.clone()
    }

    fn upper(&self) -> DVector<f64> {
        self.upper.clone()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    NSteps,
    NFailed,
    Converged,
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StopReason::NSteps => "n_steps",
            StopReason::NFailed => "n_failed",
            StopReason::Converged => "converged",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaspIteration {
    /// Accepted steps so far, including this one.
    pub k: usize,
    /// Objective at the current iterate after the accept/reject decision.
    pub f: f64,
    /// Objective at the trial point.
    pub f_trial: f64,
    /// Euclidean norm of the nominal ε after this iteration.
    pub epsilon_norm: f64,
    /// Largest component of the nominal ε after this iteration.
    pub epsilon_max: f64,
    pub accepted: bool,
    /// Best QUBO energy returned by the sampler, offset included.
    pub sampler_energy: f64,
    pub n_bits: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QaspResult {
    pub x_final: DVector<f64>,
    pub f_final: f64,
    pub epsilon_final: DVector<f64>,
    pub iterations: Vec<QaspIteration>,
    pub stop_reason: StopReason,
}

impl QaspResult {
    pub fn n_accepted(&self) -> usize {
        self.iterations.iter().filter(|i| i.accepted).count()
    }
}

/// `δ_min = max(x_min − x, box_min)`, `δ_max = min(x_max − x, box_max)`.
pub fn clip_bounds(
    x: &DVector<f64>,
    x_min: &DVector<f64>,
    x_max: &DVector<f64>,
    box_min: &DVector<f64>,
    box_max: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>) {
    let n = x.len();
    let lo = DVector::from_fn(n, |i, _| (x_min[i] - x[i]).max(box_min[i]));
    let hi = DVector::from_fn(n, |i, _| (x_max[i] - x[i]).min(box_max[i]));
    (lo, hi)
}

/// Intersects `[d_min, d_max]` with `[δ_min, δ_max]`; a range lying wholly
/// outside collapses onto the nearer bound.
pub fn clip_range(
    d_min: &DVector<f64>,
    d_max: &DVector<f64>,
    delta_min: &DVector<f64>,
    delta_max: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>) {
    let n = d_min.len();
    let clamp = |v: f64, i: usize| v.max(delta_min[i]).min(delta_max[i]);
    (
        DVector::from_fn(n, |i, _| clamp(d_min[i], i)),
        DVector::from_fn(n, |i, _| clamp(d_max[i], i)),
    )
}

/// Encoding used at one iterate: grid centred on the current point with the
/// nominal ε, clipped to the admissible increments.
pub fn iteration_encoding(
    x: &DVector<f64>,
    eps: &DVector<f64>,
    x_min: &DVector<f64>,
    x_max: &DVector<f64>,
    box_min: &DVector<f64>,
    box_max: &DVector<f64>,
    bits_per_var: u32,
) -> Result<EncodingSpec, QaspError> {
    let (lo, hi) = clip_bounds(x, x_min, x_max, box_min, box_max);
    let (r_min, r_max) = range_from_error(eps, &DVector::zeros(eps.len()), bits_per_var)?;
    let (c_min, c_max) = clip_range(&r_min, &r_max, &lo, &hi);
    Ok(EncodingSpec::from_range(c_min, c_max, bits_per_var)?)
}

pub fn run_qasp<P: QaspProblem + ?Sized, S: Sampler + ?Sized>(
    problem: &P,
    config: &QaspConfig,
    sampler: &S,
    sampler_config: &SamplerConfig,
    x0: &DVector<f64>,
) -> Result<QaspResult, QaspError> {
    let n = problem.n_vars();
    if x0.len() != n {
        return Err(QaspError::DimensionMismatch {
            what: "starting point",
            expected: n,
            found: x0.len(),
        });
    }
    let Resolved {
        mut eps,
        box_min,
        box_max,
    } = config.resolved(n)?;
    sampler_config.validate()?;
    let x_min = problem.lower();
    let x_max = problem.upper();
    for i in 0..n {
        if !(x0[i] >= x_min[i] && x0[i] <= x_max[i]) {
            return Err(QaspError::InfeasibleStart {
                index: i,
                value: x0[i],
                lower: x_min[i],
                upper: x_max[i],
            });
        }
    }

    let mut x = x0.clone();
    let mut f = problem.evaluate(&x);
    let mut model = problem.model_at(&x);
    let (mut k, mut l) = (0usize, 0usize);
    let mut iterations = Vec::new();
    let stop_reason = loop {
        if k >= config.n_steps {
            break StopReason::NSteps;
        }
        if l >= config.n_failed {
            break if eps.iter().all(|&e| e <= config.epsilon_min) {
                StopReason::Converged
            } else {
                StopReason::NFailed
            };
        }

        let spec = iteration_encoding(
            &x,
            &eps,
            &x_min,
            &x_max,
            &box_min,
            &box_max,
            config.bits_per_var,
        )?;
        let qubo = qubo_from_quadratic(&model, &spec)?;
        let seed = derive_seed(sampler_config.seed, iterations.len() as u64);
        let samples = sampler.sample(&qubo, &sampler_config.with_seed(seed))?;
        let best = samples
            .first()
            .ok_or_else(|| SamplerError::ProtocolViolation("sampler returned no samples".into()))?;
        let delta = decode(&spec, &best.bits)?;
        let trial = DVector::from_fn(n, |i, _| (x[i] + delta[i]).max(x_min[i]).min(x_max[i]));
        let f_trial = problem.evaluate(&trial);

        let accepted = f_trial < f;
        if accepted {
            x = trial;
            f = f_trial;
            k += 1;
            l = 0;
            model = problem.model_at(&x);
        } else {
            l += 1;
            eps.iter_mut()
                .for_each(|e| *e = (config.xi * *e).max(config.epsilon_min));
        }
        iterations.push(QaspIteration {
            k,
            f,
            f_trial,
            epsilon_norm: eps.norm(),
            epsilon_max: eps.amax(),
            accepted,
            sampler_energy: best.energy + qubo.offset(),
            n_bits: qubo.n_bits(),
            seed,
        });
    };

    Ok(QaspResult {
        x_final: x,
        f_final: f,
        epsilon_final: eps,
        iterations,
        stop_reason,
    })
}
