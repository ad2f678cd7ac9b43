//! Outer truss optimisation loop: QA-SP equilibrium solve, compliance and its
//! sensitivities, then a QA-SP update of the area ratios against a linear
//! compliance model with a penalised volume equality.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qasp::{
    run_qasp, PerVariable, QaspConfig, QaspError, QaspProblem, QaspResult, StopReason,
};
use crate::quad::{
    penalty_augment, LinearConstraint, LinearConstraintSet, QuadError, QuadraticForm,
};
use crate::sampler::{derive_seed, Sampler, SamplerConfig};
use crate::truss::{
    assemble_unit_stiffness, compliance, compliance_sensitivity, global_stiffness, volume,
    volume_gradient, DesignVector, DofMap, StateVector, TrussError, TrussModel, UnitStiffnessSet,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptError {
    #[error(transparent)]
    Truss(#[from] TrussError),
    #[error(transparent)]
    Qasp(#[from] QaspError),
    #[error(transparent)]
    Quad(#[from] QuadError),
    #[error("invalid optimiser configuration: {0}")]
    InvalidConfig(String),
    #[error(
        "equilibrium residual {residual:e} above tolerance {tol:e} after {attempts} QA-SP runs"
    )]
    EquilibriumNotConverged {
        residual: f64,
        tol: f64,
        attempts: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptConfig {
    /// Target volume; the initial volume when absent.
    pub v_target: Option<f64>,
    pub volume_penalty: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub equilibrium_qasp: QaspConfig,
    /// Its box is the per-step design trust region.
    pub design_qasp: QaspConfig,
    pub max_outer: usize,
    /// Required `‖K U − F‖/‖F‖` after each equilibrium solve.
    pub residual_tol: f64,
    /// Extra QA-SP runs, warm-started, when the residual is still too large.
    pub equilibrium_restarts: usize,
    pub sampler: SamplerConfig,
}

impl Default for OptConfig {
    fn default() -> Self {
        Self {
            v_target: None,
            volume_penalty: 100.0,
            alpha_min: 0.02,
            alpha_max: 1.1,
            equilibrium_qasp: QaspConfig::with_box(2, f64::NEG_INFINITY, f64::INFINITY),
            design_qasp: QaspConfig::with_box(2, -0.05, 0.05),
            max_outer: 500,
            residual_tol: 1e-4,
            equilibrium_restarts: 5,
            sampler: SamplerConfig::default(),
        }
    }
}

impl OptConfig {
    pub fn validate(&self) -> Result<(), OptError> {
        let bad = |m: String| Err(OptError::InvalidConfig(m));
        if !(self.alpha_min > 0.0) || !(self.alpha_min <= self.alpha_max) {
            return bad(format!(
                "design bounds [{}, {}] must satisfy 0 < alpha_min <= alpha_max",
                self.alpha_min, self.alpha_max
            ));
        }
        if let Some(v) = self.v_target {
            if !(v > 0.0) || !v.is_finite() {
                return bad(format!("v_target must be positive, got {v}"));
            }
        }
        if !(self.volume_penalty > 0.0) {
            return bad(format!(
                "volume_penalty must be positive, got {}",
                self.volume_penalty
            ));
        }
        if !(self.residual_tol > 0.0) {
            return bad(format!(
                "residual_tol must be positive, got {}",
                self.residual_tol
            ));
        }
        self.sampler
            .validate()
            .map_err(|e| OptError::InvalidConfig(e.to_string()))
    }

    /// Initial design `α = value` with this configuration's bounds.
    pub fn uniform_design(&self, n_bars: usize, value: f64) -> Result<DesignVector, OptError> {
        Ok(DesignVector::uniform(
            n_bars,
            value,
            self.alpha_min,
            self.alpha_max,
        )?)
    }
}

/// `Ψ(U) = ½UᵀKU − FᵀU` for a fixed design.
#[derive(Debug, Clone)]
pub struct EquilibriumProblem {
    k: DMatrix<f64>,
    f: DVector<f64>,
}

impl EquilibriumProblem {
    pub fn new(
        units: &UnitStiffnessSet,
        alpha: &DVector<f64>,
        loads: &DVector<f64>,
    ) -> Result<Self, OptError> {
        let k = global_stiffness(units, alpha)?;
        if loads.len() != k.nrows() {
            return Err(TrussError::DimensionMismatch {
                what: "load vector",
                expected: k.nrows(),
                found: loads.len(),
            }
            .into());
        }
        Ok(Self {
            k,
            f: loads.clone(),
        })
    }

    pub fn stiffness(&self) -> &DMatrix<f64> {
        &self.k
    }

    /// `‖K U − F‖/‖F‖`, or `‖K U‖` when `F = 0`.
    pub fn relative_residual(&self, u: &DVector<f64>) -> f64 {
        let r = (&self.k * u - &self.f).norm();
        let scale = self.f.norm();
        if scale > 0.0 {
            r / scale
        } else {
            r
        }
    }
}

impl QaspProblem for EquilibriumProblem {
    fn n_vars(&self) -> usize {
        self.f.len()
    }

    fn evaluate(&self, u: &DVector<f64>) -> f64 {
        0.5 * u.dot(&(&self.k * u)) - self.f.dot(u)
    }

    fn model_at(&self, u: &DVector<f64>) -> QuadraticForm {
        let ku = &self.k * u;
        QuadraticForm {
            constant: 0.5 * u.dot(&ku) - self.f.dot(u),
            gradient: ku - &self.f,
            a: &self.k * 0.5,
        }
    }

    fn lower(&self) -> DVector<f64> {
        DVector::from_element(self.f.len(), f64::NEG_INFINITY)
    }

    fn upper(&self) -> DVector<f64> {
        DVector::from_element(self.f.len(), f64::INFINITY)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Equilibrium {
    pub state: StateVector,
    pub omega: DVector<f64>,
    pub residual: f64,
    /// One entry per QA-SP run (more than one only after restarts).
    pub runs: Vec<QaspResult>,
}

/// Minimises `Ψ(·; α)` by QA-SP from `u0`. While the relative residual
/// exceeds `config.residual_tol` the driver is rerun from the last iterate and
/// the last grid spacing, up to `config.equilibrium_restarts` times.
pub fn solve_equilibrium<S: Sampler + ?Sized>(
    units: &UnitStiffnessSet,
    alpha: &DVector<f64>,
    loads: &DVector<f64>,
    u0: &StateVector,
    config: &OptConfig,
    sampler: &S,
    seed: u64,
) -> Result<Equilibrium, OptError> {
    let problem = EquilibriumProblem::new(units, alpha, loads)?;
    let mut u = u0.u.clone();
    let mut qasp = config.equilibrium_qasp.clone();
    let mut runs = Vec::new();
    loop {
        let sampler_config = config
            .sampler
            .with_seed(derive_seed(seed, runs.len() as u64));
        let run = run_qasp(&problem, &qasp, sampler, &sampler_config, &u)?;
        u = run.x_final.clone();
        // a restart resumes from the grid spacing the previous run ended on
        qasp.epsilon0 = PerVariable::Vector(run.epsilon_final.iter().copied().collect());
        runs.push(run);
        let residual = problem.relative_residual(&u);
        if residual <= config.residual_tol {
            let state = StateVector { u };
            let omega = compliance_sensitivity(units, &state)?;
            return Ok(Equilibrium {
                state,
                omega,
                residual,
                runs,
            });
        }
        if runs.len() > config.equilibrium_restarts {
            return Err(OptError::EquilibriumNotConverged {
                residual,
                tol: config.residual_tol,
                attempts: runs.len(),
            });
        }
    }
}

/// Penalised linear compliance model in absolute design variables.
#[derive(Debug, Clone)]
pub struct DesignProblem {
    base: DVector<f64>,
    form: QuadraticForm,
    lower: DVector<f64>,
    upper: DVector<f64>,
}

impl DesignProblem {
    /// `C + ωᵀδ + c (h + Dᵀδ)²` with `δ = α − α_k` and `h = V(α_k) − V_target`.
    pub fn new(
        design: &DesignVector,
        compliance: f64,
        omega: &DVector<f64>,
        h: f64,
        d: &DVector<f64>,
        penalty: f64,
    ) -> Result<Self, OptError> {
        let objective = QuadraticForm::linear(compliance, omega.clone());
        let constraints = LinearConstraintSet {
            equalities: vec![LinearConstraint::new(h, d.clone(), penalty)],
            inequalities: Vec::new(),
        };
        let aug = penalty_augment(&objective, &constraints)?;
        Ok(Self {
            base: design.alpha().clone(),
            form: aug.form,
            lower: design.lower().clone(),
            upper: design.upper().clone(),
        })
    }

    pub fn form(&self) -> &QuadraticForm {
        &self.form
    }
}

impl QaspProblem for DesignProblem {
    fn n_vars(&self) -> usize {
        self.base.len()
    }

    fn evaluate(&self, alpha: &DVector<f64>) -> f64 {
        self.form.evaluate(&(alpha - &self.base))
    }

    fn model_at(&self, alpha: &DVector<f64>) -> QuadraticForm {
        let delta = alpha - &self.base;
        QuadraticForm {
            constant: self.form.evaluate(&delta),
            gradient: &self.form.gradient + (&self.form.a * delta) * 2.0,
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

#[derive(Debug, Clone, PartialEq)]
pub struct DesignUpdate {
    pub design: DesignVector,
    pub run: QaspResult,
}

/// One design step: QA-SP on the penalised linear model, from `α_k`.
#[allow(clippy::too_many_arguments)]
pub fn update_design<S: Sampler + ?Sized>(
    model: &TrussModel,
    design: &DesignVector,
    compliance: f64,
    omega: &DVector<f64>,
    v_target: f64,
    config: &OptConfig,
    sampler: &S,
    seed: u64,
) -> Result<DesignUpdate, OptError> {
    let d = volume_gradient(model)?;
    let h = volume(model, design.alpha())? - v_target;
    let problem = DesignProblem::new(design, compliance, omega, h, &d, config.volume_penalty)?;
    let run = run_qasp(
        &problem,
        &config.design_qasp,
        sampler,
        &config.sampler.with_seed(seed),
        design.alpha(),
    )?;
    Ok(DesignUpdate {
        design: design.with_alpha(run.x_final.clone())?,
        run,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OuterStop {
    /// Compliance failed to decrease; the previous design is returned.
    NoImprovement,
    MaxOuter,
}

impl std::fmt::Display for OuterStop {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            OuterStop::NoImprovement => "no_improvement",
            OuterStop::MaxOuter => "max_outer",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterIteration {
    pub k: usize,
    pub compliance: f64,
    pub volume: f64,
    pub volume_ratio: f64,
    pub alpha: Vec<f64>,
    /// `‖K U − F‖/‖F‖` of the QA-SP displacement.
    pub equilibrium_residual: f64,
    pub equilibrium_iterations: usize,
    pub equilibrium_stop: StopReason,
    /// QA-SP iterations of the design step that produced `alpha`; zero at `k = 0`.
    pub design_iterations: usize,
    pub omega_max: f64,
    pub accepted: bool,
    pub equilibrium_seed: u64,
    pub design_seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OptimizationTrace {
    pub iterations: Vec<OuterIteration>,
}

impl OptimizationTrace {
    pub fn accepted_compliance(&self) -> Vec<f64> {
        self.iterations
            .iter()
            .filter(|r| r.accepted)
            .map(|r| r.compliance)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationResult {
    pub design: DesignVector,
    pub state: StateVector,
    pub compliance: f64,
    pub volume_ratio: f64,
    pub v_target: f64,
    pub stop: OuterStop,
    pub trace: OptimizationTrace,
}

/// Seeds of outer iteration `k`: `(equilibrium, design)`.
pub fn outer_seeds(base: u64, k: usize) -> (u64, u64) {
    (
        derive_seed(base, 2 * k as u64),
        derive_seed(base, 2 * k as u64 + 1),
    )
}

pub fn optimize<S: Sampler + ?Sized>(
    model: &TrussModel,
    initial: &DesignVector,
    config: &OptConfig,
    sampler: &S,
) -> Result<OptimizationResult, OptError> {
    config.validate()?;
    if initial.len() != model.n_bars() {
        return Err(TrussError::DimensionMismatch {
            what: "initial design",
            expected: model.n_bars(),
            found: initial.len(),
        }
        .into());
    }
    let dofs = DofMap::new(model);
    let units = assemble_unit_stiffness(model, &dofs)?;
    let loads = model.reduced_loads(&dofs);
    let v_target = match config.v_target {
        Some(v) => v,
        None => volume(model, initial.alpha())?,
    };
    if !(v_target > 0.0) {
        return Err(OptError::InvalidConfig(format!(
            "target volume must be positive, got {v_target}"
        )));
    }

    let mut design = initial.clone();
    let mut state = StateVector::zeros(dofs.n_free());
    let mut trace = OptimizationTrace::default();
    let mut best: Option<(DesignVector, StateVector, f64)> = None;
    let mut design_iterations = 0;
    let mut design_seed = None;
    let mut k = 0;
    let stop = loop {
        let (eq_seed, next_design_seed) = outer_seeds(config.sampler.seed, k);
        let eq = solve_equilibrium(
            &units,
            design.alpha(),
            &loads,
            &state,
            config,
            sampler,
            eq_seed,
        )?;
        let c = compliance(&loads, &eq.state)?;
        let vol = volume(model, design.alpha())?;
        let accepted = best.as_ref().map_or(true, |(_, _, prev)| c < *prev);
        trace.iterations.push(OuterIteration {
            k,
            compliance: c,
            volume: vol,
            volume_ratio: vol / v_target,
            alpha: design.alpha().iter().copied().collect(),
            equilibrium_residual: eq.residual,
            equilibrium_iterations: eq.runs.iter().map(|r| r.iterations.len()).sum(),
            equilibrium_stop: eq.runs.last().map_or(StopReason::NSteps, |r| r.stop_reason),
            design_iterations,
            omega_max: eq.omega.amax(),
            accepted,
            equilibrium_seed: eq_seed,
            design_seed,
        });
        if !accepted {
            break OuterStop::NoImprovement;
        }
        best = Some((design.clone(), eq.state.clone(), c));
        if k >= config.max_outer {
            break OuterStop::MaxOuter;
        }
        let update = update_design(
            model,
            &design,
            c,
            &eq.omega,
            v_target,
            config,
            sampler,
            next_design_seed,
        )?;
        design_iterations = update.run.iterations.len();
        design_seed = Some(next_design_seed);
        design = update.design;
        state = eq.state;
        k += 1;
    };

    let (design, state, c) = best.expect("first outer iteration is always accepted");
    let volume_ratio = volume(model, design.alpha())? / v_target;
    Ok(OptimizationResult {
        design,
        state,
        compliance: c,
        volume_ratio,
        v_target,
        stop,
        trace,
    })
}
