//! Truss sizing optimisation by sequential programming over QUBO subproblems.
//!
//! Both the equilibrium solve (minimum potential energy) and the
//! volume-constrained compliance update are reduced to a sequence of local
//! quadratic models, binarised with a fixed-point encoding and handed to a
//! pluggable [`Sampler`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod benchmarks;
pub mod encoding;
pub mod model_file;
pub mod optimizer;
pub mod qasp;
pub mod quad;
pub mod sampler;
pub mod truss;

pub use benchmarks::BenchmarkCase;
pub use encoding::{
    decode, error_from_range, qubo_from_quadratic, qubo_to_ising, range_from_error, EncodingError,
    EncodingSpec, IsingProblem, QuboProblem,
};
pub use model_file::{load_model, parse_model, ModelFile, ModelFileError};
pub use optimizer::{
    optimize, solve_equilibrium, update_design, Equilibrium, OptConfig, OptError,
    OptimizationResult, OptimizationTrace, OuterIteration, OuterStop,
};
pub use qasp::{
    clip_bounds, clip_range, run_qasp, PerVariable, QaspConfig, QaspError, QaspIteration,
    QaspProblem, QaspResult, QuadraticObjective, StopReason,
};
pub use quad::{
    penalty_augment, taylor2, AugmentedForm, LinearConstraint, LinearConstraintSet, QuadError,
    QuadraticForm,
};
pub use sampler::{
    derive_seed, ExhaustiveSampler, RemoteSampler, Sample, Sampler, SamplerConfig, SamplerError,
    SimulatedAnnealingSampler,
};
pub use truss::{
    assemble_unit_stiffness, bar_geometry, compliance, compliance_sensitivity, direct_solve,
    element_stiffness0, global_stiffness, potential_energy, potential_gradient, volume,
    volume_gradient, Bar, DesignVector, DofMap, StateVector, TrussError, TrussModel,
    UnitStiffnessSet,
};
