//! Mode-switching population dynamics for partially automated traffic.
//!
//! A fleet of partially automated vehicles drifts between human-driven
//! and automated operation depending on what leads each vehicle. Each
//! switch is followed by a lockout period, modeled as an Erlang phase
//! chain so the population stays Markovian. This crate provides the
//! drift field and its generator decomposition, a fixed-step integrator,
//! equilibrium and stability analysis, lockout-approximation tuning,
//! throughput mapping, and a particle oracle for cross-validation.

pub mod equilibrium;
pub mod erlang;
pub mod error;
pub mod generator;
pub mod integrator;
pub mod oracle;
pub mod params;
mod rng;
mod special;
pub mod stability;
pub mod state;
pub mod throughput;

pub use equilibrium::{
    alpha_max, fixed_point_map, multistart_equilibria, reduce_system, solve_equilibrium,
    EquilibriumResult, MultistartReport, ReducedSystem, SolveMethod,
};
pub use erlang::{
    choose_k, design_rate, erlang_cdf, wasserstein_to_dirac, ErlangSpec, MAX_STAGE_COUNT,
};
pub use error::Error;
pub use integrator::{rk4_step, simulate, steps_for, IntegrationConfig, Trajectory};
pub use generator::{
    assemble_generator, drift, effective_rates, EffectiveRates, GeneratorDecomposition,
};
pub use oracle::{
    compare_modes, run_oracle, ModeComparison, OracleMode, OracleSeries, EVENT_PROB_CAP,
    MIN_PARTICLES,
};
pub use params::{ModelParams, ANALYSIS_K_CAP};
pub use stability::{
    build_vertices, check_hurwitz_grid, find_common_lyapunov, HurwitzGridReport,
    LyapunovCertificate, LyapunovOutcome, PolytopeVertices,
};
pub use state::{leader_probabilities, LeaderProbabilities, StateVector, SIMPLEX_TOL};
pub use throughput::{
    effective_headway, stage_headway, steady_throughput, throughput, throughput_csv,
    throughput_series, HeadwayParams, SpeedProfile, ThroughputPoint, TransitionDirection,
};
