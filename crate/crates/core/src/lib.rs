//! Closed-form control-barrier-function safety filters for linear plants
//! with a single affine constraint.
//!
//! Given `ẋ = Ax + Bu`, a safe set `{x : cᵀx + d ≥ 0}`, linear class-K
//! slopes and a nominal gain `u = −Kx`, the crate builds the minimally
//! invasive filtered controller, the resulting piecewise-affine closed loop,
//! and tools to analyse it: equilibria, spectra, invariant zeros, a
//! GES / unbounded classification, LMI gain design and simulation.

pub mod error;
pub mod filter;
pub mod fixtures;
pub mod linalg;
pub mod linear_model;
pub mod lmi;
pub mod problem;
pub mod riccati;
mod serde_util;
pub mod sim;
pub mod spectral;
pub mod tolerance;
pub mod tracking;

pub use error::{Error, Result};
pub use filter::{
    build_filter_data, closed_loop_field, filtered_control, FilterData, Mode, SwitchingSurface,
};
pub use linear_model::{
    build_hocbf_chain, compute_relative_degree, evaluate_chain, Constraint, FilterConfig,
    HocbfChain, Plant,
};
pub use lmi::{
    build_lmi_problem, find_cqlf, rank_one_cqlf_obstruction, single_input_obstruction,
    solve_lmi_pair, verify_cqlf, CqlfMargins, LmiOptions, LmiProblem, LmiSolution, Obstruction,
};
pub use problem::{parse_problem, parse_state_vector, Problem, ProblemSpec, Provenance};
pub use sim::{
    estimate_decay, simulate, simulate_nominal, verify_forward_invariance, AffineExtension,
    DecayFit, InvarianceCheck, Outcome, Radius, SimConfig, Trajectory,
};
pub use spectral::{
    analyze_eigenstructure, classify, classify_equilibria, divergence_ray, invariant_zeros,
    parity_check, ClassificationReport, DivergenceRay, EigenReport, EquilibriaReport,
    EquilibriumKind, Parity, Verdict,
};
pub use tolerance::Tolerances;
pub use tracking::{run_tracking_scenario, AircraftFixture, CommandSchedule, TrackingResult};
