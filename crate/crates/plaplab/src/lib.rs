//! Numerical laboratory for weighted p-Laplace Dirichlet problems with
//! (possibly infinite) measure data.
//!
//! The crate builds simplicial meshes with exact boundary distances, solves
//! `-div A(x, ∇u) = μ` by regularized Newton energy minimization, realizes
//! potentials of infinite measures through compact exhaustion, and verifies
//! trace-inequality sandwiches, Wolff potential bounds, capacitary conditions,
//! Hardy inequalities and singular-nonlinearity equivalences at desk scale.

pub mod calculus;
pub mod cli;
pub mod config;
pub mod error;
mod linalg;
pub mod mesh;
pub mod potential;
pub mod report;
pub mod singular;
pub mod solver;
pub mod trace;

pub use calculus::{
    lq_norm, measure_pairing, measure_power_integral, weak_lq_norm, weighted_p_energy,
    DiscreteFunction, MeasureData, MeasureSpec,
};
pub use error::{Error, Result};
pub use mesh::{
    build_interval_mesh, build_polygon_mesh, lshape_vertices, power_weight, rectangle_vertices,
    DomainSpec, Mesh, MeshRef, Weight,
};
pub use potential::{
    wa_potential, wolff_potential, wolff_sandwich_check, ExhaustionSchedule, PotentialResult,
    PotentialVerdict,
};
pub use solver::{
    comparison_check, energy_identity_check, solve, OperatorA, SolveReport, SolveStatus,
    SolverOptions,
};
pub use singular::{
    barrier_check, g_transform, solve_singular, solve_singular_from, verify_cor65,
    verify_thm12_equivalence, verify_thm13_bounds, SingularKind, SingularNonlinearity,
    SingularRunReport, VerifyOptions,
};
pub use trace::{
    capacitary_condition_check, capacity, estimate_trace_constant, estimate_trace_constant_seeded,
    estimate_weak_trace_constant, estimate_weak_trace_constant_seeded, hardy_check,
    trace_refinement_scan, verify_thm11_sandwich, verify_thm51_weak, CapacityResult, HardyEstimate,
    RefinementScan, TraceEstimate,
};
