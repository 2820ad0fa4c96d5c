//! Numerical laboratory for pointwise Wolff-potential estimates of the
//! singular parabolic p-Laplacian with measure data.
//!
//! Modules, bottom up: [`params`] (exponents and admissibility), [`measure`]
//! (Radon measures and ball masses), [`wolff`] (truncated Wolff potential),
//! [`solver`] (regularized implicit solve on a grid), [`functionals`] (level
//! functionals and energy audits), [`km_iteration`] (the level iteration),
//! [`verifier`] (empirical constants) and [`suite`] (the full experiment).

pub mod error;
pub mod functionals;
pub mod geometry;
pub mod grid;
pub mod io;
pub mod km_iteration;
pub mod measure;
pub mod params;
pub mod quadrature;
pub mod solver;
pub mod suite;
pub mod verifier;
pub mod wolff;

pub use error::{Error, Result};
pub use geometry::Point;
pub use grid::{GridField, GridSpec, SpatialField};
pub use measure::{RadialProfile, RadonMeasure};
pub use params::{make_params, ProblemParams};
pub use wolff::{wolff_potential, wolff_sup_over_ball, WolffExponents, WolffProfile};
pub use solver::{mass_history, solve_ibvp, solve_ibvp_with, sup_norm_on_window, SolverOptions};
pub use functionals::{a_star, energy_audit, g_function, psi_transform, Cylinder, CutoffPair, LevelFunctionalReport};
pub use km_iteration::{advance_level, delta0_estimate, run_iteration, time_slots, IterationOptions, IterationParams, IterationState, IterationSummary};
pub use verifier::{
    check_corollary, check_proposition, check_theorem_i, check_theorem_ii, EstimateKind, EstimateOptions, EstimateReport,
    PropositionReport, Regime, SamplePoint,
};
pub use suite::{run_suite, MeasureKind, SuiteCase, SuiteCheck, SuiteConfig, SuiteReport};
