//! Shape optimization of mean quadratic functionals under random loads,
//! using low-rank expansions of the data's two-point correlation.
//!
//! The pipeline factorizes the load correlation once by pivoted Cholesky,
//! solves one deterministic boundary-value problem per factor, and assembles
//! the mean objective and its shape gradient from that ensemble. A level-set
//! loop with an augmented Lagrangian volume constraint drives the shape.
//! [`oracle`] checks the formulas on dense finite-dimensional systems.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod correlation;
pub mod error;
pub mod fem;
pub mod io;
pub mod levelset;
pub mod mesh;
pub mod objectives;
pub mod optimizer;
pub mod oracle;
pub mod sparse;

pub use correlation::{
    assemble_correlation_matrix, finite_rank_correlated_pair, pivoted_cholesky, CorrelationKernel,
    CorrelationRegion, LowRankFactorization,
};
pub use error::{Error, Result};
pub use fem::{
    solve_state_ensemble, Field, FieldKind, HookeLaw, LoadKind, Operator, SolverOptions,
    StateEnsemble,
};
pub use levelset::{initialize_levelset, Hole, LevelSet};
pub use mesh::{generate_structured_mesh, BoundaryTag, Mesh, Rect, Region};
pub use objectives::{FunctionalKind, GradientDensity, TrackingData};
pub use optimizer::{run_optimization, OptimizationConfig, OptimizationHistory, Physics, Scenario};
pub use sparse::CsrMatrix;
