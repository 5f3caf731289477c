//! P1 finite elements for the deterministic state problems: assembly,
//! boundary conditions, the conjugate-gradient solver and ensemble solves.

mod assembly;
mod ensemble;
mod field;
mod solver;

pub use assembly::{
    assemble_elasticity, assemble_interface_dirichlet, assemble_poisson, nitsche_weight, strain,
    HookeLaw,
};
pub use ensemble::{load_vector, solve_state_ensemble, LoadKind, Operator, StateEnsemble};
pub use field::{Field, FieldKind};
pub use solver::{apply_dirichlet, constrained_dofs, solve_spd, SolverOptions};
