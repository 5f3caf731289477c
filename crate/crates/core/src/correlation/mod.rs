//! Two-point correlation kernels of the random data, their discrete
//! matrices and certified low-rank factorizations.

mod cholesky;
mod discrete;
mod kernel;

pub use cholesky::{pivoted_cholesky, DenseAccessor, LowRankFactorization, MatrixAccessor};
pub use discrete::{
    assemble_correlation_matrix, factors_to_loads, CorrelationRegion, DiscreteCorrelation,
};
pub use kernel::{
    finite_rank_correlated_pair, profile_h, profile_k, Axis, ClosedFormKernel, CorrelationKernel,
    KernelTerm, Profile,
};
