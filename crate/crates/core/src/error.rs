use std::path::PathBuf;

use crate::mesh::BoundaryTag;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {actual} ({what})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("region matched no boundary edge (tag {tag:?}); check the region bounds")]
    EmptyRegion { tag: BoundaryTag },

    #[error("no boundary edge carries tag {0:?}")]
    MissingTag(BoundaryTag),

    #[error("invalid Lame coefficients: lambda={lambda}, mu={mu}")]
    InvalidLameCoefficients { lambda: f64, mu: f64 },

    #[error("density must be strictly positive (triangle {triangle}: {value})")]
    NonPositiveDensity { triangle: usize, value: f64 },

    #[error(
        "solver did not converge after {iterations} iterations (relative residual {residual:.3e})"
    )]
    NotConverged { iterations: usize, residual: f64 },

    #[error("solve failed for load {index}: {source}")]
    LoadSolve {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("correlation matrix is not positive semi-definite (pivot {pivot} = {value:.3e})")]
    NotPsd { pivot: usize, value: f64 },

    #[error("maximum rank {max_rank} reached with relative trace error {trace_error:.3e} above tolerance")]
    RankExhausted {
        max_rank: usize,
        trace_error: f64,
        partial: Box<crate::correlation::LowRankFactorization>,
    },

    #[error("singular matrix")]
    Singular,

    #[error("level set does not change sign (empty or full domain)")]
    NoInterface,

    #[error("degenerate level-set gradient on interface triangle {triangle}")]
    DegenerateInterface { triangle: usize },

    #[error("CFL condition violated: dt={dt:.3e} exceeds admissible {admissible:.3e}")]
    Cfl { dt: f64, admissible: f64 },

    #[error("state ensemble is empty")]
    EmptyEnsemble,

    #[error("missing {0}")]
    Missing(&'static str),

    #[error("iteration {iteration}, stage {stage}: {source}")]
    Stage {
        iteration: usize,
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("config error at line {line}: {message}")]
    ConfigParse { line: usize, message: String },

    #[error("config value out of range for `{key}`: {message}")]
    ConfigRange { key: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn at_stage(self, iteration: usize, stage: &'static str) -> Self {
        Error::Stage {
            iteration,
            stage,
            source: Box::new(self),
        }
    }

    /// True for errors caused by the input configuration rather than numerics.
    pub fn is_config_error(&self) -> bool {
        match self {
            Error::ConfigParse { .. }
            | Error::ConfigRange { .. }
            | Error::InvalidArgument(_)
            | Error::EmptyRegion { .. }
            | Error::MissingTag(_)
            | Error::InvalidLameCoefficients { .. } => true,
            Error::Stage { source, .. } | Error::LoadSolve { source, .. } => {
                source.is_config_error()
            }
            _ => false,
        }
    }
}
