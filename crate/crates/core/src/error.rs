use thiserror::Error;

/// Errors raised by the design library.
#[derive(Debug, Error)]
pub enum DesignError {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid block: {0}")]
    InvalidBlock(String),

    #[error("invalid design: {0}")]
    InvalidDesign(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("quadrature order {0} out of range [1, 512]")]
    QuadratureOrder(usize),

    #[error("non-finite integrand value at quadrature node {index} (u = {node})")]
    NonFiniteIntegrand { index: usize, node: f64 },

    #[error("link function {0} not supported by this approximation")]
    UnsupportedLink(&'static str),

    #[error("block size {m} exceeds the enumeration limit {limit}")]
    BlockTooLarge { m: usize, limit: usize },

    #[error("singular covariance for unit {unit}: {detail}")]
    SingularCovariance { unit: usize, detail: String },

    #[error("matrix not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("overflow evaluating unit {unit}: {detail}")]
    Overflow { unit: usize, detail: String },

    #[error("working correlation rho = {rho} outside (-1/(m-1), 1) for m = {m}")]
    InvalidRho { rho: f64, m: usize },

    #[error("information matrices from different methods cannot be combined: {0} vs {1}")]
    MixedMethods(String, String),

    #[error("kernel matrix ill-conditioned (nugget {nugget:e}); try a larger nugget")]
    IllConditioned { nugget: f64 },

    #[error("query point lies outside the surrogate training box: {0}")]
    Extrapolation(String),

    #[error("surrogate mismatch: {0}")]
    SurrogateMismatch(String),

    #[error("unsupported bundle format version {found} (expected {expected})")]
    FormatVersion { found: u32, expected: u32 },

    #[error("no start produced a feasible design")]
    NoFeasibleDesign,

    #[error("singular reference information: {0}")]
    SingularReference(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, DesignError>;
