use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid space: {0}")]
    InvalidSpace(String),

    #[error("field length {found} does not match node count {expected}")]
    SizeMismatch { expected: usize, found: usize },

    #[error("node index {index} out of range (node count {count})")]
    NodeOutOfRange { index: usize, count: usize },

    /// `N' = dim_loc` at some nodes where `tr H_f - Δf` is not negligible.
    #[error("N' = dim_loc singularity at {} node(s) (first: {:?}); |tr H_f - Δf| exceeds tolerance {tol:e}", .nodes.len(), .nodes.first())]
    Singular { nodes: Vec<usize>, tol: f64 },

    #[error("dimension parameter N' = {n_prime} is below dim_loc = {dim_loc} at node {node}")]
    DimensionTooSmall { n_prime: f64, dim_loc: usize, node: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("no interior nodes left after excluding the boundary collar")]
    EmptyInterior,

    #[error("probe field set is empty")]
    EmptyProbeSet,

    #[error("invalid fractal parameters: {0}")]
    InvalidFractal(String),

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
