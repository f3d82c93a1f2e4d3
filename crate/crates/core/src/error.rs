use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("degenerate triangle {triangle} (signed area {area:e})")]
    DegenerateTriangle { triangle: usize, area: f64 },

    #[error("mesh generation failed: {0}")]
    Meshing(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("field has {found} nodal values, mesh has {expected} nodes")]
    SizeMismatch { expected: usize, found: usize },

    #[error("node {node}: {message}")]
    ConstraintViolation { node: usize, message: String },

    #[error("non-finite value at node {node}")]
    NonFinite { node: usize },

    #[error("linear solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    SolverDiverged { iterations: usize, residual: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
