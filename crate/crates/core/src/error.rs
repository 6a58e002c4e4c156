use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("geometry: {0}")]
    Geometry(String),
    #[error("material: {0}")]
    Material(String),
    #[error("assembly: {0}")]
    Assembly(String),
    #[error("constraint: {0}")]
    Constraint(String),
    #[error("solver did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    NotConverged {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },
    #[error("singular Schur complement: {0}")]
    SingularSchur(String),
    #[error("factorization failed: {0}")]
    Factorization(String),
    #[error("dimension mismatch: {0}")]
    Mismatch(String),
    #[error("dof budget exceeded: {required} dofs requested, budget {budget}")]
    Budget { required: usize, budget: usize },
    #[error("eigen solver: {0}")]
    Eigen(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures raised by a linear or eigen solver.
    pub fn is_solver_failure(&self) -> bool {
        matches!(
            self,
            Error::NotConverged { .. }
                | Error::SingularSchur(_)
                | Error::Factorization(_)
                | Error::Eigen(_)
        )
    }
}
