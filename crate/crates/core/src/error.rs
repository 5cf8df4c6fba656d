use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("field lives on grid {found:#x}, expected grid {expected:#x}")]
    GridMismatch { expected: u64, found: u64 },

    #[error("field is not sphere-valued: max ||m|-1| = {defect:e}")]
    Constraint { defect: f64 },

    #[error("invalid input: {0}")]
    Usage(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("time step {dt:e} exceeds stability limit {limit:e}")]
    Unstable { dt: f64, limit: f64 },

    #[error("integration blew up after t = {last_good_time}")]
    BlowUp { last_good_time: f64 },

    #[error("dense size {size} exceeds cap {cap}; use an iterative method")]
    TooLarge { size: usize, cap: usize },

    #[error("eigensolver failed on {dim}x{dim} matrix (max |a_ij| = {max_entry:e})")]
    Eigen { dim: usize, max_entry: f64 },

    #[error(
        "shape condition violated: lambda2 - lambda1 = {gap:e} <= {gap_tol:e} \
         (eigenvalues {eigvals:?})"
    )]
    ShapeCondition {
        gap: f64,
        gap_tol: f64,
        eigvals: [f64; 3],
    },

    #[error("spectral clearance failed: min |Re mu| = {min_abs_re:e}")]
    Clearance { min_abs_re: f64 },

    #[error("{0}")]
    NotConverged(#[from] Box<NotConverged>),

    #[error("need at least {needed} distinct samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("snapshot: {0}")]
    Snapshot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Non-convergence of an iterative procedure, carrying the best iterate found.
#[derive(Debug, Error)]
#[error("{what} did not converge after {iterations} iterations (best residual {residual:e})")]
pub struct NotConverged {
    pub what: &'static str,
    pub iterations: usize,
    pub residual: f64,
    pub best: Option<crate::grid::VectorField>,
}

impl Error {
    pub(crate) fn not_converged(
        what: &'static str,
        iterations: usize,
        residual: f64,
        best: Option<crate::grid::VectorField>,
    ) -> Self {
        Error::NotConverged(Box::new(NotConverged {
            what,
            iterations,
            residual,
            best,
        }))
    }
}
