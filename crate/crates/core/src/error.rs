use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(
        "fixed-point solver did not converge at z = {z_re}{z_im:+}i after {iterations} iterations (residual {residual:.3e})"
    )]
    NonConvergence {
        z_re: f64,
        z_im: f64,
        iterations: usize,
        residual: f64,
    },

    #[error("pole: |1 + t m(z)| vanishes for atom t = {atom}")]
    Pole { atom: f64 },

    #[error(
        "mean parameter denominator nearly singular at z = {z_re}{z_im:+}i (|D| = {modulus:.3e})"
    )]
    NearSingular { z_re: f64, z_im: f64, modulus: f64 },

    #[error("covariance kernel evaluated at coincident points")]
    CoincidentPoints,

    #[error("contours intersect: {0}")]
    ContourOverlap(String),

    #[error("contour clearance violated: {0}")]
    ContourClearance(String),

    #[error("quadrature unstable: doubling to {nodes} nodes changed the result by {change:.3e}")]
    QuadratureDiverged { nodes: usize, change: f64 },

    #[error("contour integral has imaginary part {imag:.3e} (real part {real:.6e})")]
    NonReal { real: f64, imag: f64 },

    #[error("logarithm outside its domain: {0}")]
    LogDomain(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("singular spectrum: smallest eigenvalue {min_eigenvalue:.3e}")]
    SingularMatrix { min_eigenvalue: f64 },

    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    #[error("insufficient data: {entries} entries, at least 100 required")]
    InsufficientData { entries: usize },

    #[error("eigensolver failure: {0}")]
    EigensolverFailure(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("malformed data file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of an iterative or quadrature routine, as opposed to
    /// bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence { .. }
                | Error::QuadratureDiverged { .. }
                | Error::NonReal { .. }
                | Error::NearSingular { .. }
                | Error::Pole { .. }
                | Error::EigensolverFailure(_)
        )
    }
}
