use thiserror::Error;

/// Crate-wide error type. Every fallible operation in the library funnels
/// through this enum so the CLI can render one consistent diagnostic.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    /// The time-weight matrix evaluated at the reference state is not
    /// symmetric positive definite.
    #[error("weight matrix at the reference state is not positive definite (min eigenvalue {min_eig:.3e})")]
    SingularWeight { min_eig: f64 },

    #[error("symmetrized flux matrix {index} departs from symmetry by {defect:.3e} (relative)")]
    NonSymmetric { index: usize, defect: f64 },

    #[error("reference state is not an equilibrium: |source| = {residual:.3e}")]
    NotEquilibrium { residual: f64 },

    #[error("requested margin delta = {delta} exceeds the largest margin {max_delta} attainable by the default exponent sequence")]
    InvalidMargin { delta: f64, max_delta: f64 },

    #[error("localized weight loses positivity at rho = {rho:.3e} (min eigenvalue {min_eig:.3e})")]
    WeightNotPositive { rho: f64, min_eig: f64 },

    #[error("bisection over the schedule base failed to certify a positive decay rate after {iterations} iterations (best c_min = {best_c_min:.3e})")]
    CannotCertify { iterations: usize, best_c_min: f64 },

    #[error("requested band [{q_lo}, {q_hi}] lies outside the resolvable octaves [{q_min}, {q_max}]")]
    UnresolvedBand {
        q_lo: i32,
        q_hi: i32,
        q_min: i32,
        q_max: i32,
    },

    #[error("damping block is numerically singular (min singular value {min_sigma:.3e})")]
    SingularBlock { min_sigma: f64 },

    #[error("adiabatic exponent gamma = {gamma} must be >= 1")]
    InvalidGamma { gamma: f64 },

    #[error("coefficient matrix singular on the grid at t = {t:.6e} (grid point {index})")]
    CoefficientSingular { t: f64, index: usize },

    #[error("suspected blow-up at t = {t:.6e}: max-norm {linf:.3e} exceeds 1e3 x initial {initial:.3e}")]
    BlowupSuspected { t: f64, linf: f64, initial: f64 },

    #[error("adaptive quadrature failed on [{a:.3e}, {b:.3e}]: {detail}")]
    QuadratureFailure { a: f64, b: f64, detail: &'static str },

    #[error("degenerate fit window: {detail}")]
    DegenerateWindow { detail: String },

    #[error("parameter out of range: {what}")]
    OutOfRange { what: String },

    #[error("malformed field file: {0}")]
    Format(String),

    #[error("invalid run configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
