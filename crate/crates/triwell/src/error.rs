use thiserror::Error;

/// Errors reported by the simulation library.
///
/// Soft conditions (energy drift slightly above tolerance, skipped seed
/// cells, truncated section trajectories) are reported as flags on result
/// types instead; only hard failures become `Error`.
#[derive(Debug, Error)]
pub enum Error {
    /// A constructor or operation received a value outside its domain.
    #[error("invalid parameter `{name}`: {message}")]
    InvalidParameter { name: &'static str, message: String },

    /// A coordinate map was evaluated at or beyond its chart boundary.
    #[error("chart boundary: {0}")]
    ChartBoundary(String),

    /// The integrated trajectory left the region where the `(w1, w2)` chart
    /// is numerically usable (`|w1|^2 + |w2|^2 > 1e8`), or the step size
    /// underflowed while approaching the boundary. `t` is the failure time.
    #[error("trajectory left the coordinate chart near t = {t}")]
    ChartOverflow { t: f64 },

    /// An iterative routine did not reach its tolerance.
    #[error("{what} did not converge: {detail}")]
    NonConverged { what: &'static str, detail: String },

    /// A bracketing root search did not find the expected number of roots.
    #[error("root bracketing on [{lo}, {hi}] found {found} root(s), expected {expected}")]
    RootBracketing {
        lo: f64,
        hi: f64,
        found: usize,
        expected: usize,
    },

    /// A stability analysis was requested at a point that does not satisfy
    /// the fixed-point residual bound.
    #[error("not a fixed point: residual {residual:.3e} exceeds {tolerance:.3e}")]
    NotAFixedPoint { residual: f64, tolerance: f64 },

    /// Closed-form stability is only available for some equilibrium classes.
    #[error("no closed-form stability for equilibrium class {class}")]
    UnsupportedClass { class: &'static str },

    /// Vector/matrix dimensions do not agree.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// An operator expected to be Hermitian is not, beyond round-off.
    #[error("operator is not Hermitian: defect {defect:.3e}")]
    NotHermitian { defect: f64 },

    /// Configuration file could not be parsed or is inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
