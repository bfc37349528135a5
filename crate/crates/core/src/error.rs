use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: String,
        found: String,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("pair (A, B) is not stabilizable: eigenvalue {re}{im:+}i is uncontrollable")]
    NotStabilizable { re: f64, im: f64 },

    #[error("constraint offset d = {0} must be positive (origin must lie in the interior of the safe set)")]
    NonPositiveOffset(f64),

    #[error("constraint normal c must be nonzero")]
    ZeroNormal,

    #[error(
        "h(x) = c'x + d has no well-defined relative degree (c'A^k B vanishes for every k < n)"
    )]
    NoRelativeDegree,

    #[error("expected {expected} class-K slopes, found {found}")]
    AlphaCount { expected: usize, found: usize },

    #[error("class-K slope {0} must be positive and finite")]
    NonPositiveAlpha(f64),

    #[error("QP weight G must be symmetric positive definite")]
    WeightNotPositiveDefinite,

    #[error("nominal closed loop A - BK is not Hurwitz (spectral abscissa {abscissa:.6e})")]
    NominalNotHurwitz { abscissa: f64 },

    #[error("c'A^(r-1) B G^-1 B'(A')^(r-1) c = {0:.3e} is not positive; inputs are inconsistent with the relative degree")]
    ZeroThetaSq(f64),

    #[error("eigenvalue solver did not converge")]
    EigenSolverFailure,

    #[error("singular value decomposition did not converge")]
    SvdFailure,

    #[error(
        "filtered-mode matrix is numerically singular while |xi| = {xi:.3e} exceeds the tolerance"
    )]
    SingularSolve { xi: f64 },

    #[error(
        "filtered-mode matrix has an eigenvalue within tolerance of zero; parity is undefined"
    )]
    NearSingular,

    #[error("Rosenbrock pencil is singular for every z (transfer function vanishes identically)")]
    PencilSolverFailure,

    #[error("filtered-mode matrix has no positive real eigenvalue")]
    NoPositiveRealEigenvalue,

    #[error("LMI search found no point meeting the required margin after {iterations} Newton steps (best margin {best_margin:.3e})")]
    Infeasible { iterations: usize, best_margin: f64 },

    #[error("LMI solution is ill-conditioned (cond(Q) = {0:.3e})")]
    IllConditioned(f64),

    #[error("Riccati solver failed: {0}")]
    Riccati(String),

    #[error("initial state is outside the safe set (min chain value {0:.3e})")]
    NotInSafeSet(f64),

    #[error("trajectory does not converge; no decay rate can be fitted")]
    NotConverging,

    #[error("internal consistency check failed: {0}")]
    Consistency(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn dims(what: &'static str, expected: impl ToString, found: impl ToString) -> Self {
        Error::DimensionMismatch {
            what,
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }
}
