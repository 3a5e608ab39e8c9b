use thiserror::Error;

/// Errors surfaced by the numerical kernels and experiment drivers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("eigenvalue iteration failed to converge within {max_iter} iterations")]
    EigenNonConvergence { max_iter: usize },

    #[error("matrix is not Hurwitz with margin {margin}: eigenvalue {re}{im:+}i has Re >= {}", -margin)]
    NotHurwitz { re: f64, im: f64, margin: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("state diverged at t = {t:.6}: |state| = {norm:.3e}")]
    Diverged { t: f64, norm: f64 },

    #[error("regressor Gram matrix is numerically singular (cond ~ {cond:.3e}); use a richer probing signal")]
    SingularGram { cond: f64 },

    #[error("policy update undefined: input-quadratic block not positive definite (min eigenvalue {min_eig:.3e})")]
    IndefiniteInputBlock { min_eig: f64 },

    #[error("analysis window too short: {len} samples (need >= {min})")]
    WindowTooShort { len: usize, min: usize },

    #[error("iteration did not converge: {0}")]
    NoConvergence(String),
}

pub type Result<T> = std::result::Result<T, Error>;
