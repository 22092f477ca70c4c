use thiserror::Error;

/// Errors surfaced by the simulator.
#[derive(Debug, Error)]
pub enum Error {
    /// Pseudo-inverse input is numerically rank deficient; the channel draw
    /// is degenerate and the caller should re-draw or abort.
    #[error("rank deficient matrix: smallest singular value {smallest:.3e} below {tol:.3e} x largest")]
    RankDeficient { smallest: f64, tol: f64 },

    /// Gram matrix Q^H Q is too ill-conditioned for a meaningful ZF link.
    #[error("singular Gram matrix: condition number {cond:.3e} exceeds {max:.3e}")]
    Singular { cond: f64, max: f64 },

    /// Inconsistent matrix/vector dimensions.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// Paired vectors of unequal length.
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    /// Bad experiment configuration.
    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}
