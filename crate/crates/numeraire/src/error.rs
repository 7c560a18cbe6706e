use thiserror::Error;

/// Crate-wide error type.
///
/// Variants split into two broad classes: bad inputs (malformed markets,
/// dimension mismatches, out-of-range parameters) and numerical failures
/// (arbitrage detected, non-convergence, rank collapse). The CLI maps the
/// first class to exit code 2 and the second to exit code 3.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid market: {0}")]
    InvalidMarket(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("measures are not equivalent: {0}")]
    NotEquivalent(String),

    #[error("market admits arbitrage: {0}")]
    Arbitrage(String),

    #[error("solver did not converge: {0}")]
    NonConvergence(String),

    #[error("volatility matrix is rank deficient: smallest singular value {0:.3e}")]
    RankDeficient(f64),

    #[error("quadrature did not converge: achieved {achieved:.3e}, requested {requested:.3e}")]
    QuadratureNonConvergence { achieved: f64, requested: f64 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerics (as opposed to bad inputs).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Arbitrage(_)
                | Error::NonConvergence(_)
                | Error::RankDeficient(_)
                | Error::QuadratureNonConvergence { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
