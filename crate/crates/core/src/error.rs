use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid basis: {0}")]
    Basis(String),

    #[error("quadrature grid of {points} points aliases {modes} modes (need at least {required})")]
    Aliasing {
        modes: usize,
        points: usize,
        required: usize,
    },

    #[error("hypothesis check failed for {model}: {detail}")]
    Hypothesis { model: String, detail: String },

    #[error(
        "inner solve did not converge at t = {time}: residual {residual:.3e} after {iterations} iterations ({detail})"
    )]
    NonConvergence {
        time: f64,
        iterations: usize,
        residual: f64,
        detail: String,
    },

    #[error("Picard iteration diverged at n = {iteration}:\n{trace}")]
    Divergence { iteration: usize, trace: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::Dimension { expected, found })
    }
}
