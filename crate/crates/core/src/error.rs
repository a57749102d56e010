use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parafermion index {index} out of range 1..={max}")]
    IndexOutOfRange { index: usize, max: usize },

    #[error("invalid chain geometry: {0}")]
    InvalidGeometry(String),

    #[error("symmetry is not an on-site unitary product: {0}")]
    NonOnSiteSymmetry(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("dense cap exceeded: {n_spins} spins > cap of {cap}")]
    CapExceeded { n_spins: usize, cap: usize },

    #[error("operator is not Hermitian (residual {0:.3e})")]
    NotHermitian(f64),

    #[error("Hamiltonian does not commute with the parity operator (residual {0:.3e})")]
    ParityBroken(f64),

    #[error("too few levels for spacing statistics: {got} < {need}")]
    TooFewLevels { got: usize, need: usize },

    #[error("singular value decomposition failed on a {rows}x{cols} block")]
    Svd { rows: usize, cols: usize },

    #[error("eigendecomposition failed on a {0}x{0} matrix")]
    Eigen(usize),

    #[error("static operator is not anchored to a chain end: {0}")]
    NotAnchored(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("checkpoint format: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
