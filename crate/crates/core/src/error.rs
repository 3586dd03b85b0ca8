use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("singular network: (S^-1 - S22) is not invertible (condition number {condition:.3e})")]
    SingularNetwork { condition: f64 },

    #[error("Neumann series diverges: spectral radius of S*S22 is {spectral_radius:.6}")]
    Divergent { spectral_radius: f64 },

    #[error("degenerate high-drive reference below floor {floor:e} at {} frequencies (first: {:?})", .freqs_hz.len(), .freqs_hz.first())]
    DegenerateReference { floor: f64, freqs_hz: Vec<f64> },

    #[error("frequency grids do not match: {0}")]
    GridMismatch(String),

    #[error("fit failed: {0}")]
    FitFailure(String),

    #[error("parameter not identifiable: {0}")]
    Unidentifiable(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: msg.into(),
        }
    }

    /// Short machine-readable tag for the error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid_argument",
            Error::SingularNetwork { .. } => "singular_network",
            Error::Divergent { .. } => "divergent_series",
            Error::DegenerateReference { .. } => "degenerate_reference",
            Error::GridMismatch(_) => "grid_mismatch",
            Error::FitFailure(_) => "fit_failure",
            Error::Unidentifiable(_) => "unidentifiable",
            Error::Parse { .. } => "parse",
            Error::Io(_) => "io",
        }
    }
}
