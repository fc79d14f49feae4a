use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failure modes shared by every layer of the toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("index out of range: {0}")]
    Index(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("steady state is not unique (kernel dimension {kernel_dim})")]
    DegenerateSteadyState { kernel_dim: usize },

    #[error("numerical failure: {message} (residual {residual:e})")]
    Numerical { message: String, residual: f64 },

    #[error(
        "photon truncation exceeded the ceiling n_max = {ceiling} \
         (top-sector population {top_population:e})"
    )]
    TruncationFailure { ceiling: usize, top_population: f64 },

    #[error("field correlation vanishes identically; spectrum cannot be normalized")]
    ZeroSignal,

    #[error("no excitation-sector reduction available for this model: {0}")]
    UnsupportedScheme(String),

    #[error("spectrum has {n_peaks} peaks; a single Lorentzian fit is not defined")]
    Doublet { n_peaks: usize },

    #[error("Lorentzian fit failed: {0}")]
    Fit(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("precondition violated: {0}")]
    Precondition(String),
}

/// Coarse classification used by front ends to map failures onto exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Numerical,
    Truncation,
    Fit,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Index(_)
            | Error::Config(_)
            | Error::Dimension { .. }
            | Error::Domain(_)
            | Error::Precondition(_)
            | Error::UnsupportedScheme(_) => ErrorKind::Config,
            Error::DegenerateSteadyState { .. } | Error::Numerical { .. } | Error::ZeroSignal => {
                ErrorKind::Numerical
            }
            Error::TruncationFailure { .. } => ErrorKind::Truncation,
            Error::Doublet { .. } | Error::Fit(_) => ErrorKind::Fit,
        }
    }

    /// Stable machine-readable tag.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Index(_) => "index",
            Error::Config(_) => "config",
            Error::Dimension { .. } => "dimension",
            Error::DegenerateSteadyState { .. } => "degenerate-steady-state",
            Error::Numerical { .. } => "numerical",
            Error::TruncationFailure { .. } => "truncation-failure",
            Error::ZeroSignal => "zero-signal",
            Error::UnsupportedScheme(_) => "unsupported-scheme",
            Error::Doublet { .. } => "doublet-detected",
            Error::Fit(_) => "fit",
            Error::Domain(_) => "domain",
            Error::Precondition(_) => "precondition",
        }
    }
}
