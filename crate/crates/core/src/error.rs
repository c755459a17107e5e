use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid optical setup: {}", .0.join("; "))]
    InvalidSetup(Vec<String>),

    #[error("state is not normalized (norm = {norm})")]
    NotNormalized { norm: f64 },

    #[error(
        "quadrature under-resolves the Fourier kernel: k*du = {phase_step:.4} rad >= pi at |x| = {x_max:e} m"
    )]
    NyquistViolation { phase_step: f64, x_max: f64 },

    #[error("invalid quadrature: {0}")]
    InvalidQuadrature(String),

    #[error("invalid scan: {0}")]
    InvalidScan(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("fit did not converge after {iterations} iterations (last chi2 = {chi2:e})")]
    NoConvergence { iterations: usize, chi2: f64 },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Process exit code: 2 configuration, 3 physics domain, 4 analysis.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidSetup(_) | Error::Config(_) | Error::Io { .. } => 2,
            Error::NotNormalized { .. }
            | Error::NyquistViolation { .. }
            | Error::InvalidQuadrature(_)
            | Error::InvalidScan(_)
            | Error::InvalidArgument(_) => 3,
            Error::NoConvergence { .. } | Error::DegenerateData(_) => 4,
        }
    }
}
