use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("invalid disorder model: {0}")]
    Model(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("solver `{solver}` does not support this problem: {reason}")]
    Unsupported {
        solver: &'static str,
        reason: String,
    },

    /// Two distinct configurations (not related by a global flip) are
    /// optimal within the tie tolerance.
    #[error("degenerate ground state: energy gap {gap:e} below tie tolerance")]
    TieDetected { gap: f64 },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit status used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Geometry(_) | Error::Model(_) | Error::Config(_) | Error::Parse(_) => 2,
            Error::Unsupported { .. } => 2,
            Error::TieDetected { .. } | Error::Invariant(_) => 3,
            Error::Io(_) => 4,
        }
    }
}
