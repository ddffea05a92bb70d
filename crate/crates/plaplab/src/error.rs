use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("objects belong to different meshes")]
    MeshMismatch,

    #[error("point {0:?} lies outside the domain")]
    PointOutsideDomain(Vec<f64>),

    #[error("solver failed: {0}")]
    Solver(String),

    #[error("exhaustion stage {stage} failed: {reason}")]
    Stage { stage: usize, reason: String },

    #[error("degenerate problem: {0}")]
    Degenerate(String),

    #[error("mesh under-resolved: {0}")]
    UnderResolved(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn param(name: &str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.to_string(),
            reason: reason.into(),
        }
    }
}
