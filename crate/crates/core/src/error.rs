use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("equilibrium residual {residual:e} exceeds 1e-9")]
    NotEquilibrium { residual: f64 },

    #[error("unstable closed loop: spectral radius {spectral_radius}")]
    UnstableClosedLoop { spectral_radius: f64 },

    #[error("Riccati iteration did not converge within {iterations} iterations")]
    DareDivergence { iterations: usize },

    #[error("Riccati gain does not stabilize the plant")]
    NotStabilizing,

    #[error("eigenvalue iteration did not converge")]
    EigenNonConvergence,

    #[error("singular linear system")]
    Singular,

    #[error("no stable seed controller after {attempts} initializations")]
    NoStableSeed { attempts: usize },

    #[error("malformed network encoding: {0}")]
    Decode(String),
}

impl Error {
    pub fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }
}
