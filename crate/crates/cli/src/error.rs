use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

/// Failures grouped by the exit status they map to.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 1,
            Self::Data(_) => 2,
            Self::Numerical(_) => 3,
        }
    }
}

impl From<rbpf_svgp::Error> for CliError {
    fn from(e: rbpf_svgp::Error) -> Self {
        use rbpf_svgp::Error as E;
        match e {
            E::NotPositiveDefinite { .. } | E::NonFinite(_) | E::NonFiniteGradient { .. } => {
                Self::Numerical(e.to_string())
            }
            _ => Self::Data(e.to_string()),
        }
    }
}

impl From<rbpf_svgp_sim::Error> for CliError {
    fn from(e: rbpf_svgp_sim::Error) -> Self {
        use rbpf_svgp_sim::Error as E;
        match e {
            E::Config(m) => Self::Config(m),
            E::Core(c) => c.into(),
            other => Self::Data(other.to_string()),
        }
    }
}

impl From<rbpf_svgp_eval::Error> for CliError {
    fn from(e: rbpf_svgp_eval::Error) -> Self {
        match e {
            rbpf_svgp_eval::Error::Core(c) => c.into(),
            other => Self::Data(other.to_string()),
        }
    }
}
