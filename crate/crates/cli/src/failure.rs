use std::fmt;

use graphwave::format::FormatError;
use graphwave::graph::GraphError;
use graphwave::spectral::SpectralError;
use graphwave::vertex::BcError;
use graphwave::wave::WaveError;

/// Outcome of a failed run, keyed by exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad arguments or a malformed graph file (exit 64).
    Usage(String),
    /// Invalid graph, boundary condition or discretization (exit 1).
    Validation(String),
    /// A checked property does not hold (exit 2).
    Property(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 64,
            Failure::Validation(_) => 1,
            Failure::Property(_) => 2,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Validation(m) | Failure::Property(m) => f.write_str(m),
        }
    }
}

impl From<FormatError> for Failure {
    fn from(e: FormatError) -> Self {
        match e {
            FormatError::Syntax { .. } | FormatError::Io(_) => Failure::Usage(e.to_string()),
            FormatError::Graph(_) | FormatError::Bc(_) => Failure::Validation(e.to_string()),
        }
    }
}

impl From<GraphError> for Failure {
    fn from(e: GraphError) -> Self {
        Failure::Validation(e.to_string())
    }
}

impl From<BcError> for Failure {
    fn from(e: BcError) -> Self {
        Failure::Validation(e.to_string())
    }
}

impl From<WaveError> for Failure {
    fn from(e: WaveError) -> Self {
        match e {
            WaveError::MonotonicityViolated { .. } | WaveError::JumpSignViolated { .. } | WaveError::ConeLeakExcessive { .. } => {
                Failure::Property(e.to_string())
            }
            _ => Failure::Validation(e.to_string()),
        }
    }
}

impl From<SpectralError> for Failure {
    fn from(e: SpectralError) -> Self {
        match e {
            SpectralError::EstimateViolated { .. } => Failure::Property(e.to_string()),
            _ => Failure::Validation(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Validation(format!("io error: {e}"))
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Validation(format!("csv error: {e}"))
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Validation(format!("json error: {e}"))
    }
}
