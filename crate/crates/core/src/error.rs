use crate::topology::PeerId;

/// Errors raised by the simulator and the verification harness.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("the source peer cannot leave the network")]
    SourceDepartureForbidden,
    #[error("unknown peer {0}")]
    UnknownPeer(PeerId),
    #[error("exact enumeration limit exceeded: {0}")]
    OracleLimitExceeded(String),
    #[error("analysis is limited to two flows (network has {0})")]
    AnalysisLimitedToTwoFlows(usize),
    #[error("invalid flow {flow} (flows are 1..={flows})")]
    InvalidFlow { flow: usize, flows: usize },
    #[error("insufficient slots: horizon {slots} < max distance {max_distance} + 1")]
    InsufficientSlots { slots: usize, max_distance: usize },
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("malformed churn script at line {line}: {reason}")]
    ChurnScript { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    /// True for errors caused by bad user input rather than a broken
    /// internal invariant.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter(_)
                | Error::SourceDepartureForbidden
                | Error::UnknownPeer(_)
                | Error::OracleLimitExceeded(_)
                | Error::AnalysisLimitedToTwoFlows(_)
                | Error::InvalidFlow { .. }
                | Error::InsufficientSlots { .. }
                | Error::ChurnScript { .. }
        )
    }
}
