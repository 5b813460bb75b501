use thiserror::Error;

use crate::domain::AgentId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid agent {agent}: {reason}")]
    InvalidAgent { agent: AgentId, reason: String },

    #[error("unknown agent {0}")]
    UnknownAgent(AgentId),

    #[error("duplicate agent {0}")]
    DuplicateAgent(AgentId),

    #[error("asymmetric adjacency between {0} and {1}")]
    AsymmetricEdge(AgentId, AgentId),

    #[error("Assumption-3 violated: agents with positive value do not form a connected graph")]
    DisconnectedSupport,

    #[error("invalid event for agent {agent}: {reason}")]
    InvalidEvent { agent: AgentId, reason: String },

    #[error("agent {agent} contributes at t={time} after the deadline T={deadline}")]
    AfterDeadline { agent: AgentId, time: f64, deadline: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("{value} is outside the domain of {function}")]
    Domain { function: &'static str, value: f64 },

    #[error("negative contribution {0}: agents are not allowed to sell securities")]
    NegativeContribution(f64),

    #[error("{operation} is not defined for {kind}")]
    Unsupported { operation: &'static str, kind: String },

    #[error("search space of {count} profiles exceeds the configured cap of {cap}")]
    SearchTooLarge { count: u128, cap: u128 },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
