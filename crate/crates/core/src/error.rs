use alloc::string::String;

use crate::gridworld::AgentId;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("agent {0} is dead or does not exist")]
    UnknownAgent(AgentId),
    #[error("agent {0} appears more than once in the joint action")]
    DuplicateAgent(AgentId),
    #[error("episode already finished")]
    EpisodeFinished,
    #[error("no agent is alive")]
    EmptyWorld,
    #[error("domain error: {0}")]
    Domain(&'static str),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("trace is stale: parameters changed since the forward pass")]
    StaleTrace,
    #[error("cannot ensemble an empty set of distributions")]
    EmptyEnsemble,
    #[error("agent {0} is not a member of the sub-graph")]
    MemberNotFound(AgentId),
}
