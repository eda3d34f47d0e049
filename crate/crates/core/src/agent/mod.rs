//! Soft actor-critic on encoder features, a FIFO replay buffer and the
//! two-phase training loop: curiosity-driven exploration, then adaptation
//! to the sparse task reward with policy, critics and buffer carried over.

mod replay;
mod sac;
mod suite;
mod trainer;

pub use replay::{ReplayBuffer, Transition};
pub use sac::{
    critic_spec, policy_spec, squashed_log_prob, ActionMode, Sac, SacBatch, SacConfig, SacReport, LOG_STD_MAX,
    LOG_STD_MIN,
};
pub use suite::{gradcheck_suite, network_specs};
pub use trainer::{
    policy_input, run_adaptation_phase, run_exploration_phase, train, AgentState, Learner, LogSink, RewardStream,
    TrainerConfig, CHECKPOINT_KIND,
};

pub use crate::metrics::Phase;

use thiserror::Error;

use crate::curiosity::CuriosityError;
use crate::env::EnvError;
use crate::metrics::MetricsError;
use crate::numerics::NumericsError;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Curiosity(#[from] CuriosityError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("policy produced a non-finite log-std ({0})")]
    NonFiniteLogStd(f64),
    #[error("non-finite {what} loss ({value})")]
    NonFiniteLoss { what: &'static str, value: f64 },
    #[error("cannot sample from an empty replay buffer")]
    EmptyBuffer,
    #[error("requested {requested} samples from a buffer of {size}")]
    SampleTooLarge { requested: usize, size: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("checkpoint does not match the run: {0}")]
    CheckpointMismatch(String),
}

pub type Result<T, E = AgentError> = std::result::Result<T, E>;
