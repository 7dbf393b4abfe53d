//! Trajectory producers: the scripted human-like player, symbolic and hybrid
//! PPO agents, the PPO trainer, checkpoints and the rollout harness.

mod checkpoint;
mod human;
mod nets;
mod ppo;
mod rollout;
mod trajectory;

pub use checkpoint::{Checkpoint, CHECKPOINT_KIND};
pub use human::{scripted_human_policy, shortest_path_follower, HumanTraits};
pub use nets::{
    entropy, log_softmax, policy_input, softmax, symbolic_features, ActorCritic, BranchCache, BranchNet, PolicyInput, PolicyKind,
    PolicyNetSpec, SYMBOLIC_FEATURES,
};
pub use ppo::{
    clipped_surrogate_grad, gae, ppo_train, smoothed_time_to_goal, EpisodeLog, EvalPoint, PpoConfig, TrainReport,
};
pub use rollout::{evaluate_success, rollout, RolloutOptions};
pub use trajectory::{Recorder, Source, Trajectory, TrajectoryStep};

#[derive(Debug, thiserror::Error)]
pub enum PolicyError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("trajectory generation failed: {0}")]
    Generation(String),
    #[error("malformed trajectory data: {0}")]
    Format(String),
    #[error("checkpoint load failed: {0}")]
    Load(String),
    #[error("non-finite value during training: {0}")]
    NonFinite(String),
    #[error(transparent)]
    Nn(#[from] crate::nnkit::NnError),
    #[error(transparent)]
    Nav(#[from] crate::navsim::NavError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}
