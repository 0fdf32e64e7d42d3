//! Agents over learned representations: soft actor-critic for continuous
//! control, a clipped-surrogate on-policy agent for discrete actions, the
//! sequence replay buffer, and the joint training loops.

mod nets;
mod ppo;
mod replay;
mod sac;
pub mod train;

pub use nets::{log_softmax_rows, Mlp};
pub use ppo::{
    gae, ppo_act, ppo_minibatch_losses, ppo_update, DiscreteActorState, PpoAgent, PpoConfig,
    PpoDecision, PpoMinibatchLosses, PpoRollout, PpoStep, RunningReturnNorm,
};
pub use replay::{Episode, ReplayBuffer};
pub use sac::{
    cropped_stack, sac_act, sac_losses, sac_update, ActorState, SacAgent, SacConfig, SacLosses,
};
