//! Distractor-robust representation learning for RL.
//!
//! The crate trains a recurrent state-space encoder with a multi-view
//! information bottleneck objective: an InfoNCE term pulls the
//! representations of two augmented views of the same observation sequence
//! together, while a symmetrized-KL term (weighted by a scheduled `beta`)
//! compresses away view-specific content. SAC and PPO agents consume the
//! learned representations, synthetic environments provide action-independent
//! visual distractors with disjoint train/test background pools, and an exact
//! enumeration oracle verifies the underlying information-theoretic
//! identities on tiny tabular processes.

pub mod agents;
pub mod error;
pub mod gaussians;
pub mod harness;
pub mod loss;
pub mod mi;
pub mod ndgrad;
pub mod oracle;
pub mod rssm;
pub mod views;
pub mod worlds;

pub use error::{Error, Result};
