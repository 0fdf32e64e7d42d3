//! Synthetic environments: a rendered continuous-control plant whose
//! background evolves independently of actions (disjoint train/test
//! background pools), and a fully enumerable tabular process feeding the
//! exact information-theory oracle.

mod distractor;
mod tabular;

pub use distractor::{DistractorConfig, DistractorControl, EnvMode, TEST_POOL_BASE};
pub use tabular::{
    enumerate_trajectories, extend_with_optimal_actions, optimal_actions,
    state_marginals_direct, TabularPomdp,
};
