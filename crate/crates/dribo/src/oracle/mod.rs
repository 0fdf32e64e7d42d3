//! Exact information-theoretic verification on tabular processes.

mod checks;
mod joint;

pub use checks::*;
pub use joint::{JointTable, VarDef, PROB_FLOOR};
