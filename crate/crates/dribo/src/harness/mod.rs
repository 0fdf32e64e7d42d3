//! Operational shell: configuration, persistence, metrics, evaluation,
//! embedding export, verification drivers, and the command line.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod embeddings;
pub mod eval;
pub mod gradcheck;
pub mod metrics;
pub mod trainer;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use config::{AgentKind, AugKind, RunConfig};
pub use embeddings::{export_embeddings, read_embeddings, EmbeddingRow};
pub use eval::{eval_generalization, random_policy_returns, EvalReport};
pub use gradcheck::{grad_check_suite, GradCheckRecord, GRAD_TOL};
pub use metrics::{read_metrics, MetricsWriter};
pub use trainer::{AgentState, Trainer};
