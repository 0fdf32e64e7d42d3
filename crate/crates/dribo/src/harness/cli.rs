use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::agents::train::train;
use crate::error::Result;
use crate::harness::config::RunConfig;
use crate::harness::embeddings::export_embeddings;
use crate::harness::eval::eval_generalization;
use crate::harness::gradcheck::grad_check_suite;
use crate::harness::trainer::Trainer;
use crate::oracle::run_verification_suite;
use crate::worlds::EnvMode;

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Preset {
    DeskSac,
    SmallSac,
    SmallPpo,
    PaperScale,
}

impl Preset {
    fn config(self) -> RunConfig {
        match self {
            Preset::DeskSac => RunConfig::desk_sac(),
            Preset::SmallSac => RunConfig::small_sac(),
            Preset::SmallPpo => RunConfig::small_ppo(),
            Preset::PaperScale => RunConfig::paper_scale(),
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Mode {
    Train,
    Test,
}

#[derive(Parser, Debug)]
#[command(
    name = "dribo",
    about = "Distractor-robust representation learning for RL: train, evaluate, verify."
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train an agent jointly with the two-view bottleneck objective.
    Train {
        /// Configuration file (key = value sections); overrides the preset.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Baseline preset the config file overrides.
        #[arg(long, value_enum, default_value = "desk-sac")]
        preset: Preset,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        episodes: Option<usize>,
        /// Ablation: drop the bottleneck term entirely (beta = 0).
        #[arg(long)]
        beta_zero: bool,
    },
    /// Evaluate a checkpoint on both background pools.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 8)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the exact information-theory verification suite.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Export per-step representations with rewards and background ids.
    ExportEmbeddings {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 4)]
        episodes: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        mode: Mode,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Finite-difference checks of all operations and composite losses.
    GradCheck {
        #[arg(long, default_value_t = 100)]
        trials: usize,
    },
}

/// Dispatch a parsed command line; the exit code is nonzero when any
/// requested check fails or an error occurs.
pub fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Train {
            config,
            preset,
            out_dir,
            seed,
            episodes,
            beta_zero,
        } => {
            let mut cfg = match config {
                Some(path) => {
                    let text = std::fs::read_to_string(&path)?;
                    RunConfig::parse_with_base(preset.config(), &text)?
                }
                None => preset.config(),
            };
            if let Some(dir) = out_dir {
                cfg.run.out_dir = dir;
            }
            if let Some(seed) = seed {
                cfg.run.seed = seed;
            }
            if let Some(episodes) = episodes {
                cfg.run.episodes = episodes;
            }
            if beta_zero {
                cfg.loss.beta_zero = true;
            }
            cfg.validate()?;
            let artifacts = train(&cfg)?;
            println!(
                "trained {} episodes; final train return {:.3} +- {:.3}, test return {:.3} +- {:.3}, view-divergence probe {:.6}",
                artifacts.episodes_run,
                artifacts.final_eval.train_mean,
                artifacts.final_eval.train_std,
                artifacts.final_eval.test_mean,
                artifacts.final_eval.test_std,
                artifacts.final_eval.skl_probe,
            );
            println!("metrics: {}", artifacts.metrics_path.display());
            println!("checkpoint: {}", artifacts.checkpoint_path.display());
            Ok(0)
        }
        Command::Eval {
            checkpoint,
            episodes,
            seed,
        } => {
            let trainer = Trainer::load(&checkpoint)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let report = eval_generalization(&trainer, episodes, &mut rng)?;
            println!(
                "train_return {:.4} +- {:.4}",
                report.train_mean, report.train_std
            );
            println!(
                "test_return {:.4} +- {:.4}",
                report.test_mean, report.test_std
            );
            println!("skl_probe {:.6}", report.skl_probe);
            Ok(0)
        }
        Command::Verify { seed } => {
            let records = run_verification_suite(seed)?;
            let mut failed = 0;
            for r in &records {
                println!("{}", r.render());
                if !r.pass {
                    failed += 1;
                }
            }
            println!(
                "verification: {}/{} checks passed",
                records.len() - failed,
                records.len()
            );
            Ok(if failed == 0 { 0 } else { 1 })
        }
        Command::ExportEmbeddings {
            checkpoint,
            episodes,
            out,
            mode,
            seed,
        } => {
            let trainer = Trainer::load(&checkpoint)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let env_mode = match mode {
                Mode::Train => EnvMode::Train,
                Mode::Test => EnvMode::Test,
            };
            let rows = export_embeddings(&trainer, episodes, env_mode, &out, &mut rng)?;
            println!("wrote {} rows to {}", rows.len(), out.display());
            Ok(0)
        }
        Command::GradCheck { trials } => {
            let records = grad_check_suite(trials)?;
            let mut failed = 0;
            for r in &records {
                println!("{}", r.render());
                if !r.pass {
                    failed += 1;
                }
            }
            println!(
                "grad-check: {}/{} suites passed",
                records.len() - failed,
                records.len()
            );
            Ok(if failed == 0 { 0 } else { 1 })
        }
    }
}
