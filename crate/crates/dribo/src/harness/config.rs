use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::loss::BetaSchedule;
use crate::views::AugmentationSpec;
use crate::worlds::DistractorConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgentKind {
    Sac,
    Ppo,
}

impl AgentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            AgentKind::Sac => "sac",
            AgentKind::Ppo => "ppo",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AugKind {
    Crop,
    Flip,
    Cutout,
    Intensity,
    GrayscaleMix,
}

impl AugKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            AugKind::Crop => "crop",
            AugKind::Flip => "flip",
            AugKind::Cutout => "cutout",
            AugKind::Intensity => "intensity",
            AugKind::GrayscaleMix => "grayscale_mix",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvSection {
    pub render_size: usize,
    pub episode_len: usize,
    pub action_repeat: usize,
    pub train_pool: usize,
    pub test_pool: usize,
    pub fixed_background: Option<u64>,
    pub discrete_actions: Option<usize>,
    pub reset_theta_min: f64,
    pub reset_theta_max: f64,
    pub reset_omega_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSection {
    pub h_dim: usize,
    pub z_dim: usize,
    pub embed_dim: usize,
    pub embed_hidden_dim: usize,
    pub head_hidden_dim: usize,
    /// Model observation side; augmentations and the deterministic center
    /// crop both produce this size.
    pub crop_size: usize,
    pub stddev_floor: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugSection {
    pub kind: AugKind,
    pub cutout_max: usize,
    pub intensity_lo: f64,
    pub intensity_hi: f64,
    pub grayscale_p: f64,
    pub per_frame: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentSection {
    pub kind: AgentKind,
    pub hidden_dim: usize,
    pub gamma: f64,
    pub tau_q: f64,
    pub tau_encoder: f64,
    pub init_temperature: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub alpha_lr: f64,
    pub target_update_every: usize,
    pub clip: f64,
    pub gae_lambda: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub epochs: usize,
    pub minibatches: usize,
    pub ppo_lr: f64,
    pub reward_norm: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossSection {
    pub encoder_lr: f64,
    pub mi_lr: f64,
    pub block_prev_state_grads: bool,
    pub shared_view_noise: bool,
    pub kl_balance_weight: f64,
    /// Ablation switch: drop the bottleneck entirely (beta = 0).
    pub beta_zero: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSection {
    pub seed: u64,
    pub episodes: usize,
    pub warmup_episodes: usize,
    pub updates_per_episode: usize,
    pub batch_n: usize,
    pub batch_t: usize,
    pub buffer_capacity: usize,
    pub eval_every: usize,
    pub eval_episodes: usize,
    pub checkpoint_every: usize,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub env: EnvSection,
    pub model: ModelSection,
    pub augmentation: AugSection,
    pub schedule: BetaSchedule,
    pub agent: AgentSection,
    pub loss: LossSection,
    pub run: RunSection,
}

impl RunConfig {
    /// Desk-scale SAC on the 28x28 moving-background environment.
    pub fn desk_sac() -> Self {
        RunConfig {
            env: EnvSection {
                render_size: 28,
                episode_len: 50,
                action_repeat: 2,
                train_pool: 8,
                test_pool: 8,
                fixed_background: None,
                discrete_actions: None,
                reset_theta_min: 0.0,
                reset_theta_max: std::f64::consts::PI,
                reset_omega_max: 1.0,
            },
            model: ModelSection {
                h_dim: 32,
                z_dim: 8,
                embed_dim: 16,
                embed_hidden_dim: 48,
                head_hidden_dim: 32,
                crop_size: 24,
                stddev_floor: 1e-4,
            },
            augmentation: AugSection {
                kind: AugKind::Crop,
                cutout_max: 6,
                intensity_lo: 0.8,
                intensity_hi: 1.2,
                grayscale_p: 0.3,
                per_frame: false,
            },
            schedule: BetaSchedule::default_ramp(),
            agent: AgentSection {
                kind: AgentKind::Sac,
                hidden_dim: 64,
                gamma: 0.99,
                tau_q: 0.01,
                tau_encoder: 0.05,
                init_temperature: 0.1,
                actor_lr: 1e-3,
                critic_lr: 1e-3,
                alpha_lr: 1e-4,
                target_update_every: 2,
                clip: 0.2,
                gae_lambda: 0.95,
                entropy_coef: 0.01,
                value_coef: 0.5,
                epochs: 3,
                minibatches: 2,
                ppo_lr: 1e-3,
                reward_norm: true,
            },
            loss: LossSection {
                encoder_lr: 1e-3,
                mi_lr: 1e-3,
                block_prev_state_grads: false,
                shared_view_noise: false,
                kl_balance_weight: 0.8,
                beta_zero: false,
            },
            run: RunSection {
                seed: 1,
                episodes: 100,
                warmup_episodes: 5,
                updates_per_episode: 8,
                batch_n: 4,
                batch_t: 8,
                buffer_capacity: 10_000,
                eval_every: 20,
                eval_episodes: 4,
                checkpoint_every: 50,
                out_dir: PathBuf::from("runs/desk_sac"),
            },
        }
    }

    /// SAC smoke variant: 8x8 rendering, fixed background, intensity views.
    pub fn small_sac() -> Self {
        let mut cfg = RunConfig::desk_sac();
        cfg.env.render_size = 8;
        cfg.env.fixed_background = Some(0);
        cfg.model.crop_size = 8;
        cfg.model.h_dim = 16;
        cfg.model.z_dim = 4;
        cfg.model.embed_dim = 12;
        cfg.model.embed_hidden_dim = 32;
        cfg.model.head_hidden_dim = 24;
        cfg.augmentation.kind = AugKind::Intensity;
        cfg.run.out_dir = PathBuf::from("runs/small_sac");
        cfg
    }

    /// PPO smoke variant: the 4-action discrete small environment.
    pub fn small_ppo() -> Self {
        let mut cfg = RunConfig::small_sac();
        cfg.env.discrete_actions = Some(4);
        cfg.agent.kind = AgentKind::Ppo;
        cfg.run.out_dir = PathBuf::from("runs/small_ppo");
        cfg
    }

    /// Published hyperparameters (target updates, temperatures, widths,
    /// batch geometry, buffer size, beta ramp) behind one preset.
    pub fn paper_scale() -> Self {
        let mut cfg = RunConfig::desk_sac();
        cfg.env.render_size = 100;
        cfg.model.crop_size = 84;
        cfg.model.h_dim = 200;
        cfg.model.z_dim = 30;
        cfg.model.embed_dim = 64;
        cfg.model.embed_hidden_dim = 256;
        cfg.model.head_hidden_dim = 128;
        cfg.agent.hidden_dim = 1024;
        cfg.agent.actor_lr = 1e-5;
        cfg.agent.critic_lr = 1e-5;
        cfg.agent.alpha_lr = 1e-4;
        cfg.loss.encoder_lr = 1e-5;
        cfg.run.batch_n = 8;
        cfg.run.batch_t = 32;
        cfg.run.buffer_capacity = 1_000_000;
        cfg.run.eval_episodes = 8;
        cfg.run.episodes = 8800;
        cfg.run.out_dir = PathBuf::from("runs/paper_scale");
        cfg
    }

    pub fn env_config(&self) -> DistractorConfig {
        DistractorConfig {
            render_size: self.env.render_size,
            episode_len: self.env.episode_len,
            action_repeat: self.env.action_repeat,
            train_pool: self.env.train_pool,
            test_pool: self.env.test_pool,
            fixed_background: self.env.fixed_background,
            discrete_actions: self.env.discrete_actions,
            reset_theta_min: self.env.reset_theta_min,
            reset_theta_max: self.env.reset_theta_max,
            reset_omega_max: self.env.reset_omega_max,
            ..DistractorConfig::desk()
        }
    }

    pub fn augmentation_spec(&self) -> AugmentationSpec {
        match self.augmentation.kind {
            AugKind::Crop => AugmentationSpec::Crop {
                source: self.env.render_size,
                target: self.model.crop_size,
            },
            AugKind::Flip => AugmentationSpec::Flip,
            AugKind::Cutout => AugmentationSpec::Cutout {
                max_extent: self.augmentation.cutout_max,
            },
            AugKind::Intensity => AugmentationSpec::Intensity {
                lo: self.augmentation.intensity_lo,
                hi: self.augmentation.intensity_hi,
            },
            AugKind::GrayscaleMix => AugmentationSpec::GrayscaleMix {
                p: self.augmentation.grayscale_p,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.model.crop_size > self.env.render_size {
            return Err(Error::Config(format!(
                "crop_size {} exceeds render_size {}",
                self.model.crop_size, self.env.render_size
            )));
        }
        if self.augmentation.kind != AugKind::Crop && self.model.crop_size != self.env.render_size
        {
            return Err(Error::Config(
                "non-crop augmentation requires crop_size == render_size".into(),
            ));
        }
        self.schedule
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        self.augmentation_spec()
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        self.env_config()
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        if self.run.batch_t < 2 {
            return Err(Error::Config("batch_t must be at least 2".into()));
        }
        if self.env.episode_len < self.run.batch_t {
            return Err(Error::Config(format!(
                "episode_len {} shorter than batch_t {}",
                self.env.episode_len, self.run.batch_t
            )));
        }
        if self.run.eval_episodes == 0 {
            return Err(Error::Config("eval_episodes must be positive".into()));
        }
        if self.run.buffer_capacity < self.env.episode_len {
            return Err(Error::Config("buffer cannot hold one episode".into()));
        }
        match self.agent.kind {
            AgentKind::Sac => {
                if self.env.discrete_actions.is_some() {
                    return Err(Error::Config(
                        "sac drives the continuous environment".into(),
                    ));
                }
            }
            AgentKind::Ppo => {
                if self.env.discrete_actions.is_none() {
                    return Err(Error::Config(
                        "ppo needs a discrete_actions count".into(),
                    ));
                }
            }
        }
        if !(0.0..=1.0).contains(&self.loss.kl_balance_weight) {
            return Err(Error::Config("kl_balance_weight outside [0, 1]".into()));
        }
        Ok(())
    }

    /// Canonical `key = value` rendering with section headers.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "[env]");
        let _ = writeln!(s, "render_size = {}", self.env.render_size);
        let _ = writeln!(s, "episode_len = {}", self.env.episode_len);
        let _ = writeln!(s, "action_repeat = {}", self.env.action_repeat);
        let _ = writeln!(s, "train_pool = {}", self.env.train_pool);
        let _ = writeln!(s, "test_pool = {}", self.env.test_pool);
        let _ = writeln!(
            s,
            "fixed_background = {}",
            self.env
                .fixed_background
                .map_or("none".to_string(), |v| v.to_string())
        );
        let _ = writeln!(
            s,
            "discrete_actions = {}",
            self.env
                .discrete_actions
                .map_or("none".to_string(), |v| v.to_string())
        );
        let _ = writeln!(s, "reset_theta_min = {}", self.env.reset_theta_min);
        let _ = writeln!(s, "reset_theta_max = {}", self.env.reset_theta_max);
        let _ = writeln!(s, "reset_omega_max = {}", self.env.reset_omega_max);
        let _ = writeln!(s, "\n[model]");
        let _ = writeln!(s, "h_dim = {}", self.model.h_dim);
        let _ = writeln!(s, "z_dim = {}", self.model.z_dim);
        let _ = writeln!(s, "embed_dim = {}", self.model.embed_dim);
        let _ = writeln!(s, "embed_hidden_dim = {}", self.model.embed_hidden_dim);
        let _ = writeln!(s, "head_hidden_dim = {}", self.model.head_hidden_dim);
        let _ = writeln!(s, "crop_size = {}", self.model.crop_size);
        let _ = writeln!(s, "stddev_floor = {:e}", self.model.stddev_floor);
        let _ = writeln!(s, "\n[augmentation]");
        let _ = writeln!(s, "kind = {}", self.augmentation.kind.as_str());
        let _ = writeln!(s, "cutout_max = {}", self.augmentation.cutout_max);
        let _ = writeln!(s, "intensity_lo = {}", self.augmentation.intensity_lo);
        let _ = writeln!(s, "intensity_hi = {}", self.augmentation.intensity_hi);
        let _ = writeln!(s, "grayscale_p = {}", self.augmentation.grayscale_p);
        let _ = writeln!(s, "per_frame = {}", self.augmentation.per_frame);
        let _ = writeln!(s, "\n[schedule]");
        let _ = writeln!(s, "beta_start = {:e}", self.schedule.beta_start);
        let _ = writeln!(s, "beta_end = {:e}", self.schedule.beta_end);
        let _ = writeln!(s, "start_episode = {}", self.schedule.start_episode);
        let _ = writeln!(s, "end_episode = {}", self.schedule.end_episode);
        let _ = writeln!(s, "\n[agent]");
        let _ = writeln!(s, "kind = {}", self.agent.kind.as_str());
        let _ = writeln!(s, "hidden_dim = {}", self.agent.hidden_dim);
        let _ = writeln!(s, "gamma = {}", self.agent.gamma);
        let _ = writeln!(s, "tau_q = {}", self.agent.tau_q);
        let _ = writeln!(s, "tau_encoder = {}", self.agent.tau_encoder);
        let _ = writeln!(s, "init_temperature = {}", self.agent.init_temperature);
        let _ = writeln!(s, "actor_lr = {:e}", self.agent.actor_lr);
        let _ = writeln!(s, "critic_lr = {:e}", self.agent.critic_lr);
        let _ = writeln!(s, "alpha_lr = {:e}", self.agent.alpha_lr);
        let _ = writeln!(s, "target_update_every = {}", self.agent.target_update_every);
        let _ = writeln!(s, "clip = {}", self.agent.clip);
        let _ = writeln!(s, "gae_lambda = {}", self.agent.gae_lambda);
        let _ = writeln!(s, "entropy_coef = {}", self.agent.entropy_coef);
        let _ = writeln!(s, "value_coef = {}", self.agent.value_coef);
        let _ = writeln!(s, "epochs = {}", self.agent.epochs);
        let _ = writeln!(s, "minibatches = {}", self.agent.minibatches);
        let _ = writeln!(s, "ppo_lr = {:e}", self.agent.ppo_lr);
        let _ = writeln!(s, "reward_norm = {}", self.agent.reward_norm);
        let _ = writeln!(s, "\n[loss]");
        let _ = writeln!(s, "encoder_lr = {:e}", self.loss.encoder_lr);
        let _ = writeln!(s, "mi_lr = {:e}", self.loss.mi_lr);
        let _ = writeln!(
            s,
            "block_prev_state_grads = {}",
            self.loss.block_prev_state_grads
        );
        let _ = writeln!(s, "shared_view_noise = {}", self.loss.shared_view_noise);
        let _ = writeln!(s, "kl_balance_weight = {}", self.loss.kl_balance_weight);
        let _ = writeln!(s, "beta_zero = {}", self.loss.beta_zero);
        let _ = writeln!(s, "\n[run]");
        let _ = writeln!(s, "seed = {}", self.run.seed);
        let _ = writeln!(s, "episodes = {}", self.run.episodes);
        let _ = writeln!(s, "warmup_episodes = {}", self.run.warmup_episodes);
        let _ = writeln!(s, "updates_per_episode = {}", self.run.updates_per_episode);
        let _ = writeln!(s, "batch_n = {}", self.run.batch_n);
        let _ = writeln!(s, "batch_t = {}", self.run.batch_t);
        let _ = writeln!(s, "buffer_capacity = {}", self.run.buffer_capacity);
        let _ = writeln!(s, "eval_every = {}", self.run.eval_every);
        let _ = writeln!(s, "eval_episodes = {}", self.run.eval_episodes);
        let _ = writeln!(s, "checkpoint_every = {}", self.run.checkpoint_every);
        let _ = writeln!(s, "out_dir = {}", self.run.out_dir.display());
        s
    }

    /// Parse the `key = value` format; starts from the desk defaults, then
    /// applies overrides. Unknown sections or keys are rejected.
    pub fn parse(text: &str) -> Result<Self> {
        RunConfig::parse_with_base(RunConfig::desk_sac(), text)
    }

    /// Parse with an explicit base configuration to override.
    pub fn parse_with_base(base: RunConfig, text: &str) -> Result<Self> {
        let mut cfg = base;
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if line.starts_with('[') && line.ends_with(']') {
                section = line[1..line.len() - 1].trim().to_string();
                if !matches!(
                    section.as_str(),
                    "env" | "model" | "augmentation" | "schedule" | "agent" | "loss" | "run"
                ) {
                    return Err(Error::Config(format!(
                        "line {}: unknown section [{section}]",
                        lineno + 1
                    )));
                }
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key = value", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            cfg.apply(&section, key, value).map_err(|e| {
                Error::Config(format!("line {}: {e}", lineno + 1))
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        RunConfig::parse(&text)
    }

    fn apply(&mut self, section: &str, key: &str, value: &str) -> Result<()> {
        fn as_usize(v: &str) -> Result<usize> {
            v.parse()
                .map_err(|_| Error::Config(format!("expected integer, got {v:?}")))
        }
        fn as_u64(v: &str) -> Result<u64> {
            v.parse()
                .map_err(|_| Error::Config(format!("expected integer, got {v:?}")))
        }
        fn as_f64(v: &str) -> Result<f64> {
            v.parse()
                .map_err(|_| Error::Config(format!("expected number, got {v:?}")))
        }
        fn as_bool(v: &str) -> Result<bool> {
            match v {
                "true" => Ok(true),
                "false" => Ok(false),
                _ => Err(Error::Config(format!("expected true/false, got {v:?}"))),
            }
        }
        fn as_opt_u64(v: &str) -> Result<Option<u64>> {
            if v == "none" {
                Ok(None)
            } else {
                as_u64(v).map(Some)
            }
        }
        fn as_opt_usize(v: &str) -> Result<Option<usize>> {
            if v == "none" {
                Ok(None)
            } else {
                as_usize(v).map(Some)
            }
        }
        match (section, key) {
            ("env", "render_size") => self.env.render_size = as_usize(value)?,
            ("env", "episode_len") => self.env.episode_len = as_usize(value)?,
            ("env", "action_repeat") => self.env.action_repeat = as_usize(value)?,
            ("env", "train_pool") => self.env.train_pool = as_usize(value)?,
            ("env", "test_pool") => self.env.test_pool = as_usize(value)?,
            ("env", "fixed_background") => self.env.fixed_background = as_opt_u64(value)?,
            ("env", "discrete_actions") => self.env.discrete_actions = as_opt_usize(value)?,
            ("env", "reset_theta_min") => self.env.reset_theta_min = as_f64(value)?,
            ("env", "reset_theta_max") => self.env.reset_theta_max = as_f64(value)?,
            ("env", "reset_omega_max") => self.env.reset_omega_max = as_f64(value)?,
            ("model", "h_dim") => self.model.h_dim = as_usize(value)?,
            ("model", "z_dim") => self.model.z_dim = as_usize(value)?,
            ("model", "embed_dim") => self.model.embed_dim = as_usize(value)?,
            ("model", "embed_hidden_dim") => self.model.embed_hidden_dim = as_usize(value)?,
            ("model", "head_hidden_dim") => self.model.head_hidden_dim = as_usize(value)?,
            ("model", "crop_size") => self.model.crop_size = as_usize(value)?,
            ("model", "stddev_floor") => self.model.stddev_floor = as_f64(value)?,
            ("augmentation", "kind") => {
                self.augmentation.kind = match value {
                    "crop" => AugKind::Crop,
                    "flip" => AugKind::Flip,
                    "cutout" => AugKind::Cutout,
                    "intensity" => AugKind::Intensity,
                    "grayscale_mix" => AugKind::GrayscaleMix,
                    _ => return Err(Error::Config(format!("unknown augmentation {value:?}"))),
                }
            }
            ("augmentation", "cutout_max") => self.augmentation.cutout_max = as_usize(value)?,
            ("augmentation", "intensity_lo") => self.augmentation.intensity_lo = as_f64(value)?,
            ("augmentation", "intensity_hi") => self.augmentation.intensity_hi = as_f64(value)?,
            ("augmentation", "grayscale_p") => self.augmentation.grayscale_p = as_f64(value)?,
            ("augmentation", "per_frame") => self.augmentation.per_frame = as_bool(value)?,
            ("schedule", "beta_start") => self.schedule.beta_start = as_f64(value)?,
            ("schedule", "beta_end") => self.schedule.beta_end = as_f64(value)?,
            ("schedule", "start_episode") => self.schedule.start_episode = as_usize(value)?,
            ("schedule", "end_episode") => self.schedule.end_episode = as_usize(value)?,
            ("agent", "kind") => {
                self.agent.kind = match value {
                    "sac" => AgentKind::Sac,
                    "ppo" => AgentKind::Ppo,
                    _ => return Err(Error::Config(format!("unknown agent {value:?}"))),
                }
            }
            ("agent", "hidden_dim") => self.agent.hidden_dim = as_usize(value)?,
            ("agent", "gamma") => self.agent.gamma = as_f64(value)?,
            ("agent", "tau_q") => self.agent.tau_q = as_f64(value)?,
            ("agent", "tau_encoder") => self.agent.tau_encoder = as_f64(value)?,
            ("agent", "init_temperature") => self.agent.init_temperature = as_f64(value)?,
            ("agent", "actor_lr") => self.agent.actor_lr = as_f64(value)?,
            ("agent", "critic_lr") => self.agent.critic_lr = as_f64(value)?,
            ("agent", "alpha_lr") => self.agent.alpha_lr = as_f64(value)?,
            ("agent", "target_update_every") => {
                self.agent.target_update_every = as_usize(value)?
            }
            ("agent", "clip") => self.agent.clip = as_f64(value)?,
            ("agent", "gae_lambda") => self.agent.gae_lambda = as_f64(value)?,
            ("agent", "entropy_coef") => self.agent.entropy_coef = as_f64(value)?,
            ("agent", "value_coef") => self.agent.value_coef = as_f64(value)?,
            ("agent", "epochs") => self.agent.epochs = as_usize(value)?,
            ("agent", "minibatches") => self.agent.minibatches = as_usize(value)?,
            ("agent", "ppo_lr") => self.agent.ppo_lr = as_f64(value)?,
            ("agent", "reward_norm") => self.agent.reward_norm = as_bool(value)?,
            ("loss", "encoder_lr") => self.loss.encoder_lr = as_f64(value)?,
            ("loss", "mi_lr") => self.loss.mi_lr = as_f64(value)?,
            ("loss", "block_prev_state_grads") => {
                self.loss.block_prev_state_grads = as_bool(value)?
            }
            ("loss", "shared_view_noise") => self.loss.shared_view_noise = as_bool(value)?,
            ("loss", "kl_balance_weight") => self.loss.kl_balance_weight = as_f64(value)?,
            ("loss", "beta_zero") => self.loss.beta_zero = as_bool(value)?,
            ("run", "seed") => self.run.seed = as_u64(value)?,
            ("run", "episodes") => self.run.episodes = as_usize(value)?,
            ("run", "warmup_episodes") => self.run.warmup_episodes = as_usize(value)?,
            ("run", "updates_per_episode") => self.run.updates_per_episode = as_usize(value)?,
            ("run", "batch_n") => self.run.batch_n = as_usize(value)?,
            ("run", "batch_t") => self.run.batch_t = as_usize(value)?,
            ("run", "buffer_capacity") => self.run.buffer_capacity = as_usize(value)?,
            ("run", "eval_every") => self.run.eval_every = as_usize(value)?,
            ("run", "eval_episodes") => self.run.eval_episodes = as_usize(value)?,
            ("run", "checkpoint_every") => self.run.checkpoint_every = as_usize(value)?,
            ("run", "out_dir") => self.run.out_dir = PathBuf::from(value),
            ("", k) => {
                return Err(Error::Config(format!(
                    "key {k:?} appears before any [section]"
                )))
            }
            (s, k) => {
                return Err(Error::Config(format!("unknown key {k:?} in [{s}]")))
            }
        }
        Ok(())
    }
}
