use std::path::Path;

use crate::agents::{PpoAgent, PpoConfig, SacAgent, SacConfig};
use crate::error::{Error, Result};
use crate::harness::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use crate::harness::config::{AgentKind, RunConfig};
use crate::mi::BilinearCritic;
use crate::ndgrad::Adam;
use crate::rssm::{Rssm, RssmConfig};

pub enum AgentState {
    Sac(SacAgent),
    Ppo(PpoAgent),
}

/// Everything a run owns: the encoder, its Polyak target, the bilinear
/// similarity critic, the agent, and the two optimizers shared across
/// objectives (encoder, similarity critic).
pub struct Trainer {
    pub cfg: RunConfig,
    pub model: Rssm,
    pub target_model: Rssm,
    pub mi_critic: BilinearCritic,
    pub agent: AgentState,
    pub encoder_opt: Adam,
    pub mi_opt: Adam,
}

impl Trainer {
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        let action_input_dim = match cfg.agent.kind {
            AgentKind::Sac => 1,
            AgentKind::Ppo => 4,
        };
        let rssm_cfg = RssmConfig {
            obs_dim: cfg.model.crop_size * cfg.model.crop_size,
            action_input_dim,
            embed_dim: cfg.model.embed_dim,
            embed_hidden_dim: cfg.model.embed_hidden_dim,
            head_hidden_dim: cfg.model.head_hidden_dim,
            h_dim: cfg.model.h_dim,
            z_dim: cfg.model.z_dim,
            stddev_floor: cfg.model.stddev_floor,
        };
        let seed = cfg.run.seed;
        let model = Rssm::new(rssm_cfg, seed.wrapping_add(1))?;
        let target_model = model.clone_as_target()?;
        let mi_critic = BilinearCritic::new(model.cfg.repr_dim(), seed.wrapping_add(2))?;
        let agent = match cfg.agent.kind {
            AgentKind::Sac => {
                let sac_cfg = SacConfig {
                    action_dim: 1,
                    hidden_dim: cfg.agent.hidden_dim,
                    gamma: cfg.agent.gamma,
                    tau_q: cfg.agent.tau_q,
                    tau_encoder: cfg.agent.tau_encoder,
                    init_temperature: cfg.agent.init_temperature,
                    actor_lr: cfg.agent.actor_lr,
                    critic_lr: cfg.agent.critic_lr,
                    alpha_lr: cfg.agent.alpha_lr,
                    entropy_target: -1.0,
                    target_update_every: cfg.agent.target_update_every,
                };
                AgentState::Sac(SacAgent::new(sac_cfg, model.cfg.repr_dim(), seed.wrapping_add(3))?)
            }
            AgentKind::Ppo => {
                let n_actions = cfg.env.discrete_actions.expect("validated");
                let ppo_cfg = PpoConfig {
                    n_actions,
                    action_embed_dim: 4,
                    embed_hidden: 64,
                    hidden_dim: cfg.agent.hidden_dim,
                    gamma: cfg.agent.gamma,
                    gae_lambda: cfg.agent.gae_lambda,
                    clip: cfg.agent.clip,
                    entropy_coef: cfg.agent.entropy_coef,
                    value_coef: cfg.agent.value_coef,
                    epochs: cfg.agent.epochs,
                    minibatches: cfg.agent.minibatches,
                    lr: cfg.agent.ppo_lr,
                    reward_norm: cfg.agent.reward_norm,
                };
                AgentState::Ppo(PpoAgent::new(ppo_cfg, model.cfg.repr_dim(), seed.wrapping_add(3))?)
            }
        };
        let encoder_opt = Adam::new(model.registry(), cfg.loss.encoder_lr).with_grad_clip(50.0);
        let mi_opt = Adam::new(mi_critic.registry(), cfg.loss.mi_lr);
        Ok(Trainer {
            cfg: cfg.clone(),
            model,
            target_model,
            mi_critic,
            agent,
            encoder_opt,
            mi_opt,
        })
    }

    /// Registries in the order they are checkpointed.
    fn registry_names(&self) -> Vec<&'static str> {
        let mut names = vec!["encoder", "target_encoder", "mi_critic"];
        match self.agent {
            AgentState::Sac(_) => names.extend([
                "sac_critic",
                "sac_target_critic",
                "sac_policy",
                "sac_alpha",
            ]),
            AgentState::Ppo(_) => names.push("ppo"),
        }
        names
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut regs: Vec<(&str, &crate::ndgrad::ParamRegistry)> = vec![
            ("encoder", self.model.registry()),
            ("target_encoder", self.target_model.registry()),
            ("mi_critic", self.mi_critic.registry()),
        ];
        match &self.agent {
            AgentState::Sac(a) => {
                regs.push(("sac_critic", a.critic_registry()));
                regs.push(("sac_target_critic", a.target_critic_registry()));
                regs.push(("sac_policy", a.policy_registry()));
                regs.push(("sac_alpha", a.alpha_registry()));
            }
            AgentState::Ppo(a) => {
                regs.push(("ppo", a.registry()));
            }
        }
        save_checkpoint(path, &self.cfg.render(), &regs)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ckpt = load_checkpoint(path)?;
        Trainer::from_checkpoint(&ckpt)
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let cfg = RunConfig::parse(&ckpt.config_text)
            .map_err(|e| Error::Checkpoint(format!("embedded config: {e}")))?;
        let trainer = Trainer::new(&cfg)?;
        for name in trainer.registry_names() {
            let reg = match name {
                "encoder" => trainer.model.registry(),
                "target_encoder" => trainer.target_model.registry(),
                "mi_critic" => trainer.mi_critic.registry(),
                "sac_critic" => match &trainer.agent {
                    AgentState::Sac(a) => a.critic_registry(),
                    _ => unreachable!(),
                },
                "sac_target_critic" => match &trainer.agent {
                    AgentState::Sac(a) => a.target_critic_registry(),
                    _ => unreachable!(),
                },
                "sac_policy" => match &trainer.agent {
                    AgentState::Sac(a) => a.policy_registry(),
                    _ => unreachable!(),
                },
                "sac_alpha" => match &trainer.agent {
                    AgentState::Sac(a) => a.alpha_registry(),
                    _ => unreachable!(),
                },
                "ppo" => match &trainer.agent {
                    AgentState::Ppo(a) => a.registry(),
                    _ => unreachable!(),
                },
                _ => unreachable!(),
            };
            ckpt.apply(name, reg)?;
        }
        Ok(trainer)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_roundtrip_reproduces_every_parameter() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trainer.ckpt");
        let mut cfg = RunConfig::small_sac();
        cfg.run.out_dir = dir.path().to_path_buf();
        let trainer = Trainer::new(&cfg).unwrap();
        trainer.save(&path).unwrap();
        let loaded = Trainer::load(&path).unwrap();
        for ((_, a), (_, b)) in loaded
            .model
            .registry()
            .iter()
            .zip(trainer.model.registry().iter())
        {
            let (av, bv) = (a.value_clone(), b.value_clone());
            for (x, y) in av.data().iter().zip(bv.data().iter()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        match (&loaded.agent, &trainer.agent) {
            (AgentState::Sac(la), AgentState::Sac(ta)) => {
                assert_eq!(la.alpha(), ta.alpha());
            }
            _ => panic!("agent kind mismatch"),
        }
    }

    #[test]
    fn ppo_trainer_builds_and_roundtrips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trainer.ckpt");
        let mut cfg = RunConfig::small_ppo();
        cfg.run.out_dir = dir.path().to_path_buf();
        let trainer = Trainer::new(&cfg).unwrap();
        trainer.save(&path).unwrap();
        let loaded = Trainer::load(&path).unwrap();
        assert!(matches!(loaded.agent, AgentState::Ppo(_)));
    }
}
