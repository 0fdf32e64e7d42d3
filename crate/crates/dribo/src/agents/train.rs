//! Joint training: collect with the agent, then interleave agent updates
//! with two-view bottleneck updates on replayed sequences.

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::agents::{
    ppo_act, ppo_minibatch_losses, sac_act, sac_update, ActorState, DiscreteActorState,
    Episode, PpoRollout, PpoStep, ReplayBuffer,
};
use crate::error::{Error, Result};
use crate::harness::config::{AgentKind, RunConfig};
use crate::harness::eval::{eval_generalization, EvalReport};
use crate::harness::metrics::MetricsWriter;
use crate::harness::trainer::{AgentState, Trainer};
use crate::loss::{beta_at, dribo_loss, DriboLossConfig, NoiseMode};
use crate::ndgrad::backward;
use crate::rssm::{ActionEncoder, IdentityActionEncoder};
use crate::views::make_two_views;
use crate::worlds::{DistractorControl, EnvMode};

pub struct TrainArtifacts {
    pub out_dir: PathBuf,
    pub metrics_path: PathBuf,
    pub checkpoint_path: PathBuf,
    pub episodes_run: usize,
    pub final_eval: EvalReport,
}

fn loss_config(cfg: &RunConfig) -> DriboLossConfig {
    DriboLossConfig {
        block_prev_state_grads: cfg.loss.block_prev_state_grads,
        noise: if cfg.loss.shared_view_noise {
            NoiseMode::Shared
        } else {
            NoiseMode::Independent
        },
        kl_balance_weight: cfg.loss.kl_balance_weight,
        conservative_kl_balance: false,
    }
}

/// One bottleneck update from a freshly augmented two-view sample.
#[allow(clippy::too_many_arguments)]
fn dribo_step(
    run_cfg: &RunConfig,
    model: &crate::rssm::Rssm,
    mi_critic: &crate::mi::BilinearCritic,
    encoder_opt: &mut crate::ndgrad::Adam,
    mi_opt: &mut crate::ndgrad::Adam,
    batch: &crate::views::SequenceBatch,
    action_encoder: &dyn ActionEncoder,
    beta: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(&'static str, f64)>> {
    let spec = run_cfg.augmentation_spec();
    let (v1, v2) = make_two_views(batch, &spec, rng, run_cfg.augmentation.per_frame)?;
    let cfg = loss_config(run_cfg);
    let out = dribo_loss(&v1, &v2, model, mi_critic, action_encoder, beta, &cfg, rng)?;
    if !out.total.value().all_finite() {
        return Err(Error::domain("non-finite bottleneck loss"));
    }
    model.registry().zero_grads();
    mi_critic.registry().zero_grads();
    backward(&out.total)?;
    encoder_opt.step(model.registry())?;
    mi_opt.step(mi_critic.registry())?;
    Ok(out.metrics())
}

fn periodic(
    trainer: &Trainer,
    episode: usize,
    step: u64,
    metrics: &mut MetricsWriter,
    ckpt_path: &std::path::Path,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let every = trainer.cfg.run.eval_every;
    if every > 0 && (episode + 1) % every == 0 {
        let report = eval_generalization(trainer, trainer.cfg.run.eval_episodes, rng)?;
        metrics.log_all(
            step,
            &[
                ("eval/train_return", report.train_mean),
                ("eval/train_return_std", report.train_std),
                ("eval/test_return", report.test_mean),
                ("eval/test_return_std", report.test_std),
                ("eval/skl_probe", report.skl_probe),
            ],
        )?;
    }
    let ck = trainer.cfg.run.checkpoint_every;
    if ck > 0 && (episode + 1) % ck == 0 {
        trainer.save(ckpt_path)?;
    }
    Ok(())
}

/// Episode loop for the off-policy agent: collect, push, then K rounds of
/// (agent update, bottleneck update) on replayed windows.
fn train_sac(trainer: &mut Trainer, metrics: &mut MetricsWriter) -> Result<usize> {
    let cfg = trainer.cfg.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.run.seed);
    let mut env = DistractorControl::new(cfg.env_config())?;
    let mut buffer = ReplayBuffer::new(cfg.run.buffer_capacity, cfg.run.batch_t)?;
    let ckpt_path = cfg.run.out_dir.join("checkpoint.bin");
    let mut step: u64 = 0;
    let action_encoder = IdentityActionEncoder { dim: 1 };

    for episode in 0..cfg.run.episodes {
        let beta = if cfg.loss.beta_zero {
            0.0
        } else {
            beta_at(&cfg.schedule, episode)
        };
        // Collect one episode.
        let mut frame = env.reset(EnvMode::Train, &mut rng);
        let mut ep = Episode {
            obs: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
        };
        let mut state = {
            let AgentState::Sac(_) = &trainer.agent else {
                return Err(Error::contract("sac loop with non-sac agent"));
            };
            ActorState::initial(&trainer.model, 1)
        };
        loop {
            let action = if episode < cfg.run.warmup_episodes {
                vec![rng.gen_range(-1.0..1.0)]
            } else {
                let AgentState::Sac(agent) = &trainer.agent else {
                    unreachable!()
                };
                let (a, next) = sac_act(agent, &trainer.model, &frame, &state, false, &mut rng)?;
                state = next;
                a
            };
            ep.obs.push(frame.clone());
            ep.actions.push(action.clone());
            let (obs, reward, done) = env.step(&action)?;
            ep.rewards.push(reward);
            frame = obs;
            if done {
                break;
            }
        }
        let ep_return = ep.ret();
        buffer.push(ep)?;
        metrics.log(step, "train/return", ep_return)?;
        metrics.log(step, "train/episode", episode as f64)?;

        if episode + 1 > cfg.run.warmup_episodes {
            for _ in 0..cfg.run.updates_per_episode {
                let batch = buffer.sample(cfg.run.batch_n, &mut rng)?;
                let sac_metrics = {
                    let Trainer {
                        model,
                        target_model,
                        agent,
                        encoder_opt,
                        ..
                    } = trainer;
                    let AgentState::Sac(agent) = agent else {
                        unreachable!()
                    };
                    sac_update(agent, model, target_model, encoder_opt, &batch, &mut rng)?
                };
                let dribo_metrics = {
                    let Trainer {
                        model,
                        mi_critic,
                        encoder_opt,
                        mi_opt,
                        ..
                    } = trainer;
                    dribo_step(
                        &cfg,
                        model,
                        mi_critic,
                        encoder_opt,
                        mi_opt,
                        &batch,
                        &action_encoder,
                        beta,
                        &mut rng,
                    )?
                };
                step += 1;
                metrics.log_all(step, &sac_metrics)?;
                metrics.log_all(step, &dribo_metrics)?;
            }
        }
        periodic(trainer, episode, step, metrics, &ckpt_path, &mut rng)?;
        metrics.flush()?;
    }
    Ok(cfg.run.episodes)
}

/// Episode loop for the on-policy agent: collect a rollout with stored
/// representations, then interleave clipped-surrogate minibatches with
/// bottleneck updates from the sequence buffer.
fn train_ppo(trainer: &mut Trainer, metrics: &mut MetricsWriter) -> Result<usize> {
    let cfg = trainer.cfg.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.run.seed);
    let mut env = DistractorControl::new(cfg.env_config())?;
    let mut buffer = ReplayBuffer::new(cfg.run.buffer_capacity, cfg.run.batch_t)?;
    let ckpt_path = cfg.run.out_dir.join("checkpoint.bin");
    let mut step: u64 = 0;

    for episode in 0..cfg.run.episodes {
        let beta = if cfg.loss.beta_zero {
            0.0
        } else {
            beta_at(&cfg.schedule, episode)
        };
        // Collect one on-policy episode, storing everything the update
        // needs to recompute representations exactly.
        let mut frame = env.reset(EnvMode::Train, &mut rng);
        let mut rollout = PpoRollout::new();
        let mut ep = Episode {
            obs: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
        };
        {
            let AgentState::Ppo(agent) = &mut trainer.agent else {
                return Err(Error::contract("ppo loop with non-ppo agent"));
            };
            agent.reward_norm.reset_episode();
            let mut state = DiscreteActorState::initial(&trainer.model);
            loop {
                let d = ppo_act(agent, &trainer.model, &frame, &state, false, &mut rng)?;
                let (obs, reward, done) = env.step_discrete(d.action)?;
                let norm_reward = if agent.cfg.reward_norm {
                    agent.reward_norm.normalize(reward)
                } else {
                    reward
                };
                ep.obs.push(frame.clone());
                ep.actions.push(agent.one_hot(d.action)?);
                ep.rewards.push(reward);
                rollout.steps.push(PpoStep {
                    obs: frame,
                    action: d.action,
                    reward,
                    norm_reward,
                    done,
                    old_state: Some(d.old_state),
                    prev_action: d.prev_action,
                    noise: d.noise,
                    log_prob: d.log_prob,
                    value: d.value,
                });
                state = d.next_state;
                frame = obs;
                if done {
                    break;
                }
            }
        }
        let ep_return: f64 = rollout.steps.iter().map(|s| s.reward).sum();
        buffer.push(ep)?;
        metrics.log(step, "train/return", ep_return)?;
        metrics.log(step, "train/episode", episode as f64)?;

        rollout.compute_gae(cfg.agent.gamma, cfg.agent.gae_lambda);
        let n = rollout.steps.len();
        let adv_mean: f64 = rollout.advantages.iter().sum::<f64>() / n as f64;
        let adv_var: f64 = rollout
            .advantages
            .iter()
            .map(|a| (a - adv_mean) * (a - adv_mean))
            .sum::<f64>()
            / n as f64;
        let adv_std = adv_var.sqrt().max(1e-8);

        for _ in 0..cfg.agent.epochs {
            let mut order: Vec<usize> = (0..n).collect();
            rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
            let chunk = n.div_ceil(cfg.agent.minibatches);
            for mb in order.chunks(chunk).map(|c| c.to_vec()) {
                let ppo_metrics = {
                    let Trainer {
                        model,
                        agent,
                        encoder_opt,
                        ..
                    } = trainer;
                    let AgentState::Ppo(agent) = agent else {
                        unreachable!()
                    };
                    let losses =
                        ppo_minibatch_losses(agent, model, &rollout, &mb, adv_mean, adv_std)?;
                    agent.apply_update(&losses.total, model, encoder_opt)?;
                    vec![
                        ("ppo/policy_loss", losses.policy_loss),
                        ("ppo/value_loss", losses.value_loss),
                        ("ppo/entropy", losses.entropy),
                        ("ppo/mean_ratio", losses.mean_ratio),
                    ]
                };
                let batch = buffer.sample(cfg.run.batch_n, &mut rng)?;
                let dribo_metrics = {
                    let Trainer {
                        model,
                        mi_critic,
                        agent,
                        encoder_opt,
                        mi_opt,
                        ..
                    } = trainer;
                    let AgentState::Ppo(agent) = agent else {
                        unreachable!()
                    };
                    dribo_step(
                        &cfg,
                        model,
                        mi_critic,
                        encoder_opt,
                        mi_opt,
                        &batch,
                        agent as &dyn ActionEncoder,
                        beta,
                        &mut rng,
                    )?
                };
                step += 1;
                metrics.log_all(step, &ppo_metrics)?;
                metrics.log_all(step, &dribo_metrics)?;
            }
        }
        periodic(trainer, episode, step, metrics, &ckpt_path, &mut rng)?;
        metrics.flush()?;
    }
    Ok(cfg.run.episodes)
}

/// Full run: build, train per the configured agent, write metrics and
/// checkpoints, and finish with an evaluation report.
pub fn train(cfg: &RunConfig) -> Result<TrainArtifacts> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.run.out_dir)?;
    std::fs::write(cfg.run.out_dir.join("config.out"), cfg.render())?;
    let metrics_path = cfg.run.out_dir.join("metrics.log");
    let mut metrics = MetricsWriter::create(&metrics_path)?;
    let mut trainer = Trainer::new(cfg)?;
    let episodes_run = match cfg.agent.kind {
        AgentKind::Sac => train_sac(&mut trainer, &mut metrics),
        AgentKind::Ppo => train_ppo(&mut trainer, &mut metrics),
    };
    let checkpoint_path = cfg.run.out_dir.join("checkpoint.bin");
    match episodes_run {
        Ok(episodes_run) => {
            trainer.save(&checkpoint_path)?;
            let mut eval_rng = ChaCha8Rng::seed_from_u64(cfg.run.seed.wrapping_add(7));
            let final_eval =
                eval_generalization(&trainer, cfg.run.eval_episodes, &mut eval_rng)?;
            metrics.flush()?;
            Ok(TrainArtifacts {
                out_dir: cfg.run.out_dir.clone(),
                metrics_path,
                checkpoint_path,
                episodes_run,
                final_eval,
            })
        }
        Err(e) => {
            // Keep whatever checkpoint the periodic saves produced; record
            // the abort so the run directory explains itself.
            let _ = std::fs::write(
                cfg.run.out_dir.join("ABORTED"),
                format!("training aborted: {e}\n"),
            );
            Err(e)
        }
    }
}
