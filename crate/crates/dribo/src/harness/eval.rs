use rand_chacha::ChaCha8Rng;

use crate::agents::{ppo_act, sac_act, ActorState, DiscreteActorState};
use crate::error::{Error, Result};
use crate::gaussians::skl;
use crate::harness::trainer::{AgentState, Trainer};
use crate::ndgrad::{Node, Tensor};
use crate::rssm::LatentState;
use crate::views::{augment_sequence, center_crop};
use crate::worlds::{DistractorControl, EnvMode};

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub train_mean: f64,
    pub train_std: f64,
    pub test_mean: f64,
    pub test_std: f64,
    /// Average symmetrized KL between the posteriors of two random views of
    /// the same test observations.
    pub skl_probe: f64,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Flatten a frame view for the encoder: augment, then center-crop down to
/// the model's input side (a no-op when the augmentation already crops).
fn view_to_input(frame: &Tensor, trainer: &Trainer, rng: &mut ChaCha8Rng) -> Result<Node> {
    let spec = trainer.cfg.augmentation_spec();
    let augmented = augment_sequence(
        std::slice::from_ref(frame),
        &spec,
        rng,
        trainer.cfg.augmentation.per_frame,
    )?
    .pop()
    .expect("one frame");
    let side = trainer.cfg.model.crop_size;
    let cropped = center_crop(&augmented, side)?;
    Ok(Node::constant(Tensor::new(
        vec![1, side * side],
        cropped.data().to_vec(),
    )?))
}

/// Mean and std of the deterministic-policy return under both background
/// pools, plus the two-view posterior divergence probe on test episodes.
pub fn eval_generalization(
    trainer: &Trainer,
    episodes: usize,
    rng: &mut ChaCha8Rng,
) -> Result<EvalReport> {
    if episodes == 0 {
        return Err(Error::contract("eval needs at least one episode"));
    }
    let mut env = DistractorControl::new(trainer.cfg.env_config())?;
    let mut returns = [Vec::new(), Vec::new()];
    let mut skl_sum = 0.0;
    let mut skl_count = 0usize;
    for (mode_idx, mode) in [EnvMode::Train, EnvMode::Test].into_iter().enumerate() {
        for _ in 0..episodes {
            let mut frame = env.reset(mode, rng);
            let mut total = 0.0;
            match &trainer.agent {
                AgentState::Sac(agent) => {
                    let mut state = ActorState::initial(&trainer.model, 1);
                    loop {
                        if mode == EnvMode::Test {
                            let (v, c) = skl_probe_step(trainer, &state.h, &frame, rng)?;
                            skl_sum += v;
                            skl_count += c;
                        }
                        let (action, next) =
                            sac_act(agent, &trainer.model, &frame, &state, true, rng)?;
                        state = next;
                        let (obs, reward, done) = env.step(&action)?;
                        frame = obs;
                        total += reward;
                        if done {
                            break;
                        }
                    }
                }
                AgentState::Ppo(agent) => {
                    let mut state = DiscreteActorState::initial(&trainer.model);
                    loop {
                        if mode == EnvMode::Test {
                            let (v, c) = skl_probe_step(trainer, &state.h, &frame, rng)?;
                            skl_sum += v;
                            skl_count += c;
                        }
                        let d = ppo_act(agent, &trainer.model, &frame, &state, true, rng)?;
                        state = d.next_state;
                        let (obs, reward, done) = env.step_discrete(d.action)?;
                        frame = obs;
                        total += reward;
                        if done {
                            break;
                        }
                    }
                }
            }
            returns[mode_idx].push(total);
        }
    }
    let (train_mean, train_std) = mean_std(&returns[0]);
    let (test_mean, test_std) = mean_std(&returns[1]);
    Ok(EvalReport {
        train_mean,
        train_std,
        test_mean,
        test_std,
        skl_probe: skl_sum / skl_count.max(1) as f64,
    })
}

/// SKL between the posteriors of two random views of one observation,
/// conditioned on the carried deterministic state.
fn skl_probe_step(
    trainer: &Trainer,
    carried_h: &Tensor,
    frame: &Tensor,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, usize)> {
    // The carried h is the *previous* step's deterministic state; the probe
    // conditions both views on the same recurrent context by advancing with
    // a zero action, which isolates view sensitivity.
    let zero_action = Node::zeros(&[1, trainer.model.cfg.action_input_dim]);
    let prev = LatentState::from_values(
        carried_h.clone(),
        Tensor::zeros(&[1, trainer.model.cfg.z_dim]),
    );
    let h = trainer.model.det_step(&prev, &zero_action)?;
    let v1 = view_to_input(frame, trainer, rng)?;
    let v2 = view_to_input(frame, trainer, rng)?;
    let p1 = trainer.model.posterior(&h, &v1)?;
    let p2 = trainer.model.posterior(&h, &v2)?;
    let value = skl(&p1, &p2)?.mean_all()?.scalar_value()?;
    Ok((value, 1))
}

/// Return trace of a uniform-random policy, for calibration baselines.
pub fn random_policy_returns(
    trainer: &Trainer,
    episodes: usize,
    mode: EnvMode,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    let mut env = DistractorControl::new(trainer.cfg.env_config())?;
    let discrete = trainer.cfg.env.discrete_actions;
    let mut out = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        env.reset(mode, rng);
        let mut total = 0.0;
        loop {
            let (_, reward, done) = match discrete {
                Some(k) => env.step_discrete(rand::Rng::gen_range(rng, 0..k))?,
                None => env.step(&[rand::Rng::gen_range(rng, -1.0..1.0)])?,
            };
            total += reward;
            if done {
                break;
            }
        }
        out.push(total);
    }
    Ok(out)
}
