use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::agents::nets::Mlp;
use crate::error::{Error, Result};
use crate::gaussians;
use crate::ndgrad::{backward, concat, Adam, Node, ParamRegistry, Tensor};
use crate::rssm::{LatentState, Rssm};
use crate::views::{center_crop, stacked_actions, SequenceBatch};

const LN_2: f64 = std::f64::consts::LN_2;
const LN_2PI: f64 = 1.8378770664093453;

#[derive(Debug, Clone)]
pub struct SacConfig {
    pub action_dim: usize,
    pub hidden_dim: usize,
    pub gamma: f64,
    pub tau_q: f64,
    pub tau_encoder: f64,
    pub init_temperature: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub alpha_lr: f64,
    /// Entropy target; the convention is -action_dim.
    pub entropy_target: f64,
    pub target_update_every: usize,
}

impl SacConfig {
    pub fn desk(action_dim: usize) -> Self {
        SacConfig {
            action_dim,
            hidden_dim: 64,
            gamma: 0.99,
            tau_q: 0.01,
            tau_encoder: 0.05,
            init_temperature: 0.1,
            actor_lr: 1e-3,
            critic_lr: 1e-3,
            alpha_lr: 1e-4,
            entropy_target: -(action_dim as f64),
            target_update_every: 2,
        }
    }
}

pub struct SacAgent {
    pub cfg: SacConfig,
    critic_reg: ParamRegistry,
    target_critic_reg: ParamRegistry,
    policy_reg: ParamRegistry,
    alpha_reg: ParamRegistry,
    q1: Mlp,
    q2: Mlp,
    target_q1: Mlp,
    target_q2: Mlp,
    policy: Mlp,
    log_alpha: Node,
    critic_opt: Adam,
    policy_opt: Adam,
    alpha_opt: Adam,
    updates: usize,
}

impl SacAgent {
    pub fn new(cfg: SacConfig, repr_dim: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut critic_reg = ParamRegistry::new();
        let q_dims = [repr_dim + cfg.action_dim, cfg.hidden_dim, cfg.hidden_dim, 1];
        let q1 = Mlp::new(&mut critic_reg, "q1", &q_dims, &mut rng)?;
        let q2 = Mlp::new(&mut critic_reg, "q2", &q_dims, &mut rng)?;
        let mut target_critic_reg = ParamRegistry::new();
        let mut trng = ChaCha8Rng::seed_from_u64(seed);
        let target_q1 = Mlp::new(&mut target_critic_reg, "q1", &q_dims, &mut trng)?;
        let target_q2 = Mlp::new(&mut target_critic_reg, "q2", &q_dims, &mut trng)?;
        target_critic_reg.copy_values_from(&critic_reg)?;

        let mut policy_reg = ParamRegistry::new();
        let policy = Mlp::new(
            &mut policy_reg,
            "pi",
            &[repr_dim, cfg.hidden_dim, cfg.hidden_dim, 2 * cfg.action_dim],
            &mut rng,
        )?;
        let mut alpha_reg = ParamRegistry::new();
        let log_alpha = alpha_reg.param(
            "log_alpha",
            Tensor::scalar(cfg.init_temperature.ln()),
        )?;
        let critic_opt = Adam::new(&critic_reg, cfg.critic_lr);
        let policy_opt = Adam::new(&policy_reg, cfg.actor_lr);
        let alpha_opt = Adam::new(&alpha_reg, cfg.alpha_lr);
        Ok(SacAgent {
            cfg,
            critic_reg,
            target_critic_reg,
            policy_reg,
            alpha_reg,
            q1,
            q2,
            target_q1,
            target_q2,
            policy,
            log_alpha,
            critic_opt,
            policy_opt,
            alpha_opt,
            updates: 0,
        })
    }

    pub fn critic_registry(&self) -> &ParamRegistry {
        &self.critic_reg
    }

    pub fn target_critic_registry(&self) -> &ParamRegistry {
        &self.target_critic_reg
    }

    pub fn policy_registry(&self) -> &ParamRegistry {
        &self.policy_reg
    }

    pub fn alpha_registry(&self) -> &ParamRegistry {
        &self.alpha_reg
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.value().data()[0].exp()
    }

    fn q(&self, net: &Mlp, s: &Node, a: &Node) -> Result<Node> {
        net.forward(&concat(&[s.clone(), a.clone()], 1)?)
    }

    /// Squashed-Gaussian head: returns (action, log-prob) with the sample
    /// reparameterized through the provided standard-normal noise.
    pub fn policy_sample(&self, s: &Node, noise: &Tensor) -> Result<(Node, Node)> {
        let stats = self.policy.forward(s)?;
        let a_dim = self.cfg.action_dim;
        let mean = stats.slice_axis(1, 0, a_dim)?;
        let raw = stats.slice_axis(1, a_dim, a_dim)?;
        let d = gaussians::DiagGaussian::from_raw(mean, raw, 1e-4)?;
        let u = gaussians::rsample(&d, noise)?;
        let action = u.tanh()?;
        // log pi(a) = log N(u) - sum log(1 - tanh(u)^2), with the exact
        // identity log(1 - tanh(u)^2) = 2 (ln 2 - u - softplus(-2u)).
        let z = u.sub(&d.mean)?.div(&d.stddev)?;
        let normal_per_dim = z
            .square()?
            .mul_scalar(-0.5)?
            .sub(&d.stddev.log()?)?
            .add_scalar(-0.5 * LN_2PI)?;
        let log_det_per_dim = u
            .neg()?
            .sub(&u.mul_scalar(-2.0)?.softplus()?)?
            .add_scalar(LN_2)?
            .mul_scalar(2.0)?;
        let log_prob = normal_per_dim.sub(&log_det_per_dim)?.sum_axis(1, true)?;
        Ok((action, log_prob))
    }

    /// Mean action squashed into the box (deterministic mode).
    pub fn policy_mean(&self, s: &Node) -> Result<Node> {
        let stats = self.policy.forward(s)?;
        stats.slice_axis(1, 0, self.cfg.action_dim)?.tanh()
    }
}

/// All loss heads for one batch, built under a caller-supplied noise
/// source so gradient checks can freeze the stochastic draws.
pub struct SacLosses {
    pub critic: Node,
    pub actor: Node,
    pub alpha: Node,
    pub metrics: Vec<(&'static str, f64)>,
}

pub fn sac_losses(
    agent: &SacAgent,
    model: &Rssm,
    target_model: &Rssm,
    batch: &SequenceBatch,
    noise: &mut dyn FnMut(&[usize]) -> Tensor,
) -> Result<SacLosses> {
    batch.validate()?;
    let (n, t_len) = (batch.n_sequences(), batch.len_t());
    if t_len < 2 {
        return Err(Error::contract("sac batch needs at least 2 steps"));
    }
    let crop = crop_side_for(model)?;
    let obs: Vec<Node> = (0..t_len)
        .map(|t| Ok(Node::constant(cropped_stack(batch, t, crop)?)))
        .collect::<Result<Vec<_>>>()?;
    let acts: Vec<Node> = (0..t_len)
        .map(|t| Ok(Node::constant(stacked_actions(batch, t)?)))
        .collect::<Result<Vec<_>>>()?;

    let online = model.encode_sequence(&obs, &acts, None, noise)?;
    let target = target_model.encode_sequence(&obs, &acts, None, noise)?;

    // Transition tuples (s_t, a_t, r_t, s'_(t+1)): (T-1) * N rows.
    let s_rows: Vec<Node> = online[..t_len - 1]
        .iter()
        .map(|e| e.state.repr())
        .collect::<Result<Vec<_>>>()?;
    let s = concat(&s_rows, 0)?;
    let next_rows: Vec<Node> = target[1..]
        .iter()
        .map(|e| e.state.repr())
        .collect::<Result<Vec<_>>>()?;
    let s_next = concat(&next_rows, 0)?.stop_gradient();
    let a = concat(&acts[..t_len - 1].to_vec(), 0)?;
    let mut reward_data = Vec::with_capacity((t_len - 1) * n);
    for t in 0..t_len - 1 {
        for seq in &batch.rewards {
            reward_data.push(seq[t]);
        }
    }
    let r = Node::constant(Tensor::new(vec![(t_len - 1) * n, 1], reward_data)?);

    let alpha = self_alpha(agent);

    // Critic target: r + gamma * (min target-Q(s', a') - alpha log pi(a'|s')).
    let eps_next = noise(&[(t_len - 1) * n, agent.cfg.action_dim]);
    let (a_next, logp_next) = agent.policy_sample(&s_next, &eps_next)?;
    let q_next = agent
        .q(&agent.target_q1, &s_next, &a_next)?
        .min_elem(&agent.q(&agent.target_q2, &s_next, &a_next)?)?;
    let v_next = q_next.sub(&alpha.mul(&logp_next)?)?;
    let y = r.add(&v_next.mul_scalar(agent.cfg.gamma)?)?.stop_gradient();
    let q1 = agent.q(&agent.q1, &s, &a)?;
    let q2 = agent.q(&agent.q2, &s, &a)?;
    let critic = q1
        .sub(&y)?
        .square()?
        .mean_all()?
        .add(&q2.sub(&y)?.square()?.mean_all()?)?;

    // Actor over detached representations.
    let s_det = s.stop_gradient();
    let eps_pi = noise(&[(t_len - 1) * n, agent.cfg.action_dim]);
    let (a_pi, logp_pi) = agent.policy_sample(&s_det, &eps_pi)?;
    let q_pi = agent
        .q(&agent.q1, &s_det, &a_pi)?
        .min_elem(&agent.q(&agent.q2, &s_det, &a_pi)?)?;
    let actor = alpha
        .stop_gradient()
        .mul(&logp_pi)?
        .sub(&q_pi)?
        .mean_all()?;

    // Temperature: J(alpha) = E[-alpha (log pi + target_entropy)].
    let alpha_loss = alpha
        .mul(&logp_pi.stop_gradient().add_scalar(agent.cfg.entropy_target)?)?
        .neg()?
        .mean_all()?;

    for (name, node) in [("critic", &critic), ("actor", &actor), ("alpha", &alpha_loss)] {
        if !node.value().all_finite() {
            return Err(Error::domain(format!("non-finite sac {name} loss")));
        }
    }
    let metrics = vec![
        ("sac/critic_loss", critic.scalar_value()?),
        ("sac/actor_loss", actor.scalar_value()?),
        ("sac/alpha_loss", alpha_loss.scalar_value()?),
        ("sac/alpha", agent.alpha()),
        ("sac/q1_mean", q1.mean_all()?.scalar_value()?),
        (
            "sac/entropy_estimate",
            -logp_pi.mean_all()?.scalar_value()?,
        ),
    ];
    Ok(SacLosses {
        critic,
        actor,
        alpha: alpha_loss,
        metrics,
    })
}

fn self_alpha(agent: &SacAgent) -> Node {
    agent.log_alpha.exp().expect("alpha exp")
}

fn crop_side_for(model: &Rssm) -> Result<usize> {
    let side = (model.cfg.obs_dim as f64).sqrt().round() as usize;
    if side * side != model.cfg.obs_dim {
        return Err(Error::contract("model obs_dim is not a square frame"));
    }
    Ok(side)
}

/// Center-crop each frame at step t to the model's input side and stack.
pub fn cropped_stack(batch: &SequenceBatch, t: usize, side: usize) -> Result<Tensor> {
    let n = batch.n_sequences();
    let mut data = Vec::with_capacity(n * side * side);
    for seq in &batch.obs {
        let c = center_crop(&seq[t], side)?;
        data.extend_from_slice(c.data());
    }
    Tensor::new(vec![n, side * side], data)
}

/// One full update: critic (with encoder), actor, temperature, and the
/// Polyak target updates every `target_update_every` calls.
pub fn sac_update(
    agent: &mut SacAgent,
    model: &Rssm,
    target_model: &Rssm,
    encoder_opt: &mut Adam,
    batch: &SequenceBatch,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(&'static str, f64)>> {
    let losses = {
        let mut noise = crate::rssm::gaussian_noise(rng);
        sac_losses(agent, model, target_model, batch, &mut noise)?
    };

    agent.critic_reg.zero_grads();
    model.registry().zero_grads();
    backward(&losses.critic)?;
    agent.critic_opt.step(&agent.critic_reg)?;
    encoder_opt.step(model.registry())?;

    agent.policy_reg.zero_grads();
    backward(&losses.actor)?;
    agent.policy_opt.step(&agent.policy_reg)?;

    agent.alpha_reg.zero_grads();
    backward(&losses.alpha)?;
    agent.alpha_opt.step(&agent.alpha_reg)?;

    agent.updates += 1;
    if agent.updates % agent.cfg.target_update_every == 0 {
        agent
            .target_critic_reg
            .polyak_from(&agent.critic_reg, agent.cfg.tau_q)?;
        target_model
            .registry()
            .polyak_from(model.registry(), agent.cfg.tau_encoder)?;
    }
    Ok(losses.metrics)
}

/// Carried latent for acting: plain values, so episodes never grow a graph.
pub struct ActorState {
    pub h: Tensor,
    pub z: Tensor,
    pub prev_action: Vec<f64>,
}

impl ActorState {
    pub fn initial(model: &Rssm, action_dim: usize) -> Self {
        ActorState {
            h: Tensor::zeros(&[1, model.cfg.h_dim]),
            z: Tensor::zeros(&[1, model.cfg.z_dim]),
            prev_action: vec![0.0; action_dim],
        }
    }
}

/// Encode one step and query the policy. Stochastic mode draws sampling
/// noise for both the latent and the action; deterministic mode uses the
/// posterior mean path (zero noise) and the squashed policy mean.
pub fn sac_act(
    agent: &SacAgent,
    model: &Rssm,
    frame: &Tensor,
    state: &ActorState,
    deterministic: bool,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<f64>, ActorState)> {
    let side = crop_side_for(model)?;
    let cropped = center_crop(frame, side)?;
    let obs = Node::constant(Tensor::new(vec![1, side * side], cropped.data().to_vec())?);
    let prev = LatentState::from_values(state.h.clone(), state.z.clone());
    let prev_a = Node::constant(Tensor::new(
        vec![1, state.prev_action.len()],
        state.prev_action.clone(),
    )?);
    let eps_z = if deterministic {
        Tensor::zeros(&[1, model.cfg.z_dim])
    } else {
        let mut gen = crate::rssm::gaussian_noise(rng);
        gen(&[1, model.cfg.z_dim])
    };
    let step = model.step(&prev, &prev_a, &obs, &eps_z)?;
    let s = step.state.repr()?;
    let action = if deterministic {
        agent.policy_mean(&s)?
    } else {
        let mut gen = crate::rssm::gaussian_noise(rng);
        let eps_a = gen(&[1, agent.cfg.action_dim]);
        agent.policy_sample(&s, &eps_a)?.0
    };
    let action_vec = action.value().data().to_vec();
    let next = ActorState {
        h: step.state.h.value_clone(),
        z: step.state.z.value_clone(),
        prev_action: action_vec.clone(),
    };
    Ok((action_vec, next))
}
