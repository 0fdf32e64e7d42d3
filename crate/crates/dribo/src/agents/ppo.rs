use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::agents::nets::{log_softmax_rows, Mlp};
use crate::error::{Error, Result};
use crate::ndgrad::{backward, Adam, Node, ParamRegistry, Tensor};
use crate::rssm::{ActionEncoder, LatentState, Rssm};
use crate::views::center_crop;

#[derive(Debug, Clone)]
pub struct PpoConfig {
    pub n_actions: usize,
    /// One-hot actions are embedded into this many dimensions before the
    /// recurrent cell sees them.
    pub action_embed_dim: usize,
    pub embed_hidden: usize,
    pub hidden_dim: usize,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub epochs: usize,
    pub minibatches: usize,
    pub lr: f64,
    pub reward_norm: bool,
}

impl PpoConfig {
    pub fn desk(n_actions: usize) -> Self {
        PpoConfig {
            n_actions,
            action_embed_dim: 4,
            embed_hidden: 64,
            hidden_dim: 64,
            gamma: 0.99,
            gae_lambda: 0.95,
            clip: 0.2,
            entropy_coef: 0.01,
            value_coef: 0.5,
            epochs: 3,
            minibatches: 2,
            lr: 1e-3,
            reward_norm: true,
        }
    }
}

/// Categorical policy and value head over representations, plus the learned
/// action embedder (a one-hidden-layer residual block over the projected
/// one-hot).
pub struct PpoAgent {
    pub cfg: PpoConfig,
    reg: ParamRegistry,
    emb_proj: Node,
    emb_res1: Node,
    emb_res_b1: Node,
    emb_res2: Node,
    emb_res_b2: Node,
    shared: Mlp,
    pi_head: Mlp,
    v_head: Mlp,
    opt: Adam,
    pub reward_norm: RunningReturnNorm,
}

impl PpoAgent {
    pub fn new(cfg: PpoConfig, repr_dim: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut reg = ParamRegistry::new();
        let emb_proj = reg.dense_init("aemb.proj", cfg.n_actions, cfg.action_embed_dim, &mut rng)?;
        let emb_res1 =
            reg.dense_init("aemb.res1", cfg.action_embed_dim, cfg.embed_hidden, &mut rng)?;
        let emb_res_b1 = reg.uniform_init("aemb.res_b1", &[cfg.embed_hidden], 0.05, &mut rng)?;
        let emb_res2 =
            reg.dense_init("aemb.res2", cfg.embed_hidden, cfg.action_embed_dim, &mut rng)?;
        let emb_res_b2 =
            reg.uniform_init("aemb.res_b2", &[cfg.action_embed_dim], 0.05, &mut rng)?;
        let shared = Mlp::new(&mut reg, "shared", &[repr_dim, cfg.hidden_dim], &mut rng)?;
        let pi_head = Mlp::new(&mut reg, "pi", &[cfg.hidden_dim, cfg.n_actions], &mut rng)?;
        let v_head = Mlp::new(&mut reg, "v", &[cfg.hidden_dim, 1], &mut rng)?;
        let opt = Adam::new(&reg, cfg.lr).with_grad_clip(10.0);
        let gamma = cfg.gamma;
        Ok(PpoAgent {
            cfg,
            reg,
            emb_proj,
            emb_res1,
            emb_res_b1,
            emb_res2,
            emb_res_b2,
            shared,
            pi_head,
            v_head,
            opt,
            reward_norm: RunningReturnNorm::new(gamma),
        })
    }

    pub fn registry(&self) -> &ParamRegistry {
        &self.reg
    }

    /// Embed one-hot action rows (batch, n_actions) -> (batch, embed_dim).
    pub fn embed_actions(&self, one_hot: &Node) -> Result<Node> {
        let p = one_hot.matmul(&self.emb_proj)?;
        let r = p
            .matmul(&self.emb_res1)?
            .add(&self.emb_res_b1)?
            .relu()?
            .matmul(&self.emb_res2)?
            .add(&self.emb_res_b2)?;
        p.add(&r)
    }

    /// Logits and value for a batch of representations.
    pub fn policy_value(&self, s: &Node) -> Result<(Node, Node)> {
        let h = self.shared.forward(s)?.relu()?;
        Ok((self.pi_head.forward(&h)?, self.v_head.forward(&h)?))
    }

    pub fn one_hot(&self, index: usize) -> Result<Vec<f64>> {
        if index >= self.cfg.n_actions {
            return Err(Error::contract(format!(
                "action index {index} out of {}",
                self.cfg.n_actions
            )));
        }
        let mut v = vec![0.0; self.cfg.n_actions];
        v[index] = 1.0;
        Ok(v)
    }
}

impl PpoAgent {
    /// Zero, backprop, and step both the agent heads and the encoder for
    /// one minibatch loss.
    pub fn apply_update(
        &mut self,
        loss: &Node,
        model: &Rssm,
        encoder_opt: &mut Adam,
    ) -> Result<()> {
        self.reg.zero_grads();
        model.registry().zero_grads();
        backward(loss)?;
        self.opt.step(&self.reg)?;
        encoder_opt.step(model.registry())?;
        Ok(())
    }
}

/// The encoder input for discrete agents is the learned action embedding.
impl ActionEncoder for PpoAgent {
    fn input_dim(&self) -> usize {
        self.cfg.action_embed_dim
    }
    fn encode(&self, actions: &Tensor) -> Result<Node> {
        if actions.ndim() != 2 || actions.shape()[1] != self.cfg.n_actions {
            return Err(Error::invalid_shape(format!(
                "one-hot action batch {:?}, want (_, {})",
                actions.shape(),
                self.cfg.n_actions
            )));
        }
        self.embed_actions(&Node::constant(actions.clone()))
    }
}

/// Running normalization of rewards by the standard deviation of the
/// discounted return (Welford accumulation).
#[derive(Debug, Clone)]
pub struct RunningReturnNorm {
    gamma: f64,
    ret: f64,
    count: f64,
    mean: f64,
    m2: f64,
}

impl RunningReturnNorm {
    pub fn new(gamma: f64) -> Self {
        RunningReturnNorm {
            gamma,
            ret: 0.0,
            count: 0.0,
            mean: 0.0,
            m2: 0.0,
        }
    }

    pub fn reset_episode(&mut self) {
        self.ret = 0.0;
    }

    /// Feed one raw reward; returns the normalized value.
    pub fn normalize(&mut self, reward: f64) -> f64 {
        self.ret = self.gamma * self.ret + reward;
        self.count += 1.0;
        let delta = self.ret - self.mean;
        self.mean += delta / self.count;
        self.m2 += delta * (self.ret - self.mean);
        let var = if self.count > 1.0 {
            self.m2 / (self.count - 1.0)
        } else {
            1.0
        };
        reward / (var + 1e-8).sqrt()
    }
}

/// One collected step: everything needed to recompute the representation
/// exactly (stored previous latent, previous action, and sampling noise).
pub struct PpoStep {
    pub obs: Tensor,
    pub action: usize,
    pub reward: f64,
    pub norm_reward: f64,
    pub done: bool,
    /// Stored representation values from collection time.
    pub old_state: Option<(Tensor, Tensor)>,
    pub prev_action: Option<usize>,
    pub noise: Tensor,
    pub log_prob: f64,
    pub value: f64,
}

pub struct PpoRollout {
    pub steps: Vec<PpoStep>,
    pub bootstrap_value: f64,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl PpoRollout {
    pub fn new() -> Self {
        PpoRollout {
            steps: Vec::new(),
            bootstrap_value: 0.0,
            advantages: Vec::new(),
            returns: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps.is_empty() {
            return Err(Error::contract("empty rollout"));
        }
        if self.steps.iter().any(|s| s.old_state.is_none()) {
            return Err(Error::contract(
                "rollout is missing stored representations",
            ));
        }
        Ok(())
    }

    pub fn compute_gae(&mut self, gamma: f64, lambda: f64) {
        let rewards: Vec<f64> = self.steps.iter().map(|s| s.norm_reward).collect();
        let values: Vec<f64> = self.steps.iter().map(|s| s.value).collect();
        let dones: Vec<bool> = self.steps.iter().map(|s| s.done).collect();
        let (adv, ret) = gae(&rewards, &values, &dones, self.bootstrap_value, gamma, lambda);
        self.advantages = adv;
        self.returns = ret;
    }
}

impl Default for PpoRollout {
    fn default() -> Self {
        Self::new()
    }
}

/// Generalized advantage estimation with terminal masking and a bootstrap
/// value for truncation.
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap: f64,
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut acc = 0.0;
    for t in (0..n).rev() {
        let mask = if dones[t] { 0.0 } else { 1.0 };
        let next_v = if t + 1 < n { values[t + 1] } else { bootstrap };
        let delta = rewards[t] + gamma * next_v * mask - values[t];
        acc = delta + gamma * lambda * mask * acc;
        adv[t] = acc;
    }
    let ret: Vec<f64> = adv.iter().zip(values.iter()).map(|(a, v)| a + v).collect();
    (adv, ret)
}

/// Loss for one minibatch of steps; the representation is recomputed from
/// the stored previous latents (encoding is part of the policy, so the
/// gradient reaches the encoder).
pub struct PpoMinibatchLosses {
    pub total: Node,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub mean_ratio: f64,
}

pub fn ppo_minibatch_losses(
    agent: &PpoAgent,
    model: &Rssm,
    rollout: &PpoRollout,
    indices: &[usize],
    adv_mean: f64,
    adv_std: f64,
) -> Result<PpoMinibatchLosses> {
    rollout.validate()?;
    if rollout.advantages.len() != rollout.steps.len() {
        return Err(Error::contract("advantages not computed"));
    }
    let n = indices.len();
    if n == 0 {
        return Err(Error::contract("empty minibatch"));
    }
    let side = (model.cfg.obs_dim as f64).sqrt().round() as usize;
    let (h_dim, z_dim) = (model.cfg.h_dim, model.cfg.z_dim);

    let mut h_data = Vec::with_capacity(n * h_dim);
    let mut z_data = Vec::with_capacity(n * z_dim);
    let mut onehot_prev = Vec::with_capacity(n * agent.cfg.n_actions);
    let mut obs_data = Vec::with_capacity(n * side * side);
    let mut noise_data = Vec::with_capacity(n * z_dim);
    let mut onehot_act = Vec::with_capacity(n * agent.cfg.n_actions);
    let mut old_logp = Vec::with_capacity(n);
    let mut advs = Vec::with_capacity(n);
    let mut rets = Vec::with_capacity(n);
    for &i in indices {
        let step = &rollout.steps[i];
        let (h, z) = step.old_state.as_ref().expect("validated");
        h_data.extend_from_slice(h.data());
        z_data.extend_from_slice(z.data());
        match step.prev_action {
            Some(a) => onehot_prev.extend_from_slice(&agent.one_hot(a)?),
            None => onehot_prev.extend(std::iter::repeat(0.0).take(agent.cfg.n_actions)),
        }
        let cropped = center_crop(&step.obs, side)?;
        obs_data.extend_from_slice(cropped.data());
        noise_data.extend_from_slice(step.noise.data());
        onehot_act.extend_from_slice(&agent.one_hot(step.action)?);
        old_logp.push(step.log_prob);
        advs.push((rollout.advantages[i] - adv_mean) / adv_std);
        rets.push(rollout.returns[i]);
    }
    let prev = LatentState::from_values(
        Tensor::new(vec![n, h_dim], h_data)?,
        Tensor::new(vec![n, z_dim], z_data)?,
    );
    let prev_emb =
        agent.embed_actions(&Node::constant(Tensor::new(
            vec![n, agent.cfg.n_actions],
            onehot_prev,
        )?))?;
    let obs = Node::constant(Tensor::new(vec![n, side * side], obs_data)?);
    let noise = Tensor::new(vec![n, z_dim], noise_data)?;
    let encoded = model.step(&prev, &prev_emb, &obs, &noise)?;
    let s = encoded.state.repr()?;

    let (logits, value) = agent.policy_value(&s)?;
    let lsm = log_softmax_rows(&logits)?;
    let onehot = Node::constant(Tensor::new(vec![n, agent.cfg.n_actions], onehot_act)?);
    let logp_new = lsm.mul(&onehot)?.sum_axis(1, true)?;
    let probs = lsm.exp()?;
    let entropy = probs.mul(&lsm)?.sum_axis(1, true)?.neg()?.mean_all()?;

    let logp_old = Node::constant(Tensor::new(vec![n, 1], old_logp)?);
    let ratio = logp_new.sub(&logp_old)?.exp()?;
    let adv = Node::constant(Tensor::new(vec![n, 1], advs)?);
    let eps = agent.cfg.clip;
    let clipped = ratio
        .add_scalar(-(1.0 - eps))?
        .relu()?
        .add_scalar(1.0 - eps)?
        .min_elem(&Node::scalar(1.0 + eps).broadcast_to(&[n, 1])?)?;
    let surrogate = ratio.mul(&adv)?.min_elem(&clipped.mul(&adv)?)?.mean_all()?;
    let policy_loss = surrogate.neg()?;

    let ret = Node::constant(Tensor::new(vec![n, 1], rets)?);
    let value_loss = value.sub(&ret)?.square()?.mean_all()?;

    let total = policy_loss
        .add(&value_loss.mul_scalar(agent.cfg.value_coef)?)?
        .sub(&entropy.mul_scalar(agent.cfg.entropy_coef)?)?;
    if !total.value().all_finite() {
        return Err(Error::domain("non-finite ppo loss"));
    }
    Ok(PpoMinibatchLosses {
        policy_loss: policy_loss.scalar_value()?,
        value_loss: value_loss.scalar_value()?,
        entropy: entropy.scalar_value()?,
        mean_ratio: ratio.mean_all()?.scalar_value()?,
        total,
    })
}

/// Clipped-surrogate update over the whole rollout: `epochs` passes of
/// `minibatches` shuffled chunks, each stepping both the agent heads and
/// the encoder.
pub fn ppo_update(
    agent: &mut PpoAgent,
    model: &Rssm,
    encoder_opt: &mut Adam,
    rollout: &PpoRollout,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(&'static str, f64)>> {
    rollout.validate()?;
    if rollout.advantages.is_empty() {
        return Err(Error::contract("rollout advantages not computed"));
    }
    let n = rollout.steps.len();
    let adv_mean: f64 = rollout.advantages.iter().sum::<f64>() / n as f64;
    let adv_var: f64 = rollout
        .advantages
        .iter()
        .map(|a| (a - adv_mean) * (a - adv_mean))
        .sum::<f64>()
        / n as f64;
    let adv_std = adv_var.sqrt().max(1e-8);

    let mut last = None;
    for _ in 0..agent.cfg.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        let chunk = n.div_ceil(agent.cfg.minibatches);
        for mb in order.chunks(chunk) {
            let losses = ppo_minibatch_losses(agent, model, rollout, mb, adv_mean, adv_std)?;
            agent.reg.zero_grads();
            model.registry().zero_grads();
            backward(&losses.total)?;
            agent.opt.step(&agent.reg)?;
            encoder_opt.step(model.registry())?;
            last = Some(losses);
        }
    }
    let last = last.expect("at least one minibatch");
    Ok(vec![
        ("ppo/policy_loss", last.policy_loss),
        ("ppo/value_loss", last.value_loss),
        ("ppo/entropy", last.entropy),
        ("ppo/mean_ratio", last.mean_ratio),
    ])
}

/// Carried state for discrete acting.
pub struct DiscreteActorState {
    pub h: Tensor,
    pub z: Tensor,
    pub prev_action: Option<usize>,
}

impl DiscreteActorState {
    pub fn initial(model: &Rssm) -> Self {
        DiscreteActorState {
            h: Tensor::zeros(&[1, model.cfg.h_dim]),
            z: Tensor::zeros(&[1, model.cfg.z_dim]),
            prev_action: None,
        }
    }
}

pub struct PpoDecision {
    pub action: usize,
    pub log_prob: f64,
    pub value: f64,
    pub noise: Tensor,
    pub old_state: (Tensor, Tensor),
    pub prev_action: Option<usize>,
    pub next_state: DiscreteActorState,
}

/// Encode one step with the carried latent and draw (or argmax) an action.
pub fn ppo_act(
    agent: &PpoAgent,
    model: &Rssm,
    frame: &Tensor,
    state: &DiscreteActorState,
    deterministic: bool,
    rng: &mut ChaCha8Rng,
) -> Result<PpoDecision> {
    let side = (model.cfg.obs_dim as f64).sqrt().round() as usize;
    let cropped = center_crop(frame, side)?;
    let obs = Node::constant(Tensor::new(vec![1, side * side], cropped.data().to_vec())?);
    let prev = LatentState::from_values(state.h.clone(), state.z.clone());
    let onehot_prev = match state.prev_action {
        Some(a) => Tensor::new(vec![1, agent.cfg.n_actions], agent.one_hot(a)?)?,
        None => Tensor::zeros(&[1, agent.cfg.n_actions]),
    };
    let prev_emb = agent.embed_actions(&Node::constant(onehot_prev))?;
    let noise = if deterministic {
        Tensor::zeros(&[1, model.cfg.z_dim])
    } else {
        let mut gen = crate::rssm::gaussian_noise(rng);
        gen(&[1, model.cfg.z_dim])
    };
    let encoded = model.step(&prev, &prev_emb, &obs, &noise)?;
    let s = encoded.state.repr()?;
    let (logits, value) = agent.policy_value(&s)?;
    let lsm = log_softmax_rows(&logits)?;
    let lsm_vals = lsm.value_clone();
    let action = if deterministic {
        let mut best = 0;
        for k in 1..agent.cfg.n_actions {
            if lsm_vals.data()[k] > lsm_vals.data()[best] {
                best = k;
            }
        }
        best
    } else {
        let u: f64 = rand::Rng::gen_range(rng, 0.0..1.0);
        let mut acc = 0.0;
        let mut chosen = agent.cfg.n_actions - 1;
        for k in 0..agent.cfg.n_actions {
            acc += lsm_vals.data()[k].exp();
            if u < acc {
                chosen = k;
                break;
            }
        }
        chosen
    };
    Ok(PpoDecision {
        action,
        log_prob: lsm_vals.data()[action],
        value: value.scalar_value()?,
        noise,
        old_state: (state.h.clone(), state.z.clone()),
        prev_action: state.prev_action,
        next_state: DiscreteActorState {
            h: encoded.state.h.value_clone(),
            z: encoded.state.z.value_clone(),
            prev_action: Some(action),
        },
    })
}
