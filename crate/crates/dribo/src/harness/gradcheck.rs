use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::agents::{
    ppo_act, ppo_minibatch_losses, sac_losses, DiscreteActorState, PpoAgent, PpoConfig,
    PpoRollout, PpoStep, SacAgent, SacConfig,
};
use crate::error::Result;
use crate::gaussians::{kl, log_prob, skl, DiagGaussian};
use crate::loss::{dribo_loss, DriboLossConfig, NoiseMode};
use crate::mi::{infonce, BilinearCritic};
use crate::ndgrad::{concat, finite_diff_check, finite_diff_check_params, Node, Tensor};
use crate::rssm::{IdentityActionEncoder, Rssm, RssmConfig};
use crate::views::SequenceBatch;

pub const GRAD_TOL: f64 = 1e-4;
const EPS: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct GradCheckRecord {
    pub name: String,
    pub max_rel_err: f64,
    pub pass: bool,
}

impl GradCheckRecord {
    fn new(name: impl Into<String>, err: f64) -> Self {
        GradCheckRecord {
            name: name.into(),
            max_rel_err: err,
            pass: err < GRAD_TOL,
        }
    }

    pub fn render(&self) -> String {
        format!(
            "suite={} max_rel_err={:.3e} status={}",
            self.name,
            self.max_rel_err,
            if self.pass { "PASS" } else { "FAIL" }
        )
    }
}

fn micro_model(seed: u64) -> Result<Rssm> {
    Rssm::new(
        RssmConfig {
            obs_dim: 36,
            action_input_dim: 1,
            embed_dim: 5,
            embed_hidden_dim: 8,
            head_hidden_dim: 6,
            h_dim: 4,
            z_dim: 3,
            stddev_floor: 1e-4,
        },
        seed,
    )
}

fn micro_batch(n: usize, t: usize, side: usize, one_hot_actions: Option<usize>, seed: u64) -> SequenceBatch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    SequenceBatch {
        obs: (0..n)
            .map(|_| {
                (0..t)
                    .map(|_| {
                        let data: Vec<f64> =
                            (0..side * side).map(|_| rng.gen_range(0.0..1.0)).collect();
                        Tensor::new(vec![side, side], data).unwrap()
                    })
                    .collect()
            })
            .collect(),
        actions: (0..n)
            .map(|_| {
                (0..t)
                    .map(|_| match one_hot_actions {
                        Some(k) => {
                            let mut v = vec![0.0; k];
                            v[rng.gen_range(0..k)] = 1.0;
                            v
                        }
                        None => vec![rng.gen_range(-1.0..1.0)],
                    })
                    .collect()
            })
            .collect(),
        rewards: (0..n)
            .map(|_| (0..t).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect(),
        old_reprs: None,
    }
}

fn frozen_noise(seed: u64) -> impl FnMut(&[usize]) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    move |shape: &[usize]| {
        let n: usize = shape.iter().product();
        let data: Vec<f64> = (0..n)
            .map(|_| rand::Rng::sample(&mut rng, rand_distr::StandardNormal))
            .collect();
        Tensor::new(shape.to_vec(), data).unwrap()
    }
}

fn per_op_records(trials: usize, records: &mut Vec<GradCheckRecord>) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(515);
    type Builder = fn(&Node, &Node) -> Result<Node>;
    let cases: Vec<(&str, Builder)> = vec![
        ("op/add", |x, y| x.add(y)?.sum_all()),
        ("op/sub", |x, y| x.sub(y)?.sum_all()),
        ("op/mul", |x, y| x.mul(y)?.sum_all()),
        ("op/div", |x, y| x.div(&y.square()?.add_scalar(0.5)?)?.sum_all()),
        ("op/matmul", |x, y| x.matmul(y)?.sum_all()),
        ("op/exp", |x, _| x.exp()?.sum_all()),
        ("op/log", |x, _| x.square()?.add_scalar(0.5)?.log()?.sum_all()),
        ("op/tanh", |x, _| x.tanh()?.sum_all()),
        ("op/relu", |x, _| x.relu()?.sum_all()),
        ("op/softplus", |x, _| x.softplus()?.sum_all()),
        ("op/square", |x, _| x.square()?.sum_all()),
        ("op/sqrt", |x, _| x.square()?.add_scalar(0.5)?.sqrt()?.sum_all()),
        ("op/sum", |x, _| x.sum_axis(1, true)?.square()?.sum_all()),
        ("op/mean", |x, _| x.mean_axis(0, false)?.square()?.sum_all()),
        ("op/broadcast", |x, _| {
            x.sum_axis(1, true)?.broadcast_to(&[3, 3])?.square()?.sum_all()
        }),
        ("op/concat", |x, y| {
            concat(&[x.clone(), y.clone()], 1)?.square()?.sum_all()
        }),
        ("op/slice", |x, _| x.slice_axis(1, 1, 2)?.square()?.sum_all()),
        ("op/transpose", |x, y| x.transpose()?.matmul(y)?.sum_all()),
    ];
    for (name, builder) in cases {
        let mut worst: f64 = 0.0;
        for _ in 0..trials {
            let data: Vec<f64> = (0..9).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let x0 = Tensor::new(vec![3, 3], data)?;
            let other_data: Vec<f64> = (0..9).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let other = Node::constant(Tensor::new(vec![3, 3], other_data)?);
            worst = worst.max(finite_diff_check(|x| builder(x, &other), &x0, EPS)?);
        }
        records.push(GradCheckRecord::new(name, worst));
    }
    Ok(())
}

fn gaussian_records(records: &mut Vec<GradCheckRecord>) -> Result<()> {
    let x0 = Tensor::new(vec![4], vec![0.4, -0.6, 0.3, 0.9])?;
    let m_q = Node::constant(Tensor::new(vec![2], vec![-0.3, 0.8])?);
    let s_q = Node::constant(Tensor::new(vec![2], vec![0.2, -0.1])?);
    for which in ["gaussians/kl", "gaussians/skl", "gaussians/log_prob"] {
        let err = finite_diff_check(
            |x| {
                let m = x.slice_axis(0, 0, 2)?;
                let s = x.slice_axis(0, 2, 2)?;
                let p = DiagGaussian::from_raw(m, s, 1e-4)?;
                let q = DiagGaussian::from_raw(m_q.clone(), s_q.clone(), 1e-4)?;
                match which {
                    "gaussians/kl" => kl(&p, &q),
                    "gaussians/skl" => skl(&p, &q),
                    _ => log_prob(
                        &p,
                        &Node::constant(Tensor::new(vec![2], vec![0.25, -0.5])?),
                    ),
                }
            },
            &x0,
            EPS,
        )?;
        records.push(GradCheckRecord::new(which, err));
    }
    Ok(())
}

fn infonce_record(records: &mut Vec<GradCheckRecord>) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let data: Vec<f64> = (0..16).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let x0 = Tensor::new(vec![4, 4], data)?;
        worst = worst.max(finite_diff_check(|s| infonce(s), &x0, EPS)?);
    }
    records.push(GradCheckRecord::new("mi/infonce", worst));
    Ok(())
}

fn encoder_record(records: &mut Vec<GradCheckRecord>) -> Result<()> {
    let model = micro_model(81)?;
    let mut rng = ChaCha8Rng::seed_from_u64(82);
    let t_len = 4usize;
    let obs: Vec<Node> = (0..t_len)
        .map(|_| {
            let data: Vec<f64> = (0..2 * 36).map(|_| rng.gen_range(0.0..1.0)).collect();
            Ok(Node::constant(Tensor::new(vec![2, 36], data)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let acts: Vec<Node> = (0..t_len)
        .map(|_| {
            let data: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
            Ok(Node::constant(Tensor::new(vec![2, 1], data)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let err = finite_diff_check_params(
        || {
            let mut noise = frozen_noise(83);
            let steps = model.encode_sequence(&obs, &acts, None, &mut noise)?;
            let mut total = Node::scalar(0.0);
            for s in &steps {
                total = total.add(&s.state.repr()?.square()?.mean_all()?)?;
                total = total.add(&kl(&s.posterior, &s.prior)?.mean_all()?)?;
            }
            Ok(total)
        },
        model.registry(),
        EPS,
    )?;
    records.push(GradCheckRecord::new("rssm/encode_sequence", err));
    Ok(())
}

fn dribo_records(records: &mut Vec<GradCheckRecord>) -> Result<()> {
    let model = micro_model(91)?;
    let critic = BilinearCritic::new(model.cfg.repr_dim(), 92)?;
    let enc = IdentityActionEncoder { dim: 1 };
    let v1 = micro_batch(2, 3, 6, None, 93);
    let mut v2 = micro_batch(2, 3, 6, None, 94);
    v2.actions = v1.actions.clone();
    // Conservative posterior-prior term: the balanced estimator's 0.8/0.2
    // gradient split is checked by the exact ratio test instead, since its
    // gradient field deliberately differs from the value's differential.
    let cfg = DriboLossConfig {
        noise: NoiseMode::Zeros,
        conservative_kl_balance: true,
        ..Default::default()
    };
    let loss = || {
        let mut rng = ChaCha8Rng::seed_from_u64(95);
        Ok(dribo_loss(&v1, &v2, &model, &critic, &enc, 0.7, &cfg, &mut rng)?.total)
    };
    let err_model = finite_diff_check_params(loss, model.registry(), EPS)?;
    records.push(GradCheckRecord::new("loss/dribo_encoder_params", err_model));
    let err_critic = finite_diff_check_params(loss, critic.registry(), EPS)?;
    records.push(GradCheckRecord::new("loss/dribo_critic_params", err_critic));
    Ok(())
}

fn sac_records(records: &mut Vec<GradCheckRecord>) -> Result<()> {
    let model = micro_model(101)?;
    let target_model = model.clone_as_target()?;
    let mut cfg = SacConfig::desk(1);
    cfg.hidden_dim = 8;
    let agent = SacAgent::new(cfg, model.cfg.repr_dim(), 102)?;
    let batch = micro_batch(2, 3, 6, None, 103);
    let critic_loss = || {
        Ok(sac_losses(&agent, &model, &target_model, &batch, &mut frozen_noise(104))?.critic)
    };
    records.push(GradCheckRecord::new(
        "agents/sac_critic_wrt_critic",
        finite_diff_check_params(critic_loss, agent.critic_registry(), EPS)?,
    ));
    records.push(GradCheckRecord::new(
        "agents/sac_critic_wrt_encoder",
        finite_diff_check_params(critic_loss, model.registry(), EPS)?,
    ));
    let actor_loss = || {
        Ok(sac_losses(&agent, &model, &target_model, &batch, &mut frozen_noise(104))?.actor)
    };
    records.push(GradCheckRecord::new(
        "agents/sac_actor_wrt_policy",
        finite_diff_check_params(actor_loss, agent.policy_registry(), EPS)?,
    ));
    let alpha_loss = || {
        Ok(sac_losses(&agent, &model, &target_model, &batch, &mut frozen_noise(104))?.alpha)
    };
    records.push(GradCheckRecord::new(
        "agents/sac_alpha",
        finite_diff_check_params(alpha_loss, agent.alpha_registry(), EPS)?,
    ));
    Ok(())
}

fn ppo_records(records: &mut Vec<GradCheckRecord>) -> Result<()> {
    let model = Rssm::new(
        RssmConfig {
            obs_dim: 36,
            action_input_dim: 4,
            embed_dim: 5,
            embed_hidden_dim: 8,
            head_hidden_dim: 6,
            h_dim: 4,
            z_dim: 3,
            stddev_floor: 1e-4,
        },
        111,
    )?;
    let mut cfg = PpoConfig::desk(3);
    cfg.hidden_dim = 8;
    cfg.embed_hidden = 8;
    let agent = PpoAgent::new(cfg, model.cfg.repr_dim(), 112)?;
    let mut rng = ChaCha8Rng::seed_from_u64(113);
    let mut rollout = PpoRollout::new();
    let mut state = DiscreteActorState::initial(&model);
    for t in 0..4 {
        let data: Vec<f64> = (0..36).map(|_| rng.gen_range(0.0..1.0)).collect();
        let frame = Tensor::new(vec![6, 6], data)?;
        let d = ppo_act(&agent, &model, &frame, &state, false, &mut rng)?;
        rollout.steps.push(PpoStep {
            obs: frame,
            action: d.action,
            reward: rng.gen_range(-1.0..1.0),
            norm_reward: rng.gen_range(-1.0..1.0),
            done: t == 3,
            old_state: Some(d.old_state),
            prev_action: d.prev_action,
            noise: d.noise,
            log_prob: d.log_prob,
            value: d.value,
        });
        state = d.next_state;
    }
    rollout.compute_gae(0.99, 0.95);
    let indices: Vec<usize> = (0..4).collect();
    let loss = || Ok(ppo_minibatch_losses(&agent, &model, &rollout, &indices, 0.0, 1.0)?.total);
    records.push(GradCheckRecord::new(
        "agents/ppo_wrt_agent",
        finite_diff_check_params(loss, agent.registry(), EPS)?,
    ));
    records.push(GradCheckRecord::new(
        "agents/ppo_wrt_encoder",
        finite_diff_check_params(loss, model.registry(), EPS)?,
    ));
    Ok(())
}

/// Finite-difference verification of every differentiable operation and
/// every composite loss, as one report.
pub fn grad_check_suite(trials_per_op: usize) -> Result<Vec<GradCheckRecord>> {
    let mut records = Vec::new();
    per_op_records(trials_per_op, &mut records)?;
    gaussian_records(&mut records)?;
    infonce_record(&mut records)?;
    encoder_record(&mut records)?;
    dribo_records(&mut records)?;
    sac_records(&mut records)?;
    ppo_records(&mut records)?;
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quick_grad_check_suite_passes() {
        let records = grad_check_suite(3).unwrap();
        let failing: Vec<&GradCheckRecord> = records.iter().filter(|r| !r.pass).collect();
        assert!(
            failing.is_empty(),
            "{:?}",
            failing.iter().map(|r| r.render()).collect::<Vec<_>>()
        );
        assert!(records.len() >= 28);
    }
}
