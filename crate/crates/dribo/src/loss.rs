//! The two-view bottleneck loss: a pooled InfoNCE term that pulls paired
//! representations together, a beta-weighted sequence-averaged symmetrized
//! KL between the per-view posteriors, and an asymmetric posterior-prior
//! regularizer (KL balancing, 0.8 toward the prior / 0.2 toward the
//! posterior). Beta follows an exponential schedule over episodes.

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gaussians::{kl, skl, DiagGaussian};
use crate::mi::{infonce, infonce_plus_log_m, score_matrix, BilinearCritic};
use crate::ndgrad::{concat, Node};
use crate::rssm::{ActionEncoder, EncodedStep, Rssm};
use crate::views::{stacked_actions, stacked_flat_obs, SequenceBatch};

/// Metric keys emitted per optimization step.
pub const METRIC_KEYS: [&str; 6] = [
    "dribo/total",
    "dribo/infonce",
    "dribo/infonce_plus_logm",
    "dribo/skl",
    "dribo/kl_balance",
    "dribo/beta",
];

/// Exponential (geometric) ramp for the bottleneck weight.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaSchedule {
    pub beta_start: f64,
    pub beta_end: f64,
    pub start_episode: usize,
    pub end_episode: usize,
}

impl BetaSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta_start > 0.0 && self.beta_start <= self.beta_end) {
            return Err(Error::contract("need 0 < beta_start <= beta_end"));
        }
        if self.start_episode >= self.end_episode {
            return Err(Error::contract("need start_episode < end_episode"));
        }
        Ok(())
    }

    /// Defaults: 1e-4 ramping to 1e-3 over episodes 10..60.
    pub fn default_ramp() -> Self {
        BetaSchedule {
            beta_start: 1e-4,
            beta_end: 1e-3,
            start_episode: 10,
            end_episode: 60,
        }
    }
}

/// Geometric interpolation clamped to the schedule window.
pub fn beta_at(schedule: &BetaSchedule, episode: usize) -> f64 {
    let frac = (episode as f64 - schedule.start_episode as f64)
        / (schedule.end_episode as f64 - schedule.start_episode as f64);
    let frac = frac.clamp(0.0, 1.0);
    schedule.beta_start * (schedule.beta_end / schedule.beta_start).powf(frac)
}

/// How sampling noise is drawn for the two views.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseMode {
    /// Independent draws per view (default).
    Independent,
    /// The same draws for both views.
    Shared,
    /// All-zero noise; encoding becomes deterministic.
    Zeros,
}

#[derive(Debug, Clone)]
pub struct DriboLossConfig {
    /// Block gradients through the conditioning state h_t in the SKL term.
    pub block_prev_state_grads: bool,
    pub noise: NoiseMode,
    /// Prior-side weight of the balanced KL (posterior side gets 1 - w).
    pub kl_balance_weight: f64,
    /// Replace the balanced KL with the plain (conservative) KL. The
    /// forward value is identical; only finite-difference verification uses
    /// this, because the balanced estimator's gradient field is asymmetric
    /// by construction and cannot match central differences.
    pub conservative_kl_balance: bool,
}

impl Default for DriboLossConfig {
    fn default() -> Self {
        DriboLossConfig {
            block_prev_state_grads: false,
            noise: NoiseMode::Independent,
            kl_balance_weight: 0.8,
            conservative_kl_balance: false,
        }
    }
}

/// Loss value plus detached component metrics.
pub struct DriboLossOutput {
    pub total: Node,
    pub infonce_value: f64,
    pub infonce_plus_logm: f64,
    pub skl_value: f64,
    pub kl_balance_value: f64,
    pub beta: f64,
}

impl DriboLossOutput {
    pub fn metrics(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("dribo/total", self.total.scalar_value().unwrap_or(f64::NAN)),
            ("dribo/infonce", self.infonce_value),
            ("dribo/infonce_plus_logm", self.infonce_plus_logm),
            ("dribo/skl", self.skl_value),
            ("dribo/kl_balance", self.kl_balance_value),
            ("dribo/beta", self.beta),
        ]
    }
}

/// Sequence-averaged symmetrized KL between two posterior lists:
/// (1/T) sum_t mean_batch skl(a_t, b_t).
pub fn skl_sequence(a: &[DiagGaussian], b: &[DiagGaussian]) -> Result<Node> {
    if a.is_empty() || a.len() != b.len() {
        return Err(Error::contract(format!(
            "posterior list lengths {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let mut acc = Node::scalar(0.0);
    for (p, q) in a.iter().zip(b.iter()) {
        acc = acc.add(&skl(p, q)?.mean_all()?)?;
    }
    acc.mul_scalar(1.0 / a.len() as f64)
}

/// Balanced posterior-prior KL: w * KL(sg(post) || prior) +
/// (1 - w) * KL(post || sg(prior)). The forward value equals the plain KL
/// exactly; the gradient splits w toward the prior parameters and 1 - w
/// toward the posterior parameters.
pub fn kl_balanced(post: &DiagGaussian, prior: &DiagGaussian, w: f64) -> Result<Node> {
    let toward_prior = kl(&post.detached(), prior)?.mul_scalar(w)?;
    let toward_post = kl(post, &prior.detached())?.mul_scalar(1.0 - w)?;
    toward_prior.add(&toward_post)
}

fn pool_representations(steps: &[EncodedStep]) -> Result<Node> {
    let reprs: Vec<Node> = steps
        .iter()
        .map(|s| s.state.repr())
        .collect::<Result<Vec<_>>>()?;
    concat(&reprs, 0)
}

/// The full two-view loss over a pair of augmented sequence batches.
///
/// Both views must share batch shape and carry identical action sequences.
/// Each view is encoded with the same model; all T*N paired representations
/// are pooled for the contrastive term, the SKL term averages over sequences
/// and time, and the balanced posterior-prior KL averages over both views.
pub fn dribo_loss(
    view1: &SequenceBatch,
    view2: &SequenceBatch,
    model: &Rssm,
    critic: &BilinearCritic,
    action_encoder: &dyn ActionEncoder,
    beta: f64,
    cfg: &DriboLossConfig,
    rng: &mut ChaCha8Rng,
) -> Result<DriboLossOutput> {
    view1.validate()?;
    view2.validate()?;
    let (n, t_len) = (view1.n_sequences(), view1.len_t());
    if view2.n_sequences() != n || view2.len_t() != t_len {
        return Err(Error::contract(format!(
            "view shapes disagree: {}x{} vs {}x{}",
            n,
            t_len,
            view2.n_sequences(),
            view2.len_t()
        )));
    }
    if view1.actions != view2.actions {
        return Err(Error::contract("views must share identical actions"));
    }

    // Stack frames and encode actions once (shared across views).
    let obs1: Vec<Node> = (0..t_len)
        .map(|t| Ok(Node::constant(stacked_flat_obs(view1, t)?)))
        .collect::<Result<Vec<_>>>()?;
    let obs2: Vec<Node> = (0..t_len)
        .map(|t| Ok(Node::constant(stacked_flat_obs(view2, t)?)))
        .collect::<Result<Vec<_>>>()?;
    let acts: Vec<Node> = (0..t_len)
        .map(|t| action_encoder.encode(&stacked_actions(view1, t)?))
        .collect::<Result<Vec<_>>>()?;

    let z = model.cfg.z_dim;
    let noise_tensors: Vec<crate::ndgrad::Tensor> = {
        let mut gen = crate::rssm::gaussian_noise(rng);
        (0..2 * t_len).map(|_| gen(&[n, z])).collect()
    };
    let pick = |view_idx: usize, t: usize| -> crate::ndgrad::Tensor {
        match cfg.noise {
            NoiseMode::Zeros => crate::ndgrad::Tensor::zeros(&[n, z]),
            NoiseMode::Shared => noise_tensors[t].clone(),
            NoiseMode::Independent => noise_tensors[view_idx * t_len + t].clone(),
        }
    };

    let mut t1 = 0usize;
    let mut n1 = |_: &[usize]| {
        let out = pick(0, t1);
        t1 += 1;
        out
    };
    let steps1 = model.encode_sequence(&obs1, &acts, None, &mut n1)?;
    drop(n1);
    let mut t2 = 0usize;
    let mut n2 = |_: &[usize]| {
        let out = pick(1, t2);
        t2 += 1;
        out
    };
    let steps2 = model.encode_sequence(&obs2, &acts, None, &mut n2)?;
    drop(n2);

    // Contrastive term over the pooled T*N pairs.
    let pool1 = pool_representations(&steps1)?;
    let pool2 = pool_representations(&steps2)?;
    let m = t_len * n;
    let nce = infonce(&score_matrix(&pool1, &pool2, critic)?)?;

    // SKL term, optionally re-evaluated under detached conditioning states.
    let skl_term = if cfg.block_prev_state_grads {
        let reposterior = |steps: &[EncodedStep]| -> Result<Vec<DiagGaussian>> {
            steps
                .iter()
                .map(|s| model.posterior_from_embed(&s.state.h.stop_gradient(), &s.embed))
                .collect()
        };
        let p1 = reposterior(&steps1)?;
        let p2 = reposterior(&steps2)?;
        skl_sequence(&p1, &p2)?
    } else {
        let p1: Vec<DiagGaussian> = steps1.iter().map(|s| s.posterior.clone()).collect();
        let p2: Vec<DiagGaussian> = steps2.iter().map(|s| s.posterior.clone()).collect();
        skl_sequence(&p1, &p2)?
    };

    // Balanced posterior-prior KL averaged over both views and all steps.
    let mut balance = Node::scalar(0.0);
    for step in steps1.iter().chain(steps2.iter()) {
        let term = if cfg.conservative_kl_balance {
            kl(&step.posterior, &step.prior)?
        } else {
            kl_balanced(&step.posterior, &step.prior, cfg.kl_balance_weight)?
        };
        balance = balance.add(&term.mean_all()?)?;
    }
    let balance = balance.mul_scalar(1.0 / (2 * t_len) as f64)?;

    let bottleneck = skl_term.add(&balance)?.mul_scalar(beta)?;
    let total = nce.neg()?.add(&bottleneck)?;

    let infonce_value = nce.scalar_value()?;
    Ok(DriboLossOutput {
        total,
        infonce_value,
        infonce_plus_logm: infonce_plus_log_m(infonce_value, m),
        skl_value: skl_term.scalar_value()?,
        kl_balance_value: balance.scalar_value()?,
        beta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ndgrad::{backward, Node, Tensor};
    use crate::rssm::{IdentityActionEncoder, RssmConfig};
    use rand::{Rng, SeedableRng};

    fn schedule() -> BetaSchedule {
        BetaSchedule::default_ramp()
    }

    #[test]
    fn beta_schedule_endpoints_and_midpoint() {
        let s = schedule();
        s.validate().unwrap();
        assert_eq!(beta_at(&s, 0), 1e-4);
        assert_eq!(beta_at(&s, 10), 1e-4);
        assert_eq!(beta_at(&s, 60), 1e-3);
        assert_eq!(beta_at(&s, 1000), 1e-3);
        let mid = beta_at(&s, 35);
        assert!((mid - (1e-4f64 * 1e-3).sqrt()).abs() < 1e-12);
        assert!((mid - 3.1623e-4).abs() < 1e-7);
        // Monotone along the ramp.
        let mut last = 0.0;
        for e in 0..80 {
            let b = beta_at(&s, e);
            assert!(b >= last);
            last = b;
        }
    }

    fn gauss_row(mean: f64, std: f64) -> DiagGaussian {
        DiagGaussian::new(
            Node::parameter(Tensor::new(vec![1, 1], vec![mean]).unwrap()),
            Node::parameter(Tensor::new(vec![1, 1], vec![std]).unwrap()),
        )
        .unwrap()
    }

    #[test]
    fn skl_sequence_cases() {
        let p = gauss_row(1.0, 1.0);
        let q = gauss_row(0.0, 1.0);
        // Identical lists.
        let zero = skl_sequence(
            &[p.clone(), q.clone()],
            &[p.clone(), q.clone()],
        )
        .unwrap()
        .scalar_value()
        .unwrap();
        assert_eq!(zero, 0.0);

        // T=1 reduces to a single skl.
        let single = skl_sequence(&[p.clone()], &[q.clone()])
            .unwrap()
            .scalar_value()
            .unwrap();
        assert!((single - 0.5).abs() < 1e-12);

        // Per-step SKLs 0.5 and 1.5 average to 1.0: skl(N(m,1), N(0,1)) = m^2/2.
        let a1 = gauss_row(1.0, 1.0);
        let a2 = gauss_row((3.0f64).sqrt(), 1.0);
        let b = gauss_row(0.0, 1.0);
        let avg = skl_sequence(&[a1, a2], &[b.clone(), b.clone()])
            .unwrap()
            .scalar_value()
            .unwrap();
        assert!((avg - 1.0).abs() < 1e-12, "{avg}");

        assert!(skl_sequence(&[p], &[]).is_err());
    }

    #[test]
    fn kl_balanced_value_equals_plain_kl_exactly() {
        let post = gauss_row(0.7, 1.2);
        let prior = gauss_row(-0.3, 0.8);
        let plain = kl(&post, &prior).unwrap().scalar_value().unwrap();
        let balanced = kl_balanced(&post, &prior, 0.8)
            .unwrap()
            .scalar_value()
            .unwrap();
        // 0.8x + 0.2x must reassemble x to the bit for these magnitudes.
        assert!((balanced - plain).abs() < 1e-15, "{balanced} vs {plain}");
    }

    #[test]
    fn kl_balanced_zero_at_equality_with_zero_grads() {
        let post = gauss_row(0.4, 0.9);
        let prior = gauss_row(0.4, 0.9);
        let b = kl_balanced(&post, &prior, 0.8).unwrap();
        assert_eq!(b.scalar_value().unwrap(), 0.0);
        backward(&b.sum_all().unwrap()).unwrap();
        for g in [post.mean.grad(), prior.mean.grad()].into_iter().flatten() {
            assert!(g.data().iter().all(|&v| v.abs() < 1e-15));
        }
    }

    #[test]
    fn kl_balanced_gradient_ratio_is_w() {
        let post = gauss_row(0.7, 1.2);
        let prior = gauss_row(-0.3, 0.8);

        let b = kl_balanced(&post, &prior, 0.8).unwrap();
        backward(&b).unwrap();
        let g_prior_balanced = prior.mean.grad().unwrap().data()[0];
        let g_post_balanced = post.mean.grad().unwrap().data()[0];

        post.mean.clear_grad();
        prior.mean.clear_grad();
        let plain = kl(&post, &prior).unwrap();
        backward(&plain).unwrap();
        let g_prior_plain = prior.mean.grad().unwrap().data()[0];
        let g_post_plain = post.mean.grad().unwrap().data()[0];

        assert!((g_prior_balanced / g_prior_plain - 0.8).abs() < 1e-6);
        assert!((g_post_balanced / g_post_plain - 0.2).abs() < 1e-6);
    }

    // -- dribo_loss over a micro model --

    fn micro_cfg() -> RssmConfig {
        RssmConfig {
            obs_dim: 36,
            action_input_dim: 1,
            embed_dim: 5,
            embed_hidden_dim: 8,
            head_hidden_dim: 6,
            h_dim: 4,
            z_dim: 3,
            stddev_floor: 1e-4,
        }
    }

    fn micro_batch(n: usize, t: usize, side: usize, seed: u64) -> SequenceBatch {
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
                .map(|_| (0..t).map(|_| vec![rng.gen_range(-1.0..1.0)]).collect())
                .collect(),
            rewards: vec![vec![0.0; t]; n],
            old_reprs: None,
        }
    }

    #[test]
    fn identical_views_with_zero_noise_have_zero_skl() {
        let model = Rssm::new(micro_cfg(), 3).unwrap();
        let critic = BilinearCritic::new(model.cfg.repr_dim(), 4).unwrap();
        let enc = IdentityActionEncoder { dim: 1 };
        let batch = micro_batch(2, 3, 6, 9);
        let cfg = DriboLossConfig {
            noise: NoiseMode::Zeros,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = dribo_loss(&batch, &batch, &model, &critic, &enc, 0.5, &cfg, &mut rng).unwrap();
        assert_eq!(out.skl_value, 0.0);
        let expected = -out.infonce_value + 0.5 * out.kl_balance_value;
        assert!((out.total.scalar_value().unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn beta_zero_reduces_to_pure_infomax() {
        let model = Rssm::new(micro_cfg(), 5).unwrap();
        let critic = BilinearCritic::new(model.cfg.repr_dim(), 6).unwrap();
        let enc = IdentityActionEncoder { dim: 1 };
        let base = micro_batch(2, 2, 6, 10);
        let spec = crate::views::AugmentationSpec::Cutout { max_extent: 2 };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (v1, v2) = crate::views::make_two_views(&base, &spec, &mut rng, false).unwrap();
        let out = dribo_loss(
            &v1,
            &v2,
            &model,
            &critic,
            &enc,
            0.0,
            &DriboLossConfig::default(),
            &mut rng,
        )
        .unwrap();
        assert_eq!(out.total.scalar_value().unwrap(), -out.infonce_value);
    }

    #[test]
    fn micro_case_recomposes_from_components() {
        let model = Rssm::new(micro_cfg(), 11).unwrap();
        let critic = BilinearCritic::new(model.cfg.repr_dim(), 12).unwrap();
        let enc = IdentityActionEncoder { dim: 1 };
        let v1 = micro_batch(1, 2, 6, 21);
        let mut v2 = micro_batch(1, 2, 6, 22);
        v2.actions = v1.actions.clone();
        let cfg = DriboLossConfig {
            noise: NoiseMode::Zeros,
            ..Default::default()
        };
        let beta = 0.3;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let out = dribo_loss(&v1, &v2, &model, &critic, &enc, beta, &cfg, &mut rng).unwrap();

        // Recompose by hand from the component operations.
        let mk_nodes = |v: &SequenceBatch| -> (Vec<Node>, Vec<Node>) {
            let obs = (0..2)
                .map(|t| Node::constant(stacked_flat_obs(v, t).unwrap()))
                .collect::<Vec<_>>();
            let acts = (0..2)
                .map(|t| enc.encode(&stacked_actions(v, t).unwrap()).unwrap())
                .collect::<Vec<_>>();
            (obs, acts)
        };
        let (o1, a1) = mk_nodes(&v1);
        let (o2, _) = mk_nodes(&v2);
        let mut zn = crate::rssm::zero_noise();
        let s1 = model.encode_sequence(&o1, &a1, None, &mut zn).unwrap();
        let mut zn = crate::rssm::zero_noise();
        let s2 = model.encode_sequence(&o2, &a1, None, &mut zn).unwrap();
        let pool1 = pool_representations(&s1).unwrap();
        let pool2 = pool_representations(&s2).unwrap();
        let nce = infonce(&score_matrix(&pool1, &pool2, &critic).unwrap())
            .unwrap()
            .scalar_value()
            .unwrap();
        let p1: Vec<DiagGaussian> = s1.iter().map(|s| s.posterior.clone()).collect();
        let p2: Vec<DiagGaussian> = s2.iter().map(|s| s.posterior.clone()).collect();
        let skl_v = skl_sequence(&p1, &p2).unwrap().scalar_value().unwrap();
        let mut bal = 0.0;
        for s in s1.iter().chain(s2.iter()) {
            bal += kl_balanced(&s.posterior, &s.prior, 0.8)
                .unwrap()
                .mean_all()
                .unwrap()
                .scalar_value()
                .unwrap();
        }
        bal /= 4.0;
        let recomposed = -nce + beta * (skl_v + bal);
        assert!(
            (out.total.scalar_value().unwrap() - recomposed).abs() < 1e-12,
            "{} vs {recomposed}",
            out.total.scalar_value().unwrap()
        );
    }

    #[test]
    fn swapping_views_leaves_skl_term_unchanged() {
        let model = Rssm::new(micro_cfg(), 31).unwrap();
        let critic = BilinearCritic::new(model.cfg.repr_dim(), 32).unwrap();
        let enc = IdentityActionEncoder { dim: 1 };
        let v1 = micro_batch(2, 2, 6, 41);
        let mut v2 = micro_batch(2, 2, 6, 42);
        v2.actions = v1.actions.clone();
        let cfg = DriboLossConfig {
            noise: NoiseMode::Zeros,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ab = dribo_loss(&v1, &v2, &model, &critic, &enc, 0.7, &cfg, &mut rng).unwrap();
        let ba = dribo_loss(&v2, &v1, &model, &critic, &enc, 0.7, &cfg, &mut rng).unwrap();
        assert_eq!(ab.skl_value, ba.skl_value);
    }

    #[test]
    fn mismatched_actions_rejected() {
        let model = Rssm::new(micro_cfg(), 31).unwrap();
        let critic = BilinearCritic::new(model.cfg.repr_dim(), 32).unwrap();
        let enc = IdentityActionEncoder { dim: 1 };
        let v1 = micro_batch(2, 2, 6, 41);
        let v2 = micro_batch(2, 2, 6, 42); // different actions
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let out = dribo_loss(
            &v1,
            &v2,
            &model,
            &critic,
            &enc,
            0.7,
            &DriboLossConfig::default(),
            &mut rng,
        );
        assert!(matches!(out, Err(Error::Contract(_))));
    }

    #[test]
    fn minimizing_the_loss_reduces_skl() {
        use crate::ndgrad::Adam;
        let model = Rssm::new(micro_cfg(), 51).unwrap();
        let critic = BilinearCritic::new(model.cfg.repr_dim(), 52).unwrap();
        let enc = IdentityActionEncoder { dim: 1 };
        let base = micro_batch(2, 3, 7, 61);
        let spec = crate::views::AugmentationSpec::Crop {
            source: 7,
            target: 6,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(62);
        let cfg = DriboLossConfig::default();
        let mut enc_opt = Adam::new(model.registry(), 3e-3);
        let mut critic_opt = Adam::new(critic.registry(), 3e-3);
        // Strong beta so the SKL term dominates on the micro problem.
        let beta = 1.0;
        let mut first = None;
        let mut last = 0.0;
        for _ in 0..200 {
            let (v1, v2) = crate::views::make_two_views(&base, &spec, &mut rng, false).unwrap();
            let out =
                dribo_loss(&v1, &v2, &model, &critic, &enc, beta, &cfg, &mut rng).unwrap();
            model.registry().zero_grads();
            critic.registry().zero_grads();
            backward(&out.total).unwrap();
            enc_opt.step(model.registry()).unwrap();
            critic_opt.step(critic.registry()).unwrap();
            if first.is_none() {
                first = Some(out.skl_value);
            }
            last = out.skl_value;
        }
        assert!(
            last < first.unwrap(),
            "skl did not decrease: {last} vs {:?}",
            first
        );
    }
}
