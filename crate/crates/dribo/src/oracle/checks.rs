use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::oracle::JointTable;
use crate::worlds::{enumerate_trajectories, extend_with_optimal_actions, TabularPomdp};

const GAP_TOL: f64 = 1e-9;
const ATOM_CAP: usize = 2_000_000;

/// Stochastic encoder table p(latent_t | o_t, latent_{t-1}, a_{t-1}).
/// Context index 0 means "sequence start" (no previous latent/action).
#[derive(Debug, Clone)]
pub struct TableEncoder {
    pub n_obs: usize,
    pub n_actions: usize,
    pub n_latent: usize,
    /// probs[((o * (n_latent+1) + ctx_s) * (n_actions+1) + ctx_a) * n_latent + s].
    probs: Vec<f64>,
}

impl TableEncoder {
    fn idx(&self, o: usize, ctx_s: usize, ctx_a: usize) -> usize {
        ((o * (self.n_latent + 1) + ctx_s) * (self.n_actions + 1) + ctx_a) * self.n_latent
    }

    pub fn row(&self, o: usize, prev_latent: Option<usize>, prev_action: Option<usize>) -> &[f64] {
        let ctx_s = prev_latent.map_or(0, |s| s + 1);
        let ctx_a = prev_action.map_or(0, |a| a + 1);
        let start = self.idx(o, ctx_s, ctx_a);
        &self.probs[start..start + self.n_latent]
    }

    fn from_fn(
        n_obs: usize,
        n_actions: usize,
        n_latent: usize,
        mut f: impl FnMut(usize, usize, usize) -> Vec<f64>,
    ) -> Result<Self> {
        let mut probs = Vec::with_capacity(n_obs * (n_latent + 1) * (n_actions + 1) * n_latent);
        for o in 0..n_obs {
            for ctx_s in 0..=n_latent {
                for ctx_a in 0..=n_actions {
                    let row = f(o, ctx_s, ctx_a);
                    if row.len() != n_latent {
                        return Err(Error::contract("encoder row arity"));
                    }
                    let sum: f64 = row.iter().sum();
                    if (sum - 1.0).abs() > 1e-12 || row.iter().any(|p| *p < 0.0) {
                        return Err(Error::domain("encoder row not a distribution"));
                    }
                    probs.extend(row);
                }
            }
        }
        Ok(TableEncoder {
            n_obs,
            n_actions,
            n_latent,
            probs,
        })
    }

    fn one_hot(n: usize, hot: usize) -> Vec<f64> {
        let mut v = vec![0.0; n];
        v[hot] = 1.0;
        v
    }

    /// latent = o, regardless of context.
    pub fn identity(n_obs: usize, n_actions: usize) -> Result<Self> {
        Self::from_fn(n_obs, n_actions, n_obs, |o, _, _| Self::one_hot(n_obs, o))
    }

    /// latent = 0 always.
    pub fn constant(n_obs: usize, n_actions: usize) -> Result<Self> {
        Self::from_fn(n_obs, n_actions, 1, |_, _, _| vec![1.0])
    }

    /// Drops the distractor bit: latent = o >> 1.
    pub fn drop_distractor(n_obs: usize, n_actions: usize) -> Result<Self> {
        Self::from_fn(n_obs, n_actions, n_obs / 2, |o, _, _| {
            Self::one_hot(n_obs / 2, o >> 1)
        })
    }

    /// Context-independent random relabeling of the observation alphabet
    /// (deterministic and injective, hence sufficient).
    pub fn random_injection(n_obs: usize, n_actions: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        let mut sigma: Vec<usize> = (0..n_obs).collect();
        sigma.shuffle(rng);
        Self::from_fn(n_obs, n_actions, n_obs, move |o, _, _| {
            Self::one_hot(n_obs, sigma[o])
        })
    }

    /// Fully random stochastic rows (machinery and identity checks).
    pub fn random_stochastic(
        n_obs: usize,
        n_actions: usize,
        n_latent: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for _ in 0..n_obs * (n_latent + 1) * (n_actions + 1) {
            let raw: Vec<f64> = (0..n_latent)
                .map(|_| -rng.gen_range(1e-12..1.0f64).ln())
                .collect();
            let total: f64 = raw.iter().sum();
            rows.push(raw.iter().map(|v| v / total).collect());
        }
        let mut it = rows.into_iter();
        Self::from_fn(n_obs, n_actions, n_latent, move |_, _, _| {
            it.next().expect("row count")
        })
    }
}

/// Extend an enumerated trajectory joint with encoder latents over one
/// observation channel. New variables are `{prefix}1..{prefix}T`.
pub fn extend_with_encoder(
    joint: &JointTable,
    m: &TabularPomdp,
    channel: usize,
    encoder: &TableEncoder,
    prefix: &str,
) -> Result<JointTable> {
    if channel != 1 && channel != 2 {
        return Err(Error::contract("channel must be 1 or 2"));
    }
    if encoder.n_obs != m.n_obs() || encoder.n_actions != m.n_actions {
        return Err(Error::contract("encoder alphabet mismatch"));
    }
    let names: Vec<String> = (1..=m.horizon).map(|t| format!("{prefix}{t}")).collect();
    let defs: Vec<(&str, usize)> = names
        .iter()
        .map(|n| (n.as_str(), encoder.n_latent))
        .collect();
    let obs_vars: Vec<usize> = (1..=m.horizon)
        .map(|t| joint.var_index(&format!("o{channel}_{t}")))
        .collect::<Result<Vec<_>>>()?;
    let act_vars: Vec<usize> = (1..=m.horizon)
        .map(|t| joint.var_index(&format!("a{t}")))
        .collect::<Result<Vec<_>>>()?;
    joint.extend_stochastic(&defs, ATOM_CAP, |tab, code, assigned, slot| {
        let o = tab.value_of(code, obs_vars[slot]);
        let prev_latent = if slot == 0 {
            None
        } else {
            Some(assigned[slot - 1])
        };
        let prev_action = if slot == 0 {
            None
        } else {
            Some(tab.value_of(code, act_vars[slot - 1]))
        };
        encoder.row(o, prev_latent, prev_action).to_vec()
    })
}

/// One line of the verification report.
#[derive(Debug, Clone)]
pub struct CheckRecord {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub gap: f64,
    pub pass: bool,
}

impl CheckRecord {
    fn new(name: impl Into<String>, lhs: f64, rhs: f64, gap: f64, pass: bool) -> Self {
        CheckRecord {
            name: name.into(),
            lhs,
            rhs,
            gap,
            pass,
        }
    }

    pub fn render(&self) -> String {
        format!(
            "check={} lhs={:.12e} rhs={:.12e} gap={:.3e} status={}",
            self.name,
            self.lhs,
            self.rhs,
            self.gap,
            if self.pass { "PASS" } else { "FAIL" }
        )
    }
}

fn names(prefix: &str, t_max: usize) -> Vec<String> {
    (1..=t_max).map(|t| format!("{prefix}{t}")).collect()
}

fn as_refs(v: &[String]) -> Vec<&str> {
    v.iter().map(|s| s.as_str()).collect()
}

/// Sufficiency verdict: I(o^(1)_{1:T}; a*_{1:T}) vs I(latent_{1:T}; a*_{1:T}).
pub struct SufficiencyReport {
    pub i_obs_astar: f64,
    pub i_latent_astar: f64,
    pub gap: f64,
    pub sufficient: bool,
}

pub fn verify_sufficiency(m: &TabularPomdp, encoder: &TableEncoder) -> Result<SufficiencyReport> {
    let joint = enumerate_trajectories(m, &m.uniform_policy(), ATOM_CAP)?;
    let joint = extend_with_optimal_actions(&joint, m)?;
    let joint = extend_with_encoder(&joint, m, 1, encoder, "u")?;
    let t = m.horizon;
    let obs = names("o1_", t);
    let astar = names("astar", t);
    let lat = names("u", t);
    let lhs = joint.mutual_info(&as_refs(&obs), &as_refs(&astar))?;
    let rhs = joint.mutual_info(&as_refs(&lat), &as_refs(&astar))?;
    let gap = lhs - rhs;
    Ok(SufficiencyReport {
        i_obs_astar: lhs,
        i_latent_astar: rhs,
        gap,
        sufficient: gap.abs() < GAP_TOL,
    })
}

/// Chain-rule decomposition of I(o; latent) against the task-relevant /
/// task-irrelevant split, plus a dual-route triple-information check.
pub struct ChainRuleReport {
    pub i_obs_latent: f64,
    pub i_latent_obs_given_astar: f64,
    pub i_latent_astar: f64,
    /// | I(o;s) - [I(s;o|a*) + I(s;a*)] | — zero when a* is a function of o.
    pub split_gap: f64,
    /// Two routes to I(s;o;a*) must agree for any encoder.
    pub triple_route_gap: f64,
}

pub fn verify_chain_rule(m: &TabularPomdp, encoder: &TableEncoder) -> Result<ChainRuleReport> {
    let joint = enumerate_trajectories(m, &m.uniform_policy(), ATOM_CAP)?;
    let joint = extend_with_optimal_actions(&joint, m)?;
    let joint = extend_with_encoder(&joint, m, 1, encoder, "u")?;
    let t = m.horizon;
    let obs = names("o1_", t);
    let astar = names("astar", t);
    let lat = names("u", t);
    let (o, s, a) = (as_refs(&obs), as_refs(&lat), as_refs(&astar));
    let i_os = joint.mutual_info(&o, &s)?;
    let i_so_given_a = joint.conditional_mutual_info(&s, &o, &a)?;
    let i_sa = joint.mutual_info(&s, &a)?;
    let split_gap = (i_os - (i_so_given_a + i_sa)).abs();
    let route1 = i_os - i_so_given_a;
    let route2 = i_sa - joint.conditional_mutual_info(&s, &a, &o)?;
    Ok(ChainRuleReport {
        i_obs_latent: i_os,
        i_latent_obs_given_astar: i_so_given_a,
        i_latent_astar: i_sa,
        split_gap,
        triple_route_gap: (route1 - route2).abs(),
    })
}

/// Stepwise factorized lower bound on the sequence mutual information:
/// I(latent_{1:T}; o_{1:T} | a_{1:T}) >= sum_t I(latent_t; o_t | latent_{t-1}, a_{t-1}).
pub struct StepwiseBoundReport {
    pub sequence_mi: f64,
    pub stepwise_sum: f64,
    pub slack: f64,
    pub holds: bool,
}

pub fn verify_stepwise_bound(
    m: &TabularPomdp,
    encoder: &TableEncoder,
) -> Result<StepwiseBoundReport> {
    let joint = enumerate_trajectories(m, &m.uniform_policy(), ATOM_CAP)?;
    let joint = extend_with_encoder(&joint, m, 1, encoder, "u")?;
    let t_max = m.horizon;
    let obs = names("o1_", t_max);
    let lat = names("u", t_max);
    let acts = names("a", t_max);
    let lhs = joint.conditional_mutual_info(&as_refs(&lat), &as_refs(&obs), &as_refs(&acts))?;
    let mut rhs = 0.0;
    for t in 1..=t_max {
        let x = [lat[t - 1].as_str()];
        let y = [obs[t - 1].as_str()];
        if t == 1 {
            rhs += joint.mutual_info(&x, &y)?;
        } else {
            let z = [lat[t - 2].as_str(), acts[t - 2].as_str()];
            rhs += joint.conditional_mutual_info(&x, &y, &z)?;
        }
    }
    let slack = lhs - rhs;
    Ok(StepwiseBoundReport {
        sequence_mi: lhs,
        stepwise_sum: rhs,
        slack,
        holds: slack >= -GAP_TOL,
    })
}

/// Per-step two-view split: I(s1;o1|ctx) = I(s1;o1|ctx,o2) + I(o2;s1|ctx).
/// The identity is the mutual-information chain rule and must hold for any
/// encoder that reads only channel 1.
pub struct MultiviewSplitReport {
    pub lhs: f64,
    pub conditional_term: f64,
    pub crossview_term: f64,
    pub identity_gap: f64,
}

pub fn verify_multiview_split(
    m: &TabularPomdp,
    encoder: &TableEncoder,
    t: usize,
) -> Result<MultiviewSplitReport> {
    if t == 0 || t > m.horizon || m.horizon > 2 {
        return Err(Error::contract("multiview split wants t within horizon <= 2"));
    }
    let joint = enumerate_trajectories(m, &m.uniform_policy(), ATOM_CAP)?;
    let joint = extend_with_encoder(&joint, m, 1, encoder, "u")?;
    let s1 = format!("u{t}");
    let o1 = format!("o1_{t}");
    let o2 = format!("o2_{t}");
    let ctx: Vec<String> = if t == 1 {
        vec![]
    } else {
        vec![format!("u{}", t - 1), format!("a{}", t - 1)]
    };
    let ctx_refs = as_refs(&ctx);
    let mut ctx_with_o2 = ctx_refs.clone();
    ctx_with_o2.push(o2.as_str());
    let lhs = joint.conditional_mutual_info(&[&s1], &[&o1], &ctx_refs)?;
    let conditional_term = joint.conditional_mutual_info(&[&s1], &[&o1], &ctx_with_o2)?;
    let crossview_term = joint.conditional_mutual_info(&[&o2], &[&s1], &ctx_refs)?;
    Ok(MultiviewSplitReport {
        lhs,
        conditional_term,
        crossview_term,
        identity_gap: (lhs - (conditional_term + crossview_term)).abs(),
    })
}

/// Cross-view information bound at T=1: I(s1; o2) >= I(s1; s2).
pub struct CrossViewBoundReport {
    pub i_latent1_obs2: f64,
    pub i_latent1_latent2: f64,
    pub slack: f64,
    pub holds: bool,
}

pub fn verify_crossview_bound(
    m: &TabularPomdp,
    enc1: &TableEncoder,
    enc2: &TableEncoder,
) -> Result<CrossViewBoundReport> {
    if m.horizon != 1 {
        return Err(Error::contract("cross-view bound check wants T=1"));
    }
    let joint = enumerate_trajectories(m, &m.uniform_policy(), ATOM_CAP)?;
    let joint = extend_with_encoder(&joint, m, 1, enc1, "u")?;
    let joint = extend_with_encoder(&joint, m, 2, enc2, "v")?;
    let lhs = joint.mutual_info(&["u1"], &["o2_1"])?;
    let rhs = joint.mutual_info(&["u1"], &["v1"])?;
    let slack = lhs - rhs;
    Ok(CrossViewBoundReport {
        i_latent1_obs2: lhs,
        i_latent1_latent2: rhs,
        slack,
        holds: slack >= -GAP_TOL,
    })
}

// ── instance generators ────────────────────────────────────────────────

/// Random instance whose channel-1 emissions are an invertible relabeling
/// of the state, whose distractor bits are drawn independently each step,
/// and which is explored with the uniform (state-independent) policy:
/// exactly the structure under which the stepwise factorization's
/// conditional independences hold.
pub fn random_markov_observable(
    rng: &mut ChaCha8Rng,
    n_states: usize,
    n_actions: usize,
    horizon: usize,
) -> TabularPomdp {
    let mut m = TabularPomdp::random(rng, n_states, n_actions, n_states, horizon);
    // Deterministic invertible channel-1 emissions.
    let mut sigma: Vec<usize> = (0..n_states).collect();
    sigma.shuffle(rng);
    let mut emit1 = vec![0.0; n_states * n_states];
    for s in 0..n_states {
        emit1[s * n_states + sigma[s]] = 1.0;
    }
    m.emit1 = emit1;
    // Memoryless distractor.
    let q = rng.gen_range(0.2..0.8);
    m.distractor_init = [q, 1.0 - q];
    m.distractor_trans = [[q, 1.0 - q], [q, 1.0 - q]];
    m
}

/// Acceptance-grade verification sweep. Every record is deterministic for
/// a given seed.
pub fn run_verification_suite(seed: u64) -> Result<Vec<CheckRecord>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::new();

    // Two-view split identity on 50 random instances with random
    // stochastic encoders (the identity must hold for any encoder).
    for i in 0..50 {
        let horizon = 1 + (i % 2);
        let m = TabularPomdp::random(&mut rng, 3, 2, 2, horizon);
        let enc = TableEncoder::random_stochastic(m.n_obs(), m.n_actions, 3, &mut rng)?;
        let rep = verify_multiview_split(&m, &enc, horizon)?;
        records.push(CheckRecord::new(
            format!("multiview_split_identity_{i:02}"),
            rep.lhs,
            rep.conditional_term + rep.crossview_term,
            rep.identity_gap,
            rep.identity_gap < GAP_TOL,
        ));
    }

    // Split special cases: identical views (deterministic shared emissions)
    // and an uninformative second view.
    {
        let mut m = TabularPomdp::random(&mut rng, 3, 2, 3, 1);
        let mut emit = vec![0.0; 9];
        for s in 0..3 {
            emit[s * 3 + s] = 1.0;
        }
        m.emit1 = emit.clone();
        m.emit2 = emit;
        let enc = TableEncoder::identity(m.n_obs(), m.n_actions)?;
        let rep = verify_multiview_split(&m, &enc, 1)?;
        records.push(CheckRecord::new(
            "multiview_split_identical_views_conditional_term",
            rep.conditional_term,
            0.0,
            rep.conditional_term.abs(),
            rep.conditional_term.abs() < GAP_TOL && rep.identity_gap < GAP_TOL,
        ));

        let mut m2 = TabularPomdp::random(&mut rng, 3, 2, 2, 1);
        // Channel 2 carries nothing: uniform emissions and a constant
        // distractor bit.
        m2.emit2 = vec![0.5; 6];
        m2.distractor_init = [1.0, 0.0];
        m2.distractor_trans = [[1.0, 0.0], [0.0, 1.0]];
        let enc2 = TableEncoder::random_stochastic(m2.n_obs(), m2.n_actions, 3, &mut rng)?;
        let rep2 = verify_multiview_split(&m2, &enc2, 1)?;
        records.push(CheckRecord::new(
            "multiview_split_independent_view2_crossview_term",
            rep2.crossview_term,
            0.0,
            rep2.crossview_term.abs(),
            rep2.crossview_term.abs() < GAP_TOL && rep2.identity_gap < GAP_TOL,
        ));
    }

    // Stepwise factorized bound on 20 instances with sufficient encoders.
    for i in 0..20 {
        let (n_states, horizon) = if i < 18 { (3, 2) } else { (2, 3) };
        let m = random_markov_observable(&mut rng, n_states, 2, horizon);
        let enc = TableEncoder::random_injection(m.n_obs(), m.n_actions, &mut rng)?;
        let rep = verify_stepwise_bound(&m, &enc)?;
        records.push(CheckRecord::new(
            format!("stepwise_lower_bound_{i:02}"),
            rep.sequence_mi,
            rep.stepwise_sum,
            rep.slack,
            rep.holds,
        ));
    }

    // Constant encoder: both sides zero.
    {
        let m = random_markov_observable(&mut rng, 3, 2, 2);
        let enc = TableEncoder::constant(m.n_obs(), m.n_actions)?;
        let rep = verify_stepwise_bound(&m, &enc)?;
        records.push(CheckRecord::new(
            "stepwise_lower_bound_constant_encoder",
            rep.sequence_mi,
            rep.stepwise_sum,
            rep.slack,
            rep.holds && rep.sequence_mi.abs() < GAP_TOL && rep.stepwise_sum.abs() < GAP_TOL,
        ));
    }

    // Counterexample search over insufficient (lossy stochastic) encoders:
    // informational only, the hypothesis of the bound does not cover them.
    for i in 0..5 {
        let m = TabularPomdp::random(&mut rng, 3, 2, 2, 2);
        let enc = TableEncoder::random_stochastic(m.n_obs(), m.n_actions, 2, &mut rng)?;
        let rep = verify_stepwise_bound(&m, &enc)?;
        records.push(CheckRecord::new(
            format!("stepwise_bound_search_insufficient_{i}_info"),
            rep.sequence_mi,
            rep.stepwise_sum,
            rep.slack,
            true,
        ));
    }

    // Sufficiency verdicts on the three constructed encoders.
    {
        let m = random_markov_observable(&mut rng, 3, 2, 2);
        let identity = TableEncoder::identity(m.n_obs(), m.n_actions)?;
        let rep = verify_sufficiency(&m, &identity)?;
        records.push(CheckRecord::new(
            "sufficiency_identity_encoder",
            rep.i_obs_astar,
            rep.i_latent_astar,
            rep.gap,
            rep.sufficient,
        ));

        let constant = TableEncoder::constant(m.n_obs(), m.n_actions)?;
        let rep = verify_sufficiency(&m, &constant)?;
        // Insufficient, with the gap equal to the whole I(o; a*).
        let expected_gap_ok = (rep.gap - rep.i_obs_astar).abs() < GAP_TOL;
        records.push(CheckRecord::new(
            "sufficiency_constant_encoder",
            rep.i_obs_astar,
            rep.i_latent_astar,
            rep.gap,
            !rep.sufficient && rep.i_obs_astar > 1e-4 && expected_gap_ok,
        ));

        let dropper = TableEncoder::drop_distractor(m.n_obs(), m.n_actions)?;
        let rep = verify_sufficiency(&m, &dropper)?;
        records.push(CheckRecord::new(
            "sufficiency_distractor_dropping_encoder",
            rep.i_obs_astar,
            rep.i_latent_astar,
            rep.gap,
            rep.sufficient,
        ));
    }

    // Cross-view bound at T=1 on random instances, plus the tight case
    // (injective second-view encoder).
    for i in 0..10 {
        let m = TabularPomdp::random(&mut rng, 3, 2, 2, 1);
        let enc1 = TableEncoder::random_stochastic(m.n_obs(), m.n_actions, 3, &mut rng)?;
        let enc2 = TableEncoder::random_stochastic(m.n_obs(), m.n_actions, 3, &mut rng)?;
        let rep = verify_crossview_bound(&m, &enc1, &enc2)?;
        records.push(CheckRecord::new(
            format!("crossview_bound_{i}"),
            rep.i_latent1_obs2,
            rep.i_latent1_latent2,
            rep.slack,
            rep.holds,
        ));
    }
    {
        let m = TabularPomdp::random(&mut rng, 3, 2, 2, 1);
        let enc1 = TableEncoder::random_stochastic(m.n_obs(), m.n_actions, 3, &mut rng)?;
        let enc2 = TableEncoder::random_injection(m.n_obs(), m.n_actions, &mut rng)?;
        let rep = verify_crossview_bound(&m, &enc1, &enc2)?;
        records.push(CheckRecord::new(
            "crossview_bound_tight_injective_view2",
            rep.i_latent1_obs2,
            rep.i_latent1_latent2,
            rep.slack,
            rep.holds && rep.slack.abs() < GAP_TOL,
        ));
    }

    // Chain-rule split: exact when the optimal actions are a function of
    // the observation (invertible emissions).
    {
        let m = random_markov_observable(&mut rng, 3, 2, 2);
        let enc = TableEncoder::random_injection(m.n_obs(), m.n_actions, &mut rng)?;
        let rep = verify_chain_rule(&m, &enc)?;
        records.push(CheckRecord::new(
            "chain_rule_split_observable_astar",
            rep.i_obs_latent,
            rep.i_latent_obs_given_astar + rep.i_latent_astar,
            rep.split_gap,
            rep.split_gap < GAP_TOL,
        ));

        let constant = TableEncoder::constant(m.n_obs(), m.n_actions)?;
        let rep = verify_chain_rule(&m, &constant)?;
        records.push(CheckRecord::new(
            "chain_rule_split_constant_encoder",
            rep.i_obs_latent,
            rep.i_latent_obs_given_astar + rep.i_latent_astar,
            rep.split_gap,
            rep.i_obs_latent.abs() < GAP_TOL && rep.split_gap < GAP_TOL,
        ));

        // Zero rewards make a* constant, hence independent of everything.
        let mut m3 = random_markov_observable(&mut rng, 3, 2, 2);
        m3.reward = vec![0.0; m3.reward.len()];
        let enc3 = TableEncoder::random_stochastic(m3.n_obs(), m3.n_actions, 3, &mut rng)?;
        let rep = verify_chain_rule(&m3, &enc3)?;
        records.push(CheckRecord::new(
            "chain_rule_split_independent_astar",
            rep.i_obs_latent,
            rep.i_latent_obs_given_astar,
            rep.split_gap,
            rep.split_gap < GAP_TOL && rep.i_latent_astar.abs() < GAP_TOL,
        ));
    }

    // Dual-route triple information on generic encoders: the two
    // evaluation orders must agree for any instance.
    for i in 0..5 {
        let m = TabularPomdp::random(&mut rng, 3, 2, 2, 2);
        let enc = TableEncoder::random_stochastic(m.n_obs(), m.n_actions, 3, &mut rng)?;
        let rep = verify_chain_rule(&m, &enc)?;
        records.push(CheckRecord::new(
            format!("triple_information_dual_route_{i}"),
            rep.i_obs_latent - rep.i_latent_obs_given_astar,
            rep.i_latent_astar,
            rep.triple_route_gap,
            rep.triple_route_gap < GAP_TOL,
        ));
    }

    // Non-negativity floor across everything computed above. Triple
    // informations are excluded: interaction information may be negative.
    let min_mi = records
        .iter()
        .filter(|r| !r.name.starts_with("triple_information"))
        .flat_map(|r| [r.lhs, r.rhs])
        .fold(f64::INFINITY, f64::min);
    records.push(CheckRecord::new(
        "mi_nonnegativity_floor",
        min_mi,
        0.0,
        (-min_mi).max(0.0),
        min_mi >= -1e-12,
    ));

    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_encoder_is_sufficient() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = random_markov_observable(&mut rng, 3, 2, 2);
        let enc = TableEncoder::identity(m.n_obs(), m.n_actions).unwrap();
        let rep = verify_sufficiency(&m, &enc).unwrap();
        assert!(rep.sufficient, "gap = {}", rep.gap);
    }

    #[test]
    fn constant_encoder_is_insufficient_with_full_gap() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = random_markov_observable(&mut rng, 3, 2, 2);
        let enc = TableEncoder::constant(m.n_obs(), m.n_actions).unwrap();
        let rep = verify_sufficiency(&m, &enc).unwrap();
        assert!(!rep.sufficient);
        assert!(rep.i_obs_astar > 1e-4);
        assert!((rep.gap - rep.i_obs_astar).abs() < GAP_TOL);
        assert!(rep.i_latent_astar.abs() < GAP_TOL);
    }

    #[test]
    fn dropping_the_distractor_bit_preserves_sufficiency() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        // Correlated distractor chain; the bit still carries no task info.
        let mut m = random_markov_observable(&mut rng, 3, 2, 2);
        m.distractor_trans = [[0.9, 0.1], [0.2, 0.8]];
        let enc = TableEncoder::drop_distractor(m.n_obs(), m.n_actions).unwrap();
        let rep = verify_sufficiency(&m, &enc).unwrap();
        assert!(rep.sufficient, "gap = {}", rep.gap);
    }

    #[test]
    fn stepwise_bound_holds_on_markov_observable_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..5 {
            let m = random_markov_observable(&mut rng, 3, 2, 2);
            let enc = TableEncoder::random_injection(m.n_obs(), m.n_actions, &mut rng).unwrap();
            let rep = verify_stepwise_bound(&m, &enc).unwrap();
            assert!(rep.holds, "slack = {}", rep.slack);
        }
    }

    #[test]
    fn multiview_split_identity_holds_for_any_encoder() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for horizon in [1usize, 2] {
            let m = TabularPomdp::random(&mut rng, 3, 2, 2, horizon);
            let enc =
                TableEncoder::random_stochastic(m.n_obs(), m.n_actions, 3, &mut rng).unwrap();
            let rep = verify_multiview_split(&m, &enc, horizon).unwrap();
            assert!(rep.identity_gap < GAP_TOL, "gap = {}", rep.identity_gap);
        }
    }

    #[test]
    fn crossview_bound_and_tightness() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let m = TabularPomdp::random(&mut rng, 3, 2, 2, 1);
        let enc1 = TableEncoder::random_stochastic(m.n_obs(), m.n_actions, 3, &mut rng).unwrap();
        let enc2 = TableEncoder::random_injection(m.n_obs(), m.n_actions, &mut rng).unwrap();
        let rep = verify_crossview_bound(&m, &enc1, &enc2).unwrap();
        assert!(rep.holds);
        assert!(rep.slack.abs() < GAP_TOL, "tight case slack {}", rep.slack);
    }

    #[test]
    fn full_suite_passes_on_default_seed() {
        let records = run_verification_suite(0).unwrap();
        let failures: Vec<&CheckRecord> = records.iter().filter(|r| !r.pass).collect();
        assert!(
            failures.is_empty(),
            "failing checks: {:?}",
            failures.iter().map(|r| r.render()).collect::<Vec<_>>()
        );
        assert!(records.len() > 90);
    }
}
