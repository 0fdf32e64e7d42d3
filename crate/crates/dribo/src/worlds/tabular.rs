use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::oracle::JointTable;

const ROW_TOL: f64 = 1e-12;

/// Fully enumerable finite-horizon process with two observation channels.
///
/// Each channel emits a symbol from its emission table; an autonomous
/// distractor bit (independent of states and actions) is appended to both
/// channels, so the per-channel observation alphabet is `2 * n_emit` with
/// `o = 2 * e + d`.
#[derive(Debug, Clone)]
pub struct TabularPomdp {
    pub n_states: usize,
    pub n_actions: usize,
    pub n_emit: usize,
    pub horizon: usize,
    /// Initial state distribution, length n_states.
    pub init: Vec<f64>,
    /// transition[(s * n_actions + a) * n_states + s'].
    pub transition: Vec<f64>,
    /// reward[s * n_actions + a].
    pub reward: Vec<f64>,
    /// emit1[s * n_emit + e], channel-1 emissions.
    pub emit1: Vec<f64>,
    /// emit2[s * n_emit + e], channel-2 emissions.
    pub emit2: Vec<f64>,
    pub distractor_init: [f64; 2],
    pub distractor_trans: [[f64; 2]; 2],
}

fn check_rows(table: &[f64], rows: usize, cols: usize, what: &str) -> Result<()> {
    if table.len() != rows * cols {
        return Err(Error::contract(format!(
            "{what}: expected {rows}x{cols} entries"
        )));
    }
    for r in 0..rows {
        let row = &table[r * cols..(r + 1) * cols];
        if row.iter().any(|&p| !(0.0..=1.0 + ROW_TOL).contains(&p)) {
            return Err(Error::domain(format!("{what}: row {r} out of [0,1]")));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > ROW_TOL {
            return Err(Error::domain(format!(
                "{what}: row {r} sums to {sum}, not 1"
            )));
        }
    }
    Ok(())
}

impl TabularPomdp {
    pub fn n_obs(&self) -> usize {
        2 * self.n_emit
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_states == 0 || self.n_states > 6 {
            return Err(Error::contract("need 1..=6 states"));
        }
        if self.n_actions == 0 || self.n_actions > 3 {
            return Err(Error::contract("need 1..=3 actions"));
        }
        if self.n_emit == 0 || self.n_obs() > 8 {
            return Err(Error::contract("need 1..=4 emission symbols"));
        }
        if self.horizon == 0 || self.horizon > 4 {
            return Err(Error::contract("need horizon 1..=4"));
        }
        check_rows(&self.init, 1, self.n_states, "init")?;
        check_rows(
            &self.transition,
            self.n_states * self.n_actions,
            self.n_states,
            "transition",
        )?;
        check_rows(&self.emit1, self.n_states, self.n_emit, "emit1")?;
        check_rows(&self.emit2, self.n_states, self.n_emit, "emit2")?;
        check_rows(&self.distractor_init, 1, 2, "distractor init")?;
        check_rows(&self.distractor_trans[0], 1, 2, "distractor row 0")?;
        check_rows(&self.distractor_trans[1], 1, 2, "distractor row 1")?;
        if self.reward.len() != self.n_states * self.n_actions {
            return Err(Error::contract("reward table size"));
        }
        Ok(())
    }

    pub fn transition_prob(&self, s: usize, a: usize, s_next: usize) -> f64 {
        self.transition[(s * self.n_actions + a) * self.n_states + s_next]
    }

    pub fn reward_at(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.n_actions + a]
    }

    /// Random instance with Dirichlet(1) rows.
    pub fn random(
        rng: &mut ChaCha8Rng,
        n_states: usize,
        n_actions: usize,
        n_emit: usize,
        horizon: usize,
    ) -> Self {
        let dirichlet = |rng: &mut ChaCha8Rng, k: usize| -> Vec<f64> {
            let raw: Vec<f64> = (0..k).map(|_| -rng.gen_range(1e-12..1.0f64).ln()).collect();
            let total: f64 = raw.iter().sum();
            raw.iter().map(|v| v / total).collect()
        };
        let mut transition = Vec::new();
        for _ in 0..n_states * n_actions {
            transition.extend(dirichlet(rng, n_states));
        }
        let mut emit1 = Vec::new();
        let mut emit2 = Vec::new();
        for _ in 0..n_states {
            emit1.extend(dirichlet(rng, n_emit));
            emit2.extend(dirichlet(rng, n_emit));
        }
        let reward: Vec<f64> = (0..n_states * n_actions)
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let d0 = rng.gen_range(0.2..0.8);
        let d_stay0 = rng.gen_range(0.2..0.8);
        let d_stay1 = rng.gen_range(0.2..0.8);
        TabularPomdp {
            n_states,
            n_actions,
            n_emit,
            horizon,
            init: dirichlet(rng, n_states),
            transition,
            reward,
            emit1,
            emit2,
            distractor_init: [d0, 1.0 - d0],
            distractor_trans: [[d_stay0, 1.0 - d_stay0], [1.0 - d_stay1, d_stay1]],
        }
    }

    /// Uniform behavior policy table, [s][a].
    pub fn uniform_policy(&self) -> Vec<f64> {
        vec![1.0 / self.n_actions as f64; self.n_states * self.n_actions]
    }
}

/// Exact joint over (s_t, d_t, o1_t, o2_t, a_t) for t = 1..=T under the
/// given behavior policy. Variable names: `s1..sT`, `d1..dT`, `o1_t`,
/// `o2_t`, `a1..aT`. Errors if the atom count would exceed `cap`.
pub fn enumerate_trajectories(
    m: &TabularPomdp,
    policy: &[f64],
    cap: usize,
) -> Result<JointTable> {
    m.validate()?;
    if policy.len() != m.n_states * m.n_actions {
        return Err(Error::contract("policy table size"));
    }
    check_rows(policy, m.n_states, m.n_actions, "policy")?;

    let mut defs: Vec<(String, usize)> = Vec::new();
    for t in 1..=m.horizon {
        defs.push((format!("s{t}"), m.n_states));
        defs.push((format!("d{t}"), 2));
        defs.push((format!("o1_{t}"), m.n_obs()));
        defs.push((format!("o2_{t}"), m.n_obs()));
        defs.push((format!("a{t}"), m.n_actions));
    }
    let refs: Vec<(&str, usize)> = defs.iter().map(|(n, s)| (n.as_str(), *s)).collect();
    let mut table = JointTable::new(&refs)?;

    // Frontier of partial trajectories: (code so far, prob, s_t, d_t, a_t).
    let mut frontier: Vec<(u64, f64, usize, usize, usize)> = vec![(0, 1.0, 0, 0, 0)];
    for t in 1..=m.horizon {
        let base = (t - 1) * 5;
        let sh_s = table.shift(base);
        let sh_d = table.shift(base + 1);
        let sh_o1 = table.shift(base + 2);
        let sh_o2 = table.shift(base + 3);
        let sh_a = table.shift(base + 4);
        let mut next = Vec::new();
        for &(code, p, s_prev, d_prev, a_prev) in &frontier {
            for s in 0..m.n_states {
                let ps = if t == 1 {
                    m.init[s]
                } else {
                    m.transition_prob(s_prev, a_prev, s)
                };
                if ps == 0.0 {
                    continue;
                }
                for d in 0..2 {
                    let pd = if t == 1 {
                        m.distractor_init[d]
                    } else {
                        m.distractor_trans[d_prev][d]
                    };
                    if pd == 0.0 {
                        continue;
                    }
                    for e1 in 0..m.n_emit {
                        let pe1 = m.emit1[s * m.n_emit + e1];
                        if pe1 == 0.0 {
                            continue;
                        }
                        for e2 in 0..m.n_emit {
                            let pe2 = m.emit2[s * m.n_emit + e2];
                            if pe2 == 0.0 {
                                continue;
                            }
                            for a in 0..m.n_actions {
                                let pa = policy[s * m.n_actions + a];
                                if pa == 0.0 {
                                    continue;
                                }
                                let c = code
                                    | (s as u64) << sh_s
                                    | (d as u64) << sh_d
                                    | ((2 * e1 + d) as u64) << sh_o1
                                    | ((2 * e2 + d) as u64) << sh_o2
                                    | (a as u64) << sh_a;
                                next.push((c, p * ps * pd * pe1 * pe2 * pa, s, d, a));
                            }
                        }
                    }
                }
            }
        }
        if next.len() > cap {
            return Err(Error::Resource(format!(
                "trajectory enumeration exceeds {cap} atoms at t={t}"
            )));
        }
        frontier = next;
    }
    for (code, p, ..) in frontier {
        table.push_mass(code, p);
    }
    table.normalize_atoms();
    table.check_normalized(1e-9)?;
    Ok(table)
}

/// Finite-horizon optimal action per (timestep, state), ties broken toward
/// the lowest action index.
pub fn optimal_actions(m: &TabularPomdp) -> Result<Vec<Vec<usize>>> {
    m.validate()?;
    let t_max = m.horizon;
    let mut value = vec![0.0f64; m.n_states];
    let mut actions = vec![vec![0usize; m.n_states]; t_max];
    for t in (1..=t_max).rev() {
        let mut new_value = vec![f64::NEG_INFINITY; m.n_states];
        for s in 0..m.n_states {
            let mut best_a = 0;
            let mut best_q = f64::NEG_INFINITY;
            for a in 0..m.n_actions {
                let mut q = m.reward_at(s, a);
                if t < t_max {
                    for s_next in 0..m.n_states {
                        q += m.transition_prob(s, a, s_next) * value[s_next];
                    }
                }
                if q > best_q {
                    best_q = q;
                    best_a = a;
                }
            }
            new_value[s] = best_q;
            actions[t - 1][s] = best_a;
        }
        value = new_value;
    }
    Ok(actions)
}

/// Append `astar1..astarT` variables (deterministic functions of the state
/// path) to an enumerated joint.
pub fn extend_with_optimal_actions(
    joint: &JointTable,
    m: &TabularPomdp,
) -> Result<JointTable> {
    let astar = optimal_actions(m)?;
    let names: Vec<String> = (1..=m.horizon).map(|t| format!("astar{t}")).collect();
    let defs: Vec<(&str, usize)> = names.iter().map(|n| (n.as_str(), m.n_actions)).collect();
    let state_vars: Vec<usize> = (1..=m.horizon)
        .map(|t| joint.var_index(&format!("s{t}")))
        .collect::<Result<Vec<_>>>()?;
    joint.extend_deterministic(&defs, |tab, code| {
        state_vars
            .iter()
            .enumerate()
            .map(|(t, &vi)| astar[t][tab.value_of(code, vi)])
            .collect()
    })
}

/// State marginal at each timestep from direct matrix-power style folding
/// (independent of the enumeration path).
pub fn state_marginals_direct(m: &TabularPomdp, policy: &[f64]) -> Result<Vec<Vec<f64>>> {
    m.validate()?;
    let mut out = Vec::with_capacity(m.horizon);
    let mut cur = m.init.clone();
    out.push(cur.clone());
    for _ in 1..m.horizon {
        let mut next = vec![0.0; m.n_states];
        for s in 0..m.n_states {
            for a in 0..m.n_actions {
                let w = cur[s] * policy[s * m.n_actions + a];
                if w == 0.0 {
                    continue;
                }
                for s2 in 0..m.n_states {
                    next[s2] += w * m.transition_prob(s, a, s2);
                }
            }
        }
        cur = next;
        out.push(cur.clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn deterministic_chain() -> TabularPomdp {
        // Two states flipping deterministically, one action, one emission.
        TabularPomdp {
            n_states: 2,
            n_actions: 1,
            n_emit: 1,
            horizon: 2,
            init: vec![1.0, 0.0],
            transition: vec![0.0, 1.0, 1.0, 0.0],
            reward: vec![0.0, 1.0],
            emit1: vec![1.0, 1.0],
            emit2: vec![1.0, 1.0],
            distractor_init: [1.0, 0.0],
            distractor_trans: [[1.0, 0.0], [0.0, 1.0]],
        }
    }

    #[test]
    fn probabilities_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let m = TabularPomdp::random(&mut rng, 3, 2, 2, 2);
            let joint = enumerate_trajectories(&m, &m.uniform_policy(), 1_000_000).unwrap();
            assert!((joint.total_mass() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn deterministic_chain_gives_single_atom() {
        let m = deterministic_chain();
        let joint = enumerate_trajectories(&m, &m.uniform_policy(), 1_000_000).unwrap();
        assert_eq!(joint.n_atoms(), 1);
        assert!((joint.atoms()[0].1 - 1.0).abs() < 1e-12);
        // The state path is s1=0, s2=1.
        let s1 = joint.marginal("s1").unwrap();
        let s2 = joint.marginal("s2").unwrap();
        assert_eq!(s1, vec![1.0, 0.0]);
        assert_eq!(s2, vec![0.0, 1.0]);
    }

    #[test]
    fn fair_coin_chain_has_four_equal_paths() {
        let m = TabularPomdp {
            n_states: 2,
            n_actions: 1,
            n_emit: 1,
            horizon: 2,
            init: vec![0.5, 0.5],
            transition: vec![0.5, 0.5, 0.5, 0.5],
            reward: vec![0.0, 0.0],
            emit1: vec![1.0, 1.0],
            emit2: vec![1.0, 1.0],
            distractor_init: [1.0, 0.0],
            distractor_trans: [[1.0, 0.0], [0.0, 1.0]],
        };
        let joint = enumerate_trajectories(&m, &m.uniform_policy(), 1_000_000).unwrap();
        assert_eq!(joint.n_atoms(), 4);
        for (_, p) in joint.atoms() {
            assert!((p - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn enumeration_marginals_match_direct_folding() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..5 {
            let m = TabularPomdp::random(&mut rng, 4, 2, 2, 3);
            let policy = m.uniform_policy();
            let joint = enumerate_trajectories(&m, &policy, 1_000_000).unwrap();
            let direct = state_marginals_direct(&m, &policy).unwrap();
            for t in 1..=m.horizon {
                let enumerated = joint.marginal(&format!("s{t}")).unwrap();
                for s in 0..m.n_states {
                    assert!(
                        (enumerated[s] - direct[t - 1][s]).abs() < 1e-9,
                        "t={t} s={s}: {} vs {}",
                        enumerated[s],
                        direct[t - 1][s]
                    );
                }
            }
        }
    }

    #[test]
    fn observation_carries_the_distractor_bit() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = TabularPomdp::random(&mut rng, 2, 2, 2, 2);
        let joint = enumerate_trajectories(&m, &m.uniform_policy(), 1_000_000).unwrap();
        for (code, _) in joint.atoms() {
            for t in 1..=2 {
                let d = joint.value_of(*code, joint.var_index(&format!("d{t}")).unwrap());
                let o1 = joint.value_of(*code, joint.var_index(&format!("o1_{t}")).unwrap());
                let o2 = joint.value_of(*code, joint.var_index(&format!("o2_{t}")).unwrap());
                assert_eq!(o1 % 2, d);
                assert_eq!(o2 % 2, d);
            }
        }
    }

    #[test]
    fn cap_exceeded_is_a_resource_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = TabularPomdp::random(&mut rng, 4, 2, 2, 3);
        assert!(matches!(
            enumerate_trajectories(&m, &m.uniform_policy(), 100),
            Err(Error::Resource(_))
        ));
    }

    #[test]
    fn optimal_actions_hand_cases() {
        // Single action everywhere.
        let m = deterministic_chain();
        let a = optimal_actions(&m).unwrap();
        assert!(a.iter().all(|row| row.iter().all(|&x| x == 0)));

        // Zero rewards: tie-break picks action 0.
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut m2 = TabularPomdp::random(&mut rng, 3, 3, 2, 2);
        m2.reward = vec![0.0; 9];
        let a2 = optimal_actions(&m2).unwrap();
        assert!(a2.iter().all(|row| row.iter().all(|&x| x == 0)));

        // Two-state bandit: argmax of the reward row at the final step.
        let m3 = TabularPomdp {
            n_states: 2,
            n_actions: 2,
            n_emit: 1,
            horizon: 1,
            init: vec![0.5, 0.5],
            transition: vec![1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0],
            reward: vec![0.2, 0.9, 0.7, 0.1],
            emit1: vec![1.0, 1.0],
            emit2: vec![1.0, 1.0],
            distractor_init: [0.5, 0.5],
            distractor_trans: [[0.5, 0.5], [0.5, 0.5]],
        };
        let a3 = optimal_actions(&m3).unwrap();
        assert_eq!(a3[0], vec![1, 0]);
    }

    #[test]
    fn invalid_tables_rejected() {
        let mut m = deterministic_chain();
        m.init = vec![0.9, 0.2];
        assert!(m.validate().is_err());
    }
}
