//! Contrastive mutual-information lower bound over paired representations.
//!
//! Positives are the row-aligned pairs of the two pooled representation
//! matrices; every other pair in the pool is a negative. The denominator is
//! a log-mean-exp, so the bound never exceeds log M.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ndgrad::{Node, ParamRegistry, Tensor};

/// Bilinear similarity s1' W s2 with a fixed unit temperature.
pub struct BilinearCritic {
    pub w: Node,
    pub temperature: f64,
    reg: ParamRegistry,
}

impl BilinearCritic {
    pub fn new(dim: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut reg = ParamRegistry::new();
        let w = reg.dense_init("critic.w", dim, dim, &mut rng)?;
        Ok(BilinearCritic {
            w,
            temperature: 1.0,
            reg,
        })
    }

    /// Critic with a caller-supplied weight matrix (tests, probes).
    pub fn from_weight(w: Tensor) -> Result<Self> {
        if w.ndim() != 2 || w.shape()[0] != w.shape()[1] {
            return Err(Error::invalid_shape("critic weight must be square"));
        }
        let mut reg = ParamRegistry::new();
        let w = reg.param("critic.w", w)?;
        Ok(BilinearCritic {
            w,
            temperature: 1.0,
            reg,
        })
    }

    pub fn registry(&self) -> &ParamRegistry {
        &self.reg
    }
}

/// Pairwise scores: scores[i][j] = s1[i]' W s2[j], shape (M, M).
pub fn score_matrix(s1: &Node, s2: &Node, critic: &BilinearCritic) -> Result<Node> {
    let (a, b) = (s1.shape(), s2.shape());
    if a.len() != 2 || b.len() != 2 || a != b {
        return Err(Error::invalid_shape(format!(
            "score_matrix wants matching (M, D) inputs, got {a:?} vs {b:?}"
        )));
    }
    if a[1] != critic.w.shape()[0] {
        return Err(Error::invalid_shape(format!(
            "representation dim {} vs critic dim {}",
            a[1],
            critic.w.shape()[0]
        )));
    }
    s1.matmul(&critic.w)?.matmul(&s2.transpose()?)
}

/// InfoNCE lower bound from a square score matrix:
/// (1/M) sum_i [ scores[i][i] - log( (1/M) sum_j exp(scores[i][j]) ) ].
///
/// Stabilized by subtracting the detached row max inside the exp; the value
/// is always <= log M and the uniform-score case returns exactly 0.
pub fn infonce(scores: &Node) -> Result<Node> {
    let shape = scores.shape();
    if shape.len() != 2 || shape[0] != shape[1] {
        return Err(Error::invalid_shape(format!(
            "infonce wants a square score matrix, got {shape:?}"
        )));
    }
    let m = shape[0];
    if m < 2 {
        return Err(Error::contract("infonce needs at least 2 pairs"));
    }
    if !scores.value().all_finite() {
        return Err(Error::domain("non-finite scores"));
    }

    // Detached per-row max for a bit-stable log-sum-exp.
    let mut row_max = Vec::with_capacity(m);
    {
        let v = scores.value();
        for i in 0..m {
            let mut best = f64::NEG_INFINITY;
            for j in 0..m {
                best = best.max(v.at2(i, j));
            }
            row_max.push(best);
        }
    }
    let max_col = Node::constant(Tensor::new(vec![m, 1], row_max)?);
    let shifted = scores.sub(&max_col.broadcast_to(&[m, m])?)?;
    // log((1/M) sum_j exp(s_ij)) = max_i + log(sum exp(shifted)) - log M.
    // The row max is folded into the diagonal term instead so that adding a
    // constant to a row cancels exactly, not just to rounding.
    let shifted_lme = shifted.exp()?.sum_axis(1, true)?.log()?.add_scalar(-(m as f64).ln())?;

    let diag = scores
        .mul(&Node::constant(Tensor::eye(m)))?
        .sum_axis(1, true)?;
    diag.sub(&max_col)?.sub(&shifted_lme)?.mean_all()
}

/// The bound plus log M, i.e. the direct mutual-information estimate.
pub fn infonce_plus_log_m(bound: f64, m: usize) -> f64 {
    bound + (m as f64).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ndgrad::{backward, finite_diff_check};
    use rand::Rng;

    #[test]
    fn score_matrix_hand_cases() {
        // Identity critic, orthonormal rows: identity score matrix.
        let critic = BilinearCritic::from_weight(Tensor::eye(2)).unwrap();
        let s = Node::constant(Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap());
        let sc = score_matrix(&s, &s, &critic).unwrap();
        assert_eq!(sc.value().data(), &[1.0, 0.0, 0.0, 1.0]);

        // Zero critic: all-zero scores.
        let zero = BilinearCritic::from_weight(Tensor::zeros(&[2, 2])).unwrap();
        let sc = score_matrix(&s, &s, &zero).unwrap();
        assert!(sc.value().data().iter().all(|&v| v == 0.0));

        // M=2 direct products.
        let s1 = Node::constant(Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap());
        let s2 = Node::constant(Tensor::from_rows(&[vec![2.0, 0.0], vec![0.0, 3.0]]).unwrap());
        let sc = score_matrix(&s1, &s2, &critic).unwrap();
        assert_eq!(sc.value().data(), &[2.0, 0.0, 0.0, 3.0]);
    }

    #[test]
    fn uniform_scores_give_exactly_zero() {
        for m in [2usize, 3, 4, 7] {
            let scores = Node::constant(Tensor::full(&[m, m], 0.37));
            let v = infonce(&scores).unwrap().scalar_value().unwrap();
            assert_eq!(v, 0.0, "m = {m}");
        }
    }

    #[test]
    fn saturated_scores_reach_log_m() {
        let m = 4;
        let mut t = Tensor::full(&[m, m], -40.0);
        for i in 0..m {
            t.data_mut()[i * m + i] = 40.0;
        }
        let v = infonce(&Node::constant(t)).unwrap().scalar_value().unwrap();
        assert!((v - (m as f64).ln()).abs() < 1e-10, "{v}");
    }

    #[test]
    fn two_pair_hand_value() {
        // s_ii = 1, s_ij = 0: bound = 1 - log((e + 1) / 2).
        let t = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let v = infonce(&Node::constant(t)).unwrap().scalar_value().unwrap();
        let expected = 1.0 - ((1f64.exp() + 1.0) / 2.0).ln();
        assert!((v - expected).abs() < 1e-12);
        assert!((v - 0.379885).abs() < 1e-6);
    }

    #[test]
    fn bound_never_exceeds_log_m_on_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for trial in 0..10_000 {
            let m = rng.gen_range(2..8);
            let data: Vec<f64> = (0..m * m).map(|_| rng.gen_range(-30.0..30.0)).collect();
            let v = infonce(&Node::constant(Tensor::new(vec![m, m], data).unwrap()))
                .unwrap()
                .scalar_value()
                .unwrap();
            assert!(v <= (m as f64).ln(), "trial {trial}: {v} > ln {m}");
        }
    }

    #[test]
    fn single_pair_rejected() {
        let t = Tensor::full(&[1, 1], 3.0);
        assert!(infonce(&Node::constant(t)).is_err());
    }

    #[test]
    fn raising_a_diagonal_entry_never_decreases_the_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let m = 4;
            let data: Vec<f64> = (0..m * m).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let base = Tensor::new(vec![m, m], data).unwrap();
            let i = rng.gen_range(0..m);
            let b0 = infonce(&Node::constant(base.clone()))
                .unwrap()
                .scalar_value()
                .unwrap();
            let mut bumped = base.clone();
            bumped.data_mut()[i * m + i] += 1e-4;
            let b1 = infonce(&Node::constant(bumped))
                .unwrap()
                .scalar_value()
                .unwrap();
            assert!(b1 >= b0 - 1e-12, "{b1} < {b0}");
        }
    }

    #[test]
    fn row_constant_shift_is_exactly_invariant() {
        // With inputs on a 2^-20 grid, the additions below are exact in f64,
        // so the invariance is bit-exact rather than approximate.
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let grid = |r: &mut ChaCha8Rng| {
            let k: i64 = r.gen_range(-(1 << 20)..(1 << 20));
            k as f64 / (1u64 << 20) as f64
        };
        for _ in 0..200 {
            let m = 3;
            let data: Vec<f64> = (0..m * m).map(|_| grid(&mut rng)).collect();
            let base = Tensor::new(vec![m, m], data).unwrap();
            let row = rng.gen_range(0..m);
            let c = grid(&mut rng);
            let mut shifted = base.clone();
            for j in 0..m {
                shifted.data_mut()[row * m + j] += c;
            }
            let v0 = infonce(&Node::constant(base)).unwrap().scalar_value().unwrap();
            let v1 = infonce(&Node::constant(shifted))
                .unwrap()
                .scalar_value()
                .unwrap();
            assert_eq!(v0.to_bits(), v1.to_bits());
        }
    }

    #[test]
    fn gradient_flows_to_scores_and_critic() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let x0 =
            Tensor::new(vec![3, 3], (0..9).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap();
        let err = finite_diff_check(|s| infonce(s), &x0, 1e-5).unwrap();
        assert!(err < 1e-4, "rel err {err}");

        let critic = BilinearCritic::new(2, 3).unwrap();
        let s1 = Node::constant(Tensor::from_rows(&[vec![1.0, 0.2], vec![-0.4, 0.9]]).unwrap());
        let s2 = Node::constant(Tensor::from_rows(&[vec![0.8, 0.1], vec![-0.2, 1.1]]).unwrap());
        critic.registry().zero_grads();
        let bound = infonce(&score_matrix(&s1, &s2, &critic).unwrap()).unwrap();
        backward(&bound).unwrap();
        let g = critic.w.grad().unwrap();
        assert!(g.data().iter().any(|&v| v.abs() > 1e-10));
    }
}
