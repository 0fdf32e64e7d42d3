//! Diagonal Gaussians over graph nodes: reparameterized sampling,
//! log-density, closed-form KL, and the symmetrized KL used by the
//! bottleneck loss. Shapes are `(dim,)` or `(batch, dim)`; per-dimension
//! terms are summed over the last axis, so results are scalar per batch row.

use crate::error::{Error, Result};
use crate::ndgrad::{Node, Tensor};

pub const DEFAULT_STDDEV_FLOOR: f64 = 1e-4;

const LN_2PI: f64 = 1.8378770664093453; // ln(2*pi)

#[derive(Clone)]
pub struct DiagGaussian {
    pub mean: Node,
    pub stddev: Node,
}

impl DiagGaussian {
    /// Wrap an existing mean/stddev pair. The stddev must be strictly
    /// positive everywhere.
    pub fn new(mean: Node, stddev: Node) -> Result<Self> {
        if mean.shape() != stddev.shape() {
            return Err(Error::invalid_shape(format!(
                "mean {:?} vs stddev {:?}",
                mean.shape(),
                stddev.shape()
            )));
        }
        if stddev.value().data().iter().any(|&v| v <= 0.0) {
            return Err(Error::domain("stddev must be strictly positive"));
        }
        Ok(DiagGaussian { mean, stddev })
    }

    /// Parameterize the stddev as softplus(raw) + floor.
    pub fn from_raw(mean: Node, raw_stddev: Node, floor: f64) -> Result<Self> {
        let stddev = raw_stddev.softplus()?.add_scalar(floor)?;
        DiagGaussian::new(mean, stddev)
    }

    /// Same parameters with gradients blocked.
    pub fn detached(&self) -> Self {
        DiagGaussian {
            mean: self.mean.stop_gradient(),
            stddev: self.stddev.stop_gradient(),
        }
    }

    pub fn shape(&self) -> Vec<usize> {
        self.mean.shape()
    }

    fn check_same_shape(&self, other: &DiagGaussian) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::invalid_shape(format!(
                "distribution shapes {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(())
    }
}

fn reduce_last_axis(x: &Node) -> Result<Node> {
    let ndim = x.shape().len();
    if ndim == 0 {
        return Ok(x.clone());
    }
    x.sum_axis(ndim - 1, false)
}

/// Closed-form Gaussian KL divergence, summed over the last axis:
/// sum_d [ log(sq/sp) + (sp^2 + (mp - mq)^2) / (2 sq^2) - 1/2 ].
pub fn kl(p: &DiagGaussian, q: &DiagGaussian) -> Result<Node> {
    p.check_same_shape(q)?;
    let log_ratio = q.stddev.log()?.sub(&p.stddev.log()?)?;
    let var_p = p.stddev.square()?;
    let diff_sq = p.mean.sub(&q.mean)?.square()?;
    let quad = var_p
        .add(&diff_sq)?
        .div(&q.stddev.square()?.mul_scalar(2.0)?)?;
    let per_dim = log_ratio.add(&quad)?.add_scalar(-0.5)?;
    reduce_last_axis(&per_dim)
}

/// Symmetrized KL: the average of the two directed divergences.
pub fn skl(p: &DiagGaussian, q: &DiagGaussian) -> Result<Node> {
    kl(p, q)?.add(&kl(q, p)?)?.mul_scalar(0.5)
}

/// Reparameterized sample mean + stddev * noise; gradients flow into both
/// parameters. The noise tensor never carries gradient.
pub fn rsample(d: &DiagGaussian, noise: &Tensor) -> Result<Node> {
    if noise.shape() != d.shape().as_slice() {
        return Err(Error::invalid_shape(format!(
            "noise {:?} vs distribution {:?}",
            noise.shape(),
            d.shape()
        )));
    }
    d.mean.add(&d.stddev.mul(&Node::constant(noise.clone()))?)
}

/// Log-density at `x`, summed over the last axis. `x` may be a graph node so
/// that densities of reparameterized samples differentiate through the
/// sample path as well.
pub fn log_prob(d: &DiagGaussian, x: &Node) -> Result<Node> {
    if x.shape() != d.shape() {
        return Err(Error::invalid_shape(format!(
            "x {:?} vs distribution {:?}",
            x.shape(),
            d.shape()
        )));
    }
    let z = x.sub(&d.mean)?.div(&d.stddev)?;
    let per_dim = z
        .square()?
        .mul_scalar(-0.5)?
        .sub(&d.stddev.log()?)?
        .add_scalar(-0.5 * LN_2PI)?;
    reduce_last_axis(&per_dim)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ndgrad::{backward, finite_diff_check, Node, Tensor};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gauss(mean: &[f64], stddev: &[f64]) -> DiagGaussian {
        DiagGaussian::new(
            Node::parameter(Tensor::new(vec![mean.len()], mean.to_vec()).unwrap()),
            Node::parameter(Tensor::new(vec![stddev.len()], stddev.to_vec()).unwrap()),
        )
        .unwrap()
    }

    #[test]
    fn kl_of_identical_is_zero_exactly() {
        let p = gauss(&[0.3, -1.2], &[0.7, 2.0]);
        let q = gauss(&[0.3, -1.2], &[0.7, 2.0]);
        assert_eq!(kl(&p, &q).unwrap().scalar_value().unwrap(), 0.0);
    }

    #[test]
    fn kl_closed_form_hand_values() {
        // KL(N(1,1) || N(0,1)) = 0.5
        let p = gauss(&[1.0], &[1.0]);
        let q = gauss(&[0.0], &[1.0]);
        let v = kl(&p, &q).unwrap().scalar_value().unwrap();
        assert!((v - 0.5).abs() < 1e-12, "{v}");

        // KL(N(0,2) || N(0,1)) = ln(1/2) + 4/2 - 1/2 = 0.8068528...
        let p = gauss(&[0.0], &[2.0]);
        let q = gauss(&[0.0], &[1.0]);
        let v = kl(&p, &q).unwrap().scalar_value().unwrap();
        let expected = (0.5f64).ln() + 2.0 - 0.5;
        assert!((v - expected).abs() < 1e-12, "{v} vs {expected}");
        assert!((v - 0.806852819440055).abs() < 1e-12);
    }

    #[test]
    fn skl_matches_hand_value_and_symmetry() {
        let p = gauss(&[1.0], &[1.0]);
        let q = gauss(&[0.0], &[1.0]);
        // Equal stddev: both directions are 0.5, so the average is too.
        let v = skl(&p, &q).unwrap().scalar_value().unwrap();
        assert!((v - 0.5).abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let a = gauss(
                &[rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)],
                &[rng.gen_range(0.1..2.0), rng.gen_range(0.1..2.0)],
            );
            let b = gauss(
                &[rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)],
                &[rng.gen_range(0.1..2.0), rng.gen_range(0.1..2.0)],
            );
            let ab = skl(&a, &b).unwrap().scalar_value().unwrap();
            let ba = skl(&b, &a).unwrap().scalar_value().unwrap();
            assert_eq!(ab, ba, "skl must be exactly symmetric");
            assert!(ab >= 0.0);
            let fwd = kl(&a, &b).unwrap().scalar_value().unwrap();
            let bwd = kl(&b, &a).unwrap().scalar_value().unwrap();
            assert!((ab - 0.5 * (fwd + bwd)).abs() < 1e-15);
            assert!(fwd >= 0.0 && bwd >= 0.0);
        }
    }

    #[test]
    fn rsample_cases() {
        let d = gauss(&[0.0], &[2.0]);
        let zero = Tensor::zeros(&[1]);
        assert_eq!(rsample(&d, &zero).unwrap().scalar_value().unwrap(), 0.0);
        let one = Tensor::full(&[1], 1.0);
        assert_eq!(rsample(&d, &one).unwrap().scalar_value().unwrap(), 2.0);

        // Gradient of sum(rsample) wrt the mean is all-ones.
        let d2 = gauss(&[0.5, -0.5, 1.0], &[1.0, 2.0, 3.0]);
        let noise = Tensor::new(vec![3], vec![0.3, -0.7, 0.1]).unwrap();
        let s = rsample(&d2, &noise).unwrap().sum_all().unwrap();
        backward(&s).unwrap();
        assert_eq!(d2.mean.grad().unwrap().data(), &[1.0, 1.0, 1.0]);
        assert_eq!(d2.stddev.grad().unwrap().data(), noise.data());
    }

    #[test]
    fn log_prob_hand_values() {
        let d = gauss(&[0.7], &[1.0]);
        let at_mean = log_prob(&d, &Node::constant(Tensor::new(vec![1], vec![0.7]).unwrap()))
            .unwrap()
            .scalar_value()
            .unwrap();
        assert!((at_mean - (-0.9189385332046727)).abs() < 1e-12);

        let at_one_sigma =
            log_prob(&d, &Node::constant(Tensor::new(vec![1], vec![1.7]).unwrap()))
                .unwrap()
                .scalar_value()
                .unwrap();
        assert!((at_one_sigma - (at_mean - 0.5)).abs() < 1e-12);

        // Additivity over dimensions.
        let d2 = gauss(&[0.1, -0.9], &[0.5, 1.5]);
        let x = Node::constant(Tensor::new(vec![2], vec![0.4, 0.2]).unwrap());
        let joint = log_prob(&d2, &x).unwrap().scalar_value().unwrap();
        let d_a = gauss(&[0.1], &[0.5]);
        let d_b = gauss(&[-0.9], &[1.5]);
        let a = log_prob(&d_a, &Node::constant(Tensor::new(vec![1], vec![0.4]).unwrap()))
            .unwrap()
            .scalar_value()
            .unwrap();
        let b = log_prob(&d_b, &Node::constant(Tensor::new(vec![1], vec![0.2]).unwrap()))
            .unwrap()
            .scalar_value()
            .unwrap();
        assert!((joint - (a + b)).abs() < 1e-12);
    }

    #[test]
    fn kl_nonnegative_and_zero_iff_equal_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..1000 {
            let p = gauss(
                &[rng.gen_range(-3.0..3.0)],
                &[rng.gen_range(0.05..3.0)],
            );
            let q = gauss(
                &[rng.gen_range(-3.0..3.0)],
                &[rng.gen_range(0.05..3.0)],
            );
            let v = kl(&p, &q).unwrap().scalar_value().unwrap();
            assert!(v >= 0.0, "kl = {v}");
        }
        let p = gauss(&[1.25], &[0.75]);
        let q = gauss(&[1.25], &[0.75]);
        assert_eq!(kl(&p, &q).unwrap().scalar_value().unwrap(), 0.0);
    }

    #[test]
    fn monte_carlo_kl_consistency() {
        // E_p[log p(x) - log q(x)] over rsample draws approximates kl(p, q)
        // within 3 standard errors at 1e5 samples.
        let p = gauss(&[0.4], &[1.3]);
        let q = gauss(&[-0.2], &[0.8]);
        let exact = kl(&p, &q).unwrap().scalar_value().unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(424242);
        let n = 100_000usize;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..n {
            let eps: f64 = rng.sample(StandardNormal);
            let noise = Tensor::new(vec![1], vec![eps]).unwrap();
            let x = rsample(&p, &noise).unwrap();
            let diff = log_prob(&p, &x)
                .unwrap()
                .sub(&log_prob(&q, &x).unwrap())
                .unwrap()
                .scalar_value()
                .unwrap();
            sum += diff;
            sum_sq += diff * diff;
        }
        let mean = sum / n as f64;
        let var = (sum_sq / n as f64 - mean * mean).max(0.0);
        let se = (var / n as f64).sqrt();
        assert!(
            (mean - exact).abs() <= 3.0 * se,
            "mc {mean} vs exact {exact} (se {se})"
        );
    }

    #[test]
    fn gradients_pass_finite_difference() {
        // Sweep each parameter tensor of kl/skl/log_prob.
        let mk = |m: &Node, s_raw: &Node| -> Result<DiagGaussian> {
            DiagGaussian::from_raw(m.clone(), s_raw.clone(), 1e-4)
        };
        let m_q = Node::constant(Tensor::new(vec![2], vec![-0.3, 0.8]).unwrap());
        let s_q = Node::constant(Tensor::new(vec![2], vec![0.2, -0.1]).unwrap());
        let x0 = Tensor::new(vec![4], vec![0.4, -0.6, 0.3, 0.9]).unwrap();

        for which in ["kl", "skl", "log_prob"] {
            let err = finite_diff_check(
                |x| {
                    let m = x.slice_axis(0, 0, 2)?;
                    let s = x.slice_axis(0, 2, 2)?;
                    let p = mk(&m, &s)?;
                    let q = mk(&m_q, &s_q)?;
                    match which {
                        "kl" => kl(&p, &q),
                        "skl" => skl(&p, &q),
                        _ => {
                            let pt = Node::constant(Tensor::new(vec![2], vec![0.25, -0.5]).unwrap());
                            log_prob(&p, &pt)
                        }
                    }
                },
                &x0,
                1e-5,
            )
            .unwrap();
            assert!(err < 1e-4, "{which}: rel err {err}");
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let p = gauss(&[0.0, 1.0], &[1.0, 1.0]);
        let q = gauss(&[0.0], &[1.0]);
        assert!(kl(&p, &q).is_err());
        assert!(rsample(&p, &Tensor::zeros(&[3])).is_err());
    }

    #[test]
    fn stddev_floor_enforced_by_from_raw() {
        let mean = Node::zeros(&[2]);
        let raw = Node::constant(Tensor::new(vec![2], vec![-40.0, -100.0]).unwrap());
        let d = DiagGaussian::from_raw(mean, raw, 1e-4).unwrap();
        assert!(d.stddev.value().data().iter().all(|&s| s >= 1e-4));
    }
}
