use crate::error::{Error, Result};
use crate::ndgrad::registry::ParamRegistry;
use crate::ndgrad::tensor::Tensor;

/// Adam with optional global-norm gradient clipping. Moment buffers are
/// aligned with the registry's insertion order.
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    max_grad_norm: Option<f64>,
    t: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(registry: &ParamRegistry, lr: f64) -> Self {
        let m = registry
            .iter()
            .map(|(_, p)| Tensor::zeros(&p.shape()))
            .collect();
        let v = registry
            .iter()
            .map(|(_, p)| Tensor::zeros(&p.shape()))
            .collect();
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            max_grad_norm: None,
            t: 0,
            m,
            v,
        }
    }

    pub fn with_grad_clip(mut self, max_norm: f64) -> Self {
        self.max_grad_norm = Some(max_norm);
        self
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.lr = lr;
    }

    /// Apply one update using the gradients currently stored on the
    /// registry's parameters. Missing gradients count as zero.
    pub fn step(&mut self, registry: &ParamRegistry) -> Result<()> {
        if registry.len() != self.m.len() {
            return Err(Error::contract("optimizer bound to a different registry"));
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);

        let grads: Vec<Tensor> = registry
            .iter()
            .map(|(_, p)| p.grad().unwrap_or_else(|| Tensor::zeros(&p.shape())))
            .collect();
        let scale = match self.max_grad_norm {
            Some(max) => {
                let sq: f64 = grads
                    .iter()
                    .map(|g| g.data().iter().map(|v| v * v).sum::<f64>())
                    .sum();
                let norm = sq.sqrt();
                if norm > max {
                    max / norm
                } else {
                    1.0
                }
            }
            None => 1.0,
        };

        for (i, (_, p)) in registry.iter().enumerate() {
            let g = &grads[i];
            if !g.all_finite() {
                return Err(Error::domain("non-finite gradient in optimizer step"));
            }
            let mut new_value = p.value_clone();
            for j in 0..g.numel() {
                let gj = g.data()[j] * scale;
                let m = self.beta1 * self.m[i].data()[j] + (1.0 - self.beta1) * gj;
                let v = self.beta2 * self.v[i].data()[j] + (1.0 - self.beta2) * gj * gj;
                self.m[i].data_mut()[j] = m;
                self.v[i].data_mut()[j] = v;
                let mh = m / bc1;
                let vh = v / bc2;
                new_value.data_mut()[j] -= self.lr * mh / (vh.sqrt() + self.eps);
            }
            p.set_value(new_value)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ndgrad::node::backward;

    #[test]
    fn adam_descends_a_quadratic() {
        let mut reg = ParamRegistry::new();
        let x = reg
            .param("x", Tensor::new(vec![2], vec![3.0, -2.0]).unwrap())
            .unwrap();
        let mut opt = Adam::new(&reg, 0.1);
        for _ in 0..200 {
            reg.zero_grads();
            let loss = x.mul(&x).unwrap().sum_all().unwrap();
            backward(&loss).unwrap();
            opt.step(&reg).unwrap();
        }
        let v = x.value_clone();
        assert!(v.data().iter().all(|a| a.abs() < 1e-2), "{:?}", v.data());
    }

    #[test]
    fn first_step_magnitude_is_lr() {
        // With bias correction, |Δx| of the first Adam step is ~lr.
        let mut reg = ParamRegistry::new();
        let x = reg
            .param("x", Tensor::new(vec![1], vec![5.0]).unwrap())
            .unwrap();
        let mut opt = Adam::new(&reg, 0.01);
        reg.zero_grads();
        let loss = x.mul(&x).unwrap().sum_all().unwrap();
        backward(&loss).unwrap();
        opt.step(&reg).unwrap();
        let moved = 5.0 - x.value().data()[0];
        assert!((moved - 0.01).abs() < 1e-6, "moved {moved}");
    }
}
