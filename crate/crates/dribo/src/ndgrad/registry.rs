use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ndgrad::node::Node;
use crate::ndgrad::tensor::Tensor;

/// Named collection of trainable leaves. Iteration order is insertion order,
/// which keeps optimizer updates and checkpoints deterministic.
#[derive(Default)]
pub struct ParamRegistry {
    params: Vec<(String, Node)>,
    index: BTreeMap<String, usize>,
}

impl ParamRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Register a new parameter with the given initial value.
    pub fn param(&mut self, name: &str, init: Tensor) -> Result<Node> {
        if self.index.contains_key(name) {
            return Err(Error::contract(format!("duplicate parameter {name:?}")));
        }
        let node = Node::parameter(init);
        self.index.insert(name.to_string(), self.params.len());
        self.params.push((name.to_string(), node.clone()));
        Ok(node)
    }

    /// Uniform init in [-limit, limit] with limit = sqrt(6 / (fan_in + fan_out)).
    pub fn dense_init(
        &mut self,
        name: &str,
        rows: usize,
        cols: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Node> {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        let data: Vec<f64> = (0..rows * cols)
            .map(|_| rng.gen_range(-limit..limit))
            .collect();
        self.param(name, Tensor::new(vec![rows, cols], data)?)
    }

    pub fn zeros_init(&mut self, name: &str, shape: &[usize]) -> Result<Node> {
        self.param(name, Tensor::zeros(shape))
    }

    /// Uniform init in [-limit, limit]. Small limits keep biases off
    /// activation kinks at degenerate (all-zero) inputs.
    pub fn uniform_init(
        &mut self,
        name: &str,
        shape: &[usize],
        limit: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Node> {
        let n: usize = shape.iter().product();
        let data: Vec<f64> = (0..n).map(|_| rng.gen_range(-limit..limit)).collect();
        self.param(name, Tensor::new(shape.to_vec(), data)?)
    }

    pub fn get(&self, name: &str) -> Option<&Node> {
        self.index.get(name).map(|&i| &self.params[i].1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Node)> {
        self.params.iter().map(|(n, p)| (n.as_str(), p))
    }

    pub fn total_elems(&self) -> usize {
        self.params.iter().map(|(_, p)| p.numel()).sum()
    }

    /// Reset all gradients; the next backward starts from zero.
    pub fn zero_grads(&self) {
        for (_, p) in &self.params {
            p.clear_grad();
        }
    }

    /// True if every parameter currently has no (or an all-zero) gradient.
    pub fn grads_are_zero(&self) -> bool {
        self.params.iter().all(|(_, p)| match p.grad() {
            None => true,
            Some(g) => g.data().iter().all(|&v| v == 0.0),
        })
    }

    /// Copy parameter values from a same-structured registry.
    pub fn copy_values_from(&self, other: &ParamRegistry) -> Result<()> {
        self.zip_check(other)?;
        for ((_, dst), (_, src)) in self.params.iter().zip(other.params.iter()) {
            dst.set_value(src.value_clone())?;
        }
        Ok(())
    }

    /// Polyak average: self <- tau * online + (1 - tau) * self.
    pub fn polyak_from(&self, online: &ParamRegistry, tau: f64) -> Result<()> {
        self.zip_check(online)?;
        for ((_, tgt), (_, src)) in self.params.iter().zip(online.params.iter()) {
            let mixed = tgt
                .value()
                .zip(&src.value(), |t, o| tau * o + (1.0 - tau) * t)?;
            tgt.set_value(mixed)?;
        }
        Ok(())
    }

    fn zip_check(&self, other: &ParamRegistry) -> Result<()> {
        if self.params.len() != other.params.len() {
            return Err(Error::contract(format!(
                "registry size mismatch: {} vs {}",
                self.params.len(),
                other.params.len()
            )));
        }
        for ((na, a), (nb, b)) in self.params.iter().zip(other.params.iter()) {
            if na != nb || a.shape() != b.shape() {
                return Err(Error::contract(format!(
                    "registry entry mismatch: {na:?}{:?} vs {nb:?}{:?}",
                    a.shape(),
                    b.shape()
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn duplicate_names_rejected() {
        let mut reg = ParamRegistry::new();
        reg.zeros_init("w", &[2]).unwrap();
        assert!(reg.zeros_init("w", &[2]).is_err());
    }

    #[test]
    fn polyak_mixes_exactly() {
        let mut online = ParamRegistry::new();
        let mut target = ParamRegistry::new();
        online
            .param("w", Tensor::new(vec![2], vec![1.0, 2.0]).unwrap())
            .unwrap();
        target
            .param("w", Tensor::new(vec![2], vec![3.0, 4.0]).unwrap())
            .unwrap();
        target.polyak_from(&online, 0.01).unwrap();
        let w = target.get("w").unwrap().value_clone();
        assert_eq!(w.data()[0], 0.01 * 1.0 + 0.99 * 3.0);
        assert_eq!(w.data()[1], 0.01 * 2.0 + 0.99 * 4.0);
    }

    #[test]
    fn dense_init_deterministic_per_seed() {
        let mut r1 = ChaCha8Rng::seed_from_u64(7);
        let mut r2 = ChaCha8Rng::seed_from_u64(7);
        let mut a = ParamRegistry::new();
        let mut b = ParamRegistry::new();
        let wa = a.dense_init("w", 3, 4, &mut r1).unwrap();
        let wb = b.dense_init("w", 3, 4, &mut r2).unwrap();
        assert_eq!(wa.value().data(), wb.value().data());
    }
}
