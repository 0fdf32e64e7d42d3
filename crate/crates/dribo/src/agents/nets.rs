use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::ndgrad::{Node, ParamRegistry};

/// Dense ReLU stack; the last layer is linear.
pub struct Mlp {
    layers: Vec<(Node, Node)>,
}

impl Mlp {
    pub fn new(
        reg: &mut ParamRegistry,
        prefix: &str,
        dims: &[usize],
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let mut layers = Vec::new();
        for i in 0..dims.len() - 1 {
            let w = reg.dense_init(&format!("{prefix}.w{i}"), dims[i], dims[i + 1], rng)?;
            let b = reg.uniform_init(&format!("{prefix}.b{i}"), &[dims[i + 1]], 0.05, rng)?;
            layers.push((w, b));
        }
        Ok(Mlp { layers })
    }

    pub fn forward(&self, x: &Node) -> Result<Node> {
        let mut h = x.clone();
        for (i, (w, b)) in self.layers.iter().enumerate() {
            h = h.matmul(w)?.add(b)?;
            if i + 1 < self.layers.len() {
                h = h.relu()?;
            }
        }
        Ok(h)
    }
}

/// Numerically stable log-softmax over rows of (N, K) logits.
pub fn log_softmax_rows(logits: &Node) -> Result<Node> {
    let shape = logits.shape();
    let (n, _k) = (shape[0], shape[1]);
    let mut row_max = Vec::with_capacity(n);
    {
        let v = logits.value();
        for i in 0..n {
            let mut best = f64::NEG_INFINITY;
            for j in 0.._k {
                best = best.max(v.at2(i, j));
            }
            row_max.push(best);
        }
    }
    let max_col = Node::constant(crate::ndgrad::Tensor::new(vec![n, 1], row_max)?);
    let shifted = logits.sub(&max_col.broadcast_to(&shape)?)?;
    let lse = shifted.exp()?.sum_axis(1, true)?.log()?;
    shifted.sub(&lse.broadcast_to(&shape)?)
}
