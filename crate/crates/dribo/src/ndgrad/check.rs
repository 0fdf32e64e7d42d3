use crate::error::{Error, Result};
use crate::ndgrad::node::{backward, Node};
use crate::ndgrad::registry::ParamRegistry;
use crate::ndgrad::tensor::Tensor;

/// Compare the reverse-mode gradient of `f` at `x0` against central
/// differences. Returns the max over coordinates of
/// `|analytic - central| / max(1, |central|)`.
pub fn finite_diff_check<F>(f: F, x0: &Tensor, eps: f64) -> Result<f64>
where
    F: Fn(&Node) -> Result<Node>,
{
    if eps <= 0.0 {
        return Err(Error::contract("finite_diff_check needs eps > 0"));
    }
    let x = Node::parameter(x0.clone());
    let y = f(&x)?;
    if y.numel() != 1 {
        return Err(Error::contract("finite_diff_check: f must be scalar"));
    }
    if !y.value().all_finite() {
        return Err(Error::domain("finite_diff_check: non-finite f value"));
    }
    backward(&y)?;
    let analytic = x.grad().unwrap_or_else(|| Tensor::zeros(x0.shape()));

    let eval = |probe: Tensor| -> Result<f64> {
        let node = Node::constant(probe);
        let out = f(&node)?;
        let v = out.scalar_value()?;
        if !v.is_finite() {
            return Err(Error::domain("finite_diff_check: non-finite f value"));
        }
        Ok(v)
    };

    let mut max_err: f64 = 0.0;
    for i in 0..x0.numel() {
        let mut plus = x0.clone();
        plus.data_mut()[i] += eps;
        let mut minus = x0.clone();
        minus.data_mut()[i] -= eps;
        let central = (eval(plus)? - eval(minus)?) / (2.0 * eps);
        let err = (analytic.data()[i] - central).abs() / central.abs().max(1.0);
        max_err = max_err.max(err);
    }
    Ok(max_err)
}

/// Finite-difference check of a loss over every parameter in a registry.
/// `loss` must rebuild its graph on each call and be deterministic (freeze
/// any sampling noise before calling). Returns the max relative error across
/// all coordinates of all parameters.
pub fn finite_diff_check_params<F>(loss: F, registry: &ParamRegistry, eps: f64) -> Result<f64>
where
    F: Fn() -> Result<Node>,
{
    if eps <= 0.0 {
        return Err(Error::contract("finite_diff_check_params needs eps > 0"));
    }
    registry.zero_grads();
    let root = loss()?;
    if root.numel() != 1 {
        return Err(Error::contract("finite_diff_check_params: loss must be scalar"));
    }
    backward(&root)?;
    let analytic: Vec<Tensor> = registry
        .iter()
        .map(|(_, p)| p.grad().unwrap_or_else(|| Tensor::zeros(&p.shape())))
        .collect();

    let mut max_err: f64 = 0.0;
    for (pi, (_, p)) in registry.iter().enumerate() {
        let base = p.value_clone();
        for i in 0..base.numel() {
            let mut plus = base.clone();
            plus.data_mut()[i] += eps;
            p.set_value(plus)?;
            let f_plus = loss()?.scalar_value()?;
            let mut minus = base.clone();
            minus.data_mut()[i] -= eps;
            p.set_value(minus)?;
            let f_minus = loss()?.scalar_value()?;
            p.set_value(base.clone())?;
            let central = (f_plus - f_minus) / (2.0 * eps);
            let err = (analytic[pi].data()[i] - central).abs() / central.abs().max(1.0);
            max_err = max_err.max(err);
        }
    }
    Ok(max_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient_is_nearly_exact() {
        let x0 = Tensor::new(vec![2], vec![1.0, -2.0]).unwrap();
        let err = finite_diff_check(|x| x.mul(x)?.sum_all(), &x0, 1e-5).unwrap();
        assert!(err < 1e-6, "err = {err}");
    }

    #[test]
    fn tanh_sum_matches_central_differences() {
        let x0 = Tensor::new(vec![4], vec![0.3, -1.1, 0.7, 1.9]).unwrap();
        let err = finite_diff_check(|x| x.tanh()?.sum_all(), &x0, 1e-5).unwrap();
        assert!(err < 1e-6, "err = {err}");
    }

    #[test]
    fn constant_function_has_zero_error() {
        let x0 = Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap();
        let err = finite_diff_check(|_| Ok(Node::scalar(4.0)), &x0, 1e-5).unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn registry_sweep_matches() {
        let mut reg = ParamRegistry::new();
        let w = reg
            .param("w", Tensor::new(vec![2, 2], vec![0.3, -0.2, 0.5, 0.9]).unwrap())
            .unwrap();
        let b = reg
            .param("b", Tensor::new(vec![2], vec![0.1, -0.4]).unwrap())
            .unwrap();
        let x = Node::constant(Tensor::from_rows(&[vec![1.0, 2.0], vec![-0.5, 0.3]]).unwrap());
        let err = finite_diff_check_params(
            || {
                x.matmul(&w)?
                    .add(&b)?
                    .tanh()?
                    .square()?
                    .mean_all()
            },
            &reg,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "err = {err}");
    }
}
