use std::cell::{Ref, RefCell};
use std::collections::HashSet;
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::ndgrad::tensor::Tensor;

static NEXT_ID: AtomicU64 = AtomicU64::new(0);

/// Operation kinds understood by the graph. Attributes ride on the variant.
#[derive(Debug, Clone, PartialEq)]
pub enum OpKind {
    Add,
    Sub,
    Mul,
    Div,
    Matmul,
    Exp,
    Log,
    Tanh,
    Relu,
    Softplus,
    Square,
    Sqrt,
    Sum { axis: Option<usize>, keep_dim: bool },
    Mean { axis: Option<usize>, keep_dim: bool },
    Broadcast { shape: Vec<usize> },
    Concat { axis: usize },
    Slice { axis: usize, start: usize, len: usize },
    Transpose,
    StopGradient,
}

struct NodeInner {
    id: u64,
    value: RefCell<Tensor>,
    grad: RefCell<Option<Tensor>>,
    requires_grad: bool,
    op: Option<(OpKind, Vec<Node>)>,
}

/// Handle into the reverse-mode graph. Cloning is cheap (shared node).
#[derive(Clone)]
pub struct Node {
    inner: Rc<NodeInner>,
}

impl std::fmt::Debug for Node {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Node")
            .field("id", &self.inner.id)
            .field("shape", &self.inner.value.borrow().shape())
            .field("requires_grad", &self.inner.requires_grad)
            .finish()
    }
}

impl Node {
    fn make(value: Tensor, requires_grad: bool, op: Option<(OpKind, Vec<Node>)>) -> Node {
        Node {
            inner: Rc::new(NodeInner {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                value: RefCell::new(value),
                grad: RefCell::new(None),
                requires_grad,
                op,
            }),
        }
    }

    /// Leaf that participates in gradients.
    pub fn parameter(value: Tensor) -> Node {
        Node::make(value, true, None)
    }

    /// Leaf that never receives gradients.
    pub fn constant(value: Tensor) -> Node {
        Node::make(value, false, None)
    }

    pub fn scalar(value: f64) -> Node {
        Node::constant(Tensor::scalar(value))
    }

    pub fn zeros(shape: &[usize]) -> Node {
        Node::constant(Tensor::zeros(shape))
    }

    pub fn id(&self) -> u64 {
        self.inner.id
    }

    pub fn value(&self) -> Ref<'_, Tensor> {
        self.inner.value.borrow()
    }

    pub fn value_clone(&self) -> Tensor {
        self.inner.value.borrow().clone()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.inner.value.borrow().shape().to_vec()
    }

    pub fn numel(&self) -> usize {
        self.inner.value.borrow().numel()
    }

    pub fn scalar_value(&self) -> Result<f64> {
        self.inner.value.borrow().scalar_value()
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad
    }

    pub fn grad(&self) -> Option<Tensor> {
        self.inner.grad.borrow().clone()
    }

    pub fn clear_grad(&self) {
        *self.inner.grad.borrow_mut() = None;
    }

    /// Replace the value of a leaf in place. Used by optimizers, Polyak
    /// updates, and finite-difference probes; rejected on derived nodes.
    pub fn set_value(&self, value: Tensor) -> Result<()> {
        if self.inner.op.is_some() {
            return Err(Error::contract("set_value on a derived node"));
        }
        if value.shape() != self.inner.value.borrow().shape() {
            return Err(Error::invalid_shape("set_value changes shape"));
        }
        *self.inner.value.borrow_mut() = value;
        Ok(())
    }

    fn accumulate_grad(&self, g: &Tensor) -> Result<()> {
        let mut slot = self.inner.grad.borrow_mut();
        match slot.as_mut() {
            Some(existing) => existing.add_assign(g)?,
            None => *slot = Some(g.clone()),
        }
        Ok(())
    }

    fn same(&self, other: &Node) -> bool {
        Rc::ptr_eq(&self.inner, &other.inner)
    }
}

fn broadcast_pair(a: &Tensor, b: &Tensor) -> Result<(Tensor, Tensor)> {
    if a.shape() == b.shape() {
        return Ok((a.clone(), b.clone()));
    }
    if Tensor::is_suffix_of(b.shape(), a.shape()) {
        let tiled = b.tile_to(a.shape());
        return Ok((a.clone(), tiled));
    }
    if Tensor::is_suffix_of(a.shape(), b.shape()) {
        let tiled = a.tile_to(b.shape());
        return Ok((tiled, b.clone()));
    }
    Err(Error::invalid_shape(format!(
        "elementwise op on {:?} vs {:?} (only leading-dimension broadcast is allowed)",
        a.shape(),
        b.shape()
    )))
}

/// Expand `t` to `target` numpy-style: align from trailing dims; size-1 axes
/// repeat; extra leading target dims tile.
fn expand_to(t: &Tensor, target: &[usize]) -> Result<Tensor> {
    let src = t.shape();
    if src.len() > target.len() {
        return Err(Error::invalid_shape(format!(
            "broadcast {:?} -> {:?}",
            src, target
        )));
    }
    let offset = target.len() - src.len();
    for (i, &s) in src.iter().enumerate() {
        let tdim = target[offset + i];
        if s != tdim && s != 1 {
            return Err(Error::invalid_shape(format!(
                "broadcast {:?} -> {:?}",
                src, target
            )));
        }
    }
    let out_numel: usize = target.iter().product();
    let mut out = vec![0.0; out_numel];
    // Row-major strides of the source viewed in target rank (0 stride where
    // the source repeats).
    let mut src_strides = vec![0usize; target.len()];
    {
        let mut acc = 1usize;
        for i in (0..src.len()).rev() {
            if src[i] != 1 {
                src_strides[offset + i] = acc;
            }
            acc *= src[i];
        }
    }
    let mut idx = vec![0usize; target.len()];
    for slot in out.iter_mut() {
        let mut sidx = 0usize;
        for (d, &i) in idx.iter().enumerate() {
            sidx += src_strides[d] * i;
        }
        *slot = t.data()[sidx];
        for d in (0..target.len()).rev() {
            idx[d] += 1;
            if idx[d] < target[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    Tensor::new(target.to_vec(), out)
}

/// Sum `grad` (whose shape is `from`) back down to `target` — the adjoint of
/// `expand_to`.
fn reduce_expanded(grad: &Tensor, target: &[usize]) -> Tensor {
    let from = grad.shape().to_vec();
    if from == target {
        return grad.clone();
    }
    let offset = from.len() - target.len();
    let mut out = Tensor::zeros(target);
    let mut tgt_strides = vec![0usize; from.len()];
    {
        let mut acc = 1usize;
        for i in (0..target.len()).rev() {
            if target[i] != 1 {
                tgt_strides[offset + i] = acc;
            }
            acc *= target[i];
        }
    }
    let mut idx = vec![0usize; from.len()];
    for &g in grad.data() {
        let mut tidx = 0usize;
        for (d, &i) in idx.iter().enumerate() {
            tidx += tgt_strides[d] * i;
        }
        out.data_mut()[tidx] += g;
        for d in (0..from.len()).rev() {
            idx[d] += 1;
            if idx[d] < from[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    out
}

/// Split a shape at `axis` into (outer, len, inner) extents.
fn axis_extents(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer: usize = shape[..axis].iter().product();
    let len = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    (outer, len, inner)
}

fn check_unary_finite_domain(kind: &OpKind, x: &Tensor) -> Result<()> {
    match kind {
        OpKind::Log => {
            if x.data().iter().any(|&v| v <= 0.0) {
                return Err(Error::domain("log of a non-positive operand"));
            }
        }
        OpKind::Sqrt => {
            if x.data().iter().any(|&v| v < 0.0) {
                return Err(Error::domain("sqrt of a negative operand"));
            }
        }
        _ => {}
    }
    Ok(())
}

fn forward(kind: &OpKind, inputs: &[Node]) -> Result<Tensor> {
    let arity_err = |n: usize| {
        Err(Error::contract(format!(
            "op {:?} expects {} input(s), got {}",
            kind,
            n,
            inputs.len()
        )))
    };
    match kind {
        OpKind::Add | OpKind::Sub | OpKind::Mul | OpKind::Div => {
            if inputs.len() != 2 {
                return arity_err(2);
            }
            let a = inputs[0].value();
            let b = inputs[1].value();
            if matches!(kind, OpKind::Div) && b.data().iter().any(|&v| v == 0.0) {
                return Err(Error::domain("division by a zero operand"));
            }
            let (ta, tb) = broadcast_pair(&a, &b)?;
            match kind {
                OpKind::Add => ta.zip(&tb, |x, y| x + y),
                OpKind::Sub => ta.zip(&tb, |x, y| x - y),
                OpKind::Mul => ta.zip(&tb, |x, y| x * y),
                OpKind::Div => ta.zip(&tb, |x, y| x / y),
                _ => unreachable!(),
            }
        }
        OpKind::Matmul => {
            if inputs.len() != 2 {
                return arity_err(2);
            }
            inputs[0].value().matmul(&inputs[1].value())
        }
        OpKind::Exp
        | OpKind::Log
        | OpKind::Tanh
        | OpKind::Relu
        | OpKind::Softplus
        | OpKind::Square
        | OpKind::Sqrt => {
            if inputs.len() != 1 {
                return arity_err(1);
            }
            let x = inputs[0].value();
            check_unary_finite_domain(kind, &x)?;
            Ok(match kind {
                OpKind::Exp => x.map(f64::exp),
                OpKind::Log => x.map(f64::ln),
                OpKind::Tanh => x.map(f64::tanh),
                OpKind::Relu => x.map(|v| if v > 0.0 { v } else { 0.0 }),
                // log(1+e^x) = max(x,0) + log(1+e^{-|x|}), overflow-safe.
                OpKind::Softplus => x.map(|v| v.max(0.0) + (-v.abs()).exp().ln_1p()),
                OpKind::Square => x.map(|v| v * v),
                OpKind::Sqrt => x.map(f64::sqrt),
                _ => unreachable!(),
            })
        }
        OpKind::Sum { axis, keep_dim } | OpKind::Mean { axis, keep_dim } => {
            if inputs.len() != 1 {
                return arity_err(1);
            }
            let x = inputs[0].value();
            let mean = matches!(kind, OpKind::Mean { .. });
            match axis {
                None => {
                    let mut s: f64 = x.data().iter().sum();
                    if mean {
                        s /= x.numel() as f64;
                    }
                    Ok(Tensor::scalar(s))
                }
                Some(ax) => {
                    if *ax >= x.ndim() {
                        return Err(Error::invalid_shape(format!(
                            "reduce axis {} out of range for {:?}",
                            ax,
                            x.shape()
                        )));
                    }
                    let (outer, len, inner) = axis_extents(x.shape(), *ax);
                    let mut data = vec![0.0; outer * inner];
                    for o in 0..outer {
                        for l in 0..len {
                            for i in 0..inner {
                                data[o * inner + i] += x.data()[(o * len + l) * inner + i];
                            }
                        }
                    }
                    if mean {
                        for v in data.iter_mut() {
                            *v /= len as f64;
                        }
                    }
                    let mut shape = x.shape().to_vec();
                    if *keep_dim {
                        shape[*ax] = 1;
                    } else {
                        shape.remove(*ax);
                    }
                    Tensor::new(shape, data)
                }
            }
        }
        OpKind::Broadcast { shape } => {
            if inputs.len() != 1 {
                return arity_err(1);
            }
            expand_to(&inputs[0].value(), shape)
        }
        OpKind::Concat { axis } => {
            if inputs.is_empty() {
                return Err(Error::contract("concat of zero inputs"));
            }
            let first_shape = inputs[0].shape();
            if *axis >= first_shape.len() {
                return Err(Error::invalid_shape("concat axis out of range"));
            }
            let mut total = 0usize;
            for n in inputs {
                let s = n.shape();
                if s.len() != first_shape.len() {
                    return Err(Error::invalid_shape("concat rank mismatch"));
                }
                for (d, (&a, &b)) in s.iter().zip(first_shape.iter()).enumerate() {
                    if d != *axis && a != b {
                        return Err(Error::invalid_shape(format!(
                            "concat dim {} mismatch: {:?} vs {:?}",
                            d, s, first_shape
                        )));
                    }
                }
                total += s[*axis];
            }
            let mut shape = first_shape.clone();
            shape[*axis] = total;
            let (outer, _, inner) = axis_extents(&shape, *axis);
            let mut data = vec![0.0; outer * total * inner];
            for o in 0..outer {
                let mut written = 0usize;
                for n in inputs {
                    let v = n.value();
                    let len = v.shape()[*axis];
                    let src = &v.data()[o * len * inner..(o + 1) * len * inner];
                    let dst_start = (o * total + written) * inner;
                    data[dst_start..dst_start + len * inner].copy_from_slice(src);
                    written += len;
                }
            }
            Tensor::new(shape, data)
        }
        OpKind::Slice { axis, start, len } => {
            if inputs.len() != 1 {
                return arity_err(1);
            }
            let x = inputs[0].value();
            if *axis >= x.ndim() || start + len > x.shape()[*axis] {
                return Err(Error::invalid_shape(format!(
                    "slice [{}, {}+{}) out of range for {:?}",
                    axis,
                    start,
                    len,
                    x.shape()
                )));
            }
            let (outer, full, inner) = axis_extents(x.shape(), *axis);
            let mut data = vec![0.0; outer * len * inner];
            for o in 0..outer {
                let src = (o * full + start) * inner;
                let dst = o * len * inner;
                data[dst..dst + len * inner].copy_from_slice(&x.data()[src..src + len * inner]);
            }
            let mut shape = x.shape().to_vec();
            shape[*axis] = *len;
            Tensor::new(shape, data)
        }
        OpKind::Transpose => {
            if inputs.len() != 1 {
                return arity_err(1);
            }
            inputs[0].value().transpose2()
        }
        OpKind::StopGradient => {
            if inputs.len() != 1 {
                return arity_err(1);
            }
            Ok(inputs[0].value_clone())
        }
    }
}

/// Per-input gradients given the output gradient. `None` marks an input that
/// receives no gradient through this op.
fn backward_op(
    kind: &OpKind,
    inputs: &[Node],
    out_value: &Tensor,
    g: &Tensor,
) -> Result<Vec<Option<Tensor>>> {
    match kind {
        OpKind::Add => {
            let ga = reduce_expanded(g, inputs[0].value().shape());
            let gb = reduce_expanded(g, inputs[1].value().shape());
            Ok(vec![Some(ga), Some(gb)])
        }
        OpKind::Sub => {
            let ga = reduce_expanded(g, inputs[0].value().shape());
            let gb = reduce_expanded(&g.map(|v| -v), inputs[1].value().shape());
            Ok(vec![Some(ga), Some(gb)])
        }
        OpKind::Mul => {
            let a = inputs[0].value();
            let b = inputs[1].value();
            let (ta, tb) = broadcast_pair(&a, &b)?;
            let ga = reduce_expanded(&g.zip(&tb, |gv, bv| gv * bv)?, a.shape());
            let gb = reduce_expanded(&g.zip(&ta, |gv, av| gv * av)?, b.shape());
            Ok(vec![Some(ga), Some(gb)])
        }
        OpKind::Div => {
            let a = inputs[0].value();
            let b = inputs[1].value();
            let (ta, tb) = broadcast_pair(&a, &b)?;
            let ga = reduce_expanded(&g.zip(&tb, |gv, bv| gv / bv)?, a.shape());
            let mut gb_full = g.zip(&ta, |gv, av| gv * av)?;
            for (x, &bv) in gb_full.data_mut().iter_mut().zip(tb.data().iter()) {
                *x = -*x / (bv * bv);
            }
            let gb = reduce_expanded(&gb_full, b.shape());
            Ok(vec![Some(ga), Some(gb)])
        }
        OpKind::Matmul => {
            let a = inputs[0].value();
            let b = inputs[1].value();
            let ga = g.matmul(&b.transpose2()?)?;
            let gb = a.transpose2()?.matmul(g)?;
            Ok(vec![Some(ga), Some(gb)])
        }
        OpKind::Exp => Ok(vec![Some(g.zip(out_value, |gv, y| gv * y)?)]),
        OpKind::Log => {
            let x = inputs[0].value();
            Ok(vec![Some(g.zip(&x, |gv, xv| gv / xv)?)])
        }
        OpKind::Tanh => Ok(vec![Some(g.zip(out_value, |gv, y| gv * (1.0 - y * y))?)]),
        OpKind::Relu => {
            let x = inputs[0].value();
            // Subgradient at 0 is 0.
            Ok(vec![Some(g.zip(&x, |gv, xv| {
                if xv > 0.0 {
                    gv
                } else {
                    0.0
                }
            })?)])
        }
        OpKind::Softplus => {
            let x = inputs[0].value();
            let sig = x.map(|v| 0.5 * (0.5 * v).tanh() + 0.5);
            Ok(vec![Some(g.zip(&sig, |gv, sv| gv * sv)?)])
        }
        OpKind::Square => {
            let x = inputs[0].value();
            Ok(vec![Some(g.zip(&x, |gv, xv| gv * 2.0 * xv)?)])
        }
        OpKind::Sqrt => Ok(vec![Some(g.zip(out_value, |gv, y| gv * 0.5 / y)?)]),
        OpKind::Sum { axis, keep_dim } | OpKind::Mean { axis, keep_dim } => {
            let x = inputs[0].value();
            let mean = matches!(kind, OpKind::Mean { .. });
            match axis {
                None => {
                    let gv = g.scalar_value()?;
                    let scale = if mean { 1.0 / x.numel() as f64 } else { 1.0 };
                    Ok(vec![Some(Tensor::full(x.shape(), gv * scale))])
                }
                Some(ax) => {
                    let (outer, len, inner) = axis_extents(x.shape(), *ax);
                    let scale = if mean { 1.0 / len as f64 } else { 1.0 };
                    let _ = keep_dim; // grad layout is identical either way
                    let mut data = vec![0.0; x.numel()];
                    for o in 0..outer {
                        for l in 0..len {
                            for i in 0..inner {
                                data[(o * len + l) * inner + i] =
                                    g.data()[o * inner + i] * scale;
                            }
                        }
                    }
                    Ok(vec![Some(Tensor::new(x.shape().to_vec(), data)?)])
                }
            }
        }
        OpKind::Broadcast { .. } => {
            let x = inputs[0].value();
            Ok(vec![Some(reduce_expanded(g, x.shape()))])
        }
        OpKind::Concat { axis } => {
            let (outer, total, inner) = axis_extents(out_value.shape(), *axis);
            let mut grads = Vec::with_capacity(inputs.len());
            let mut offset = 0usize;
            for n in inputs {
                let shape = n.shape();
                let len = shape[*axis];
                let mut data = vec![0.0; outer * len * inner];
                for o in 0..outer {
                    let src = (o * total + offset) * inner;
                    let dst = o * len * inner;
                    data[dst..dst + len * inner]
                        .copy_from_slice(&g.data()[src..src + len * inner]);
                }
                grads.push(Some(Tensor::new(shape, data)?));
                offset += len;
            }
            Ok(grads)
        }
        OpKind::Slice { axis, start, len } => {
            let x = inputs[0].value();
            let (outer, full, inner) = axis_extents(x.shape(), *axis);
            let mut data = vec![0.0; x.numel()];
            for o in 0..outer {
                let dst = (o * full + start) * inner;
                let src = o * len * inner;
                data[dst..dst + len * inner].copy_from_slice(&g.data()[src..src + len * inner]);
            }
            Ok(vec![Some(Tensor::new(x.shape().to_vec(), data)?)])
        }
        OpKind::Transpose => Ok(vec![Some(g.transpose2()?)]),
        OpKind::StopGradient => Ok(vec![None]),
    }
}

/// Build one graph node: validates inputs, computes the forward value, and
/// registers the backward edge.
pub fn apply(kind: OpKind, inputs: &[Node]) -> Result<Node> {
    let value = forward(&kind, inputs)?;
    let requires_grad = !matches!(kind, OpKind::StopGradient)
        && inputs.iter().any(|n| n.requires_grad());
    Ok(Node::make(
        value,
        requires_grad,
        Some((kind, inputs.to_vec())),
    ))
}

/// Value-identical node that blocks gradient flow.
pub fn stop_gradient(x: &Node) -> Node {
    apply(OpKind::StopGradient, std::slice::from_ref(x)).expect("stop_gradient is infallible")
}

/// Reverse-mode sweep from a scalar root. Gradients accumulate additively
/// into every reachable node with `requires_grad`; call `zero_grads` (or
/// `clear_grad`) between independent sweeps.
pub fn backward(root: &Node) -> Result<()> {
    if root.numel() != 1 {
        return Err(Error::contract(format!(
            "backward root must be scalar-shaped, got {:?}",
            root.shape()
        )));
    }
    if !root.requires_grad() {
        return Ok(());
    }
    // Iterative post-order DFS over the requires_grad subgraph.
    let mut order: Vec<Node> = Vec::new();
    let mut visited: HashSet<u64> = HashSet::new();
    let mut stack: Vec<(Node, usize)> = vec![(root.clone(), 0)];
    visited.insert(root.id());
    while let Some((node, child)) = stack.pop() {
        let next_child = {
            let children = node.inner.op.as_ref().map(|(_, ins)| ins);
            match children {
                Some(ins) => ins
                    .iter()
                    .enumerate()
                    .skip(child)
                    .find(|(_, c)| c.requires_grad() && !visited.contains(&c.id()))
                    .map(|(i, c)| (i, c.clone())),
                None => None,
            }
        };
        match next_child {
            Some((i, c)) => {
                visited.insert(c.id());
                stack.push((node, i + 1));
                stack.push((c, 0));
            }
            None => order.push(node),
        }
    }

    let root_shape = root.shape();
    root.accumulate_grad(&Tensor::full(&root_shape, 1.0))?;

    for node in order.iter().rev() {
        let g = match node.grad() {
            Some(g) => g,
            None => continue,
        };
        if let Some((kind, inputs)) = node.inner.op.as_ref() {
            let out_value = node.value_clone();
            let input_grads = backward_op(kind, inputs, &out_value, &g)?;
            for (input, gi) in inputs.iter().zip(input_grads) {
                if let (true, Some(gi)) = (input.requires_grad(), gi) {
                    input.accumulate_grad(&gi)?;
                }
            }
            // Intermediate gradients are not needed once propagated; leaves
            // keep theirs for the optimizer.
            if !node.same(root) {
                node.clear_grad();
            }
        }
    }
    Ok(())
}

// ── convenience builders ────────────────────────────────────────────────

impl Node {
    pub fn add(&self, other: &Node) -> Result<Node> {
        apply(OpKind::Add, &[self.clone(), other.clone()])
    }
    pub fn sub(&self, other: &Node) -> Result<Node> {
        apply(OpKind::Sub, &[self.clone(), other.clone()])
    }
    pub fn mul(&self, other: &Node) -> Result<Node> {
        apply(OpKind::Mul, &[self.clone(), other.clone()])
    }
    pub fn div(&self, other: &Node) -> Result<Node> {
        apply(OpKind::Div, &[self.clone(), other.clone()])
    }
    pub fn matmul(&self, other: &Node) -> Result<Node> {
        apply(OpKind::Matmul, &[self.clone(), other.clone()])
    }
    pub fn exp(&self) -> Result<Node> {
        apply(OpKind::Exp, std::slice::from_ref(self))
    }
    pub fn log(&self) -> Result<Node> {
        apply(OpKind::Log, std::slice::from_ref(self))
    }
    pub fn tanh(&self) -> Result<Node> {
        apply(OpKind::Tanh, std::slice::from_ref(self))
    }
    pub fn relu(&self) -> Result<Node> {
        apply(OpKind::Relu, std::slice::from_ref(self))
    }
    pub fn softplus(&self) -> Result<Node> {
        apply(OpKind::Softplus, std::slice::from_ref(self))
    }
    pub fn square(&self) -> Result<Node> {
        apply(OpKind::Square, std::slice::from_ref(self))
    }
    pub fn sqrt(&self) -> Result<Node> {
        apply(OpKind::Sqrt, std::slice::from_ref(self))
    }
    pub fn sum_all(&self) -> Result<Node> {
        apply(
            OpKind::Sum {
                axis: None,
                keep_dim: false,
            },
            std::slice::from_ref(self),
        )
    }
    pub fn mean_all(&self) -> Result<Node> {
        apply(
            OpKind::Mean {
                axis: None,
                keep_dim: false,
            },
            std::slice::from_ref(self),
        )
    }
    pub fn sum_axis(&self, axis: usize, keep_dim: bool) -> Result<Node> {
        apply(
            OpKind::Sum {
                axis: Some(axis),
                keep_dim,
            },
            std::slice::from_ref(self),
        )
    }
    pub fn mean_axis(&self, axis: usize, keep_dim: bool) -> Result<Node> {
        apply(
            OpKind::Mean {
                axis: Some(axis),
                keep_dim,
            },
            std::slice::from_ref(self),
        )
    }
    pub fn broadcast_to(&self, shape: &[usize]) -> Result<Node> {
        apply(
            OpKind::Broadcast {
                shape: shape.to_vec(),
            },
            std::slice::from_ref(self),
        )
    }
    pub fn slice_axis(&self, axis: usize, start: usize, len: usize) -> Result<Node> {
        apply(
            OpKind::Slice { axis, start, len },
            std::slice::from_ref(self),
        )
    }
    pub fn transpose(&self) -> Result<Node> {
        apply(OpKind::Transpose, std::slice::from_ref(self))
    }
    pub fn stop_gradient(&self) -> Node {
        stop_gradient(self)
    }
    pub fn add_scalar(&self, c: f64) -> Result<Node> {
        self.add(&Node::scalar(c))
    }
    pub fn mul_scalar(&self, c: f64) -> Result<Node> {
        self.mul(&Node::scalar(c))
    }
    pub fn neg(&self) -> Result<Node> {
        self.mul_scalar(-1.0)
    }
    /// 0.5 * (1 + tanh(x/2)) — the logistic function as a composite.
    pub fn sigmoid(&self) -> Result<Node> {
        self.mul_scalar(0.5)?.tanh()?.mul_scalar(0.5)?.add_scalar(0.5)
    }
    /// Elementwise minimum via `a - relu(a - b)`.
    pub fn min_elem(&self, other: &Node) -> Result<Node> {
        self.sub(&self.sub(other)?.relu()?)
    }
}

pub fn concat(nodes: &[Node], axis: usize) -> Result<Node> {
    apply(OpKind::Concat { axis }, nodes)
}
