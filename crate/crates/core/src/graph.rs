//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Nodes are appended in evaluation order, so the tape is already a
//! topological order of the DAG; [`Graph::backward`] walks it once in reverse.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::ops::{self, ConvGeometry, PoolGeometry};
use crate::tensor::{Shape, Tensor};

/// Handle to a value recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pointwise {
    Add,
    Sub,
    Mul,
    OneMinus,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Conv2d { input: Var, kernel: Var, bias: Option<Var>, geom: ConvGeometry },
    Resize { input: Var },
    Concat { inputs: Vec<Var> },
    Binary { op: Pointwise, a: Var, b: Var },
    OneMinus { a: Var },
    Scale { a: Var, factor: f64 },
    Sigmoid { a: Var },
    Relu { a: Var },
    AvgPool { input: Var, geom: PoolGeometry },
    Stack { input: Var },
    Sum { a: Var },
    WeightedBce { logits: Var, target: Tensor, weight: Tensor },
    WeightedIou { logits: Var, target: Tensor, weight: Tensor },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Conv2d { .. } => "conv2d",
            Op::Resize { .. } => "bilinear_resize",
            Op::Concat { .. } => "concat_channels",
            Op::Binary { op: Pointwise::Add, .. } => "add",
            Op::Binary { op: Pointwise::Sub, .. } => "sub",
            Op::Binary { .. } => "mul",
            Op::OneMinus { .. } => "one_minus",
            Op::Scale { .. } => "scale",
            Op::Sigmoid { .. } => "sigmoid",
            Op::Relu { .. } => "relu",
            Op::AvgPool { .. } => "avg_pool",
            Op::Stack { .. } => "stack_channels",
            Op::Sum { .. } => "sum",
            Op::WeightedBce { .. } => "weighted_bce",
            Op::WeightedIou { .. } => "weighted_iou",
        }
    }
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// A recording of tensor operations and, after [`Graph::backward`], the
/// gradients of every leaf that requires one.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf excluded from differentiation.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> Shape {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Name of the operation that produced `v`.
    pub fn op_name(&self, v: Var) -> &'static str {
        self.nodes[v.0].op.name()
    }

    /// Accumulated gradient of a leaf, available after [`Graph::backward`].
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn zero_grad(&mut self) {
        self.grads.clear();
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn conv2d(&mut self, input: Var, kernel: Var, bias: Option<Var>, geom: ConvGeometry) -> Result<Var> {
        let out = ops::conv2d_forward(self.value(input), self.value(kernel), bias.map(|b| self.value(b)), geom)?;
        let mut deps = vec![input, kernel];
        deps.extend(bias);
        let rg = self.any_grad(&deps);
        Ok(self.push(out, Op::Conv2d { input, kernel, bias, geom }, rg))
    }

    pub fn bilinear_resize(&mut self, input: Var, out_h: usize, out_w: usize) -> Result<Var> {
        let s = self.shape(input);
        if s.h == out_h && s.w == out_w {
            return Ok(input);
        }
        let out = ops::resize_forward(self.value(input), out_h, out_w)?;
        let rg = self.any_grad(&[input]);
        Ok(self.push(out, Op::Resize { input }, rg))
    }

    pub fn concat_channels(&mut self, inputs: &[Var]) -> Result<Var> {
        if inputs.len() == 1 {
            ops::concat_shape(&[self.shape(inputs[0])])?;
            return Ok(inputs[0]);
        }
        let tensors: Vec<&Tensor> = inputs.iter().map(|&v| self.value(v)).collect();
        let out = ops::concat_channels(&tensors)?;
        let rg = self.any_grad(inputs);
        Ok(self.push(out, Op::Concat { inputs: inputs.to_vec() }, rg))
    }

    pub fn elementwise(&mut self, op: Pointwise, a: Var, b: Option<Var>) -> Result<Var> {
        match (op, b) {
            (Pointwise::OneMinus, None) => Ok(self.one_minus(a)),
            (Pointwise::OneMinus, Some(_)) => Err(Error::InvalidArgument {
                op: "one_minus",
                reason: "takes exactly one operand".into(),
            }),
            (_, None) => Err(Error::InvalidArgument { op: "elementwise", reason: "binary op needs two operands".into() }),
            (op, Some(b)) => self.binary(op, a, b),
        }
    }

    fn binary(&mut self, op: Pointwise, a: Var, b: Var) -> Result<Var> {
        let name = match op {
            Pointwise::Add => "add",
            Pointwise::Sub => "sub",
            _ => "mul",
        };
        ops::check_same_shape(name, self.shape(a), self.shape(b))?;
        let (x, y) = (self.value(a).data(), self.value(b).data());
        let data: Vec<f64> = match op {
            Pointwise::Add => x.iter().zip(y).map(|(p, q)| p + q).collect(),
            Pointwise::Sub => x.iter().zip(y).map(|(p, q)| p - q).collect(),
            _ => x.iter().zip(y).map(|(p, q)| p * q).collect(),
        };
        let out = Tensor::from_vec(self.shape(a), data)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(out, Op::Binary { op, a, b }, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Pointwise::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Pointwise::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Pointwise::Mul, a, b)
    }

    pub fn one_minus(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|v| 1.0 - v);
        let rg = self.any_grad(&[a]);
        self.push(out, Op::OneMinus { a }, rg)
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let out = self.value(a).map(|v| v * factor);
        let rg = self.any_grad(&[a]);
        self.push(out, Op::Scale { a, factor }, rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(ops::sigmoid);
        let rg = self.any_grad(&[a]);
        self.push(out, Op::Sigmoid { a }, rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|v| if v > 0.0 { v } else { 0.0 });
        let rg = self.any_grad(&[a]);
        self.push(out, Op::Relu { a }, rg)
    }

    pub fn avg_pool(&mut self, input: Var, kernel: usize, stride: usize, padding: usize) -> Result<Var> {
        let geom = PoolGeometry { kernel, stride, padding };
        let out = ops::avg_pool_forward(self.value(input), geom)?;
        let rg = self.any_grad(&[input]);
        Ok(self.push(out, Op::AvgPool { input, geom }, rg))
    }

    pub fn stack_channels(&mut self, input: Var, copies: usize) -> Result<Var> {
        let out = ops::stack_channels(self.value(input), copies)?;
        if copies == 1 {
            return Ok(input);
        }
        let rg = self.any_grad(&[input]);
        Ok(self.push(out, Op::Stack { input }, rg))
    }

    /// Sum of all elements as a scalar.
    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).sum());
        let rg = self.any_grad(&[a]);
        self.push(out, Op::Sum { a }, rg)
    }

    /// Pixel-weighted binary cross-entropy on logits, normalised by the
    /// weight mass of each batch item and averaged over the batch.
    pub fn weighted_bce(&mut self, logits: Var, target: &Tensor, weight: &Tensor) -> Result<Var> {
        let s = self.shape(logits);
        ops::check_same_shape("weighted_bce", s, target.shape())?;
        ops::check_same_shape("weighted_bce", s, weight.shape())?;
        let x = self.value(logits).data();
        let item = s.numel() / s.n.max(1);
        let mut total = 0.0;
        for n in 0..s.n {
            let r = n * item..(n + 1) * item;
            let (mut num, mut den) = (0.0, 0.0);
            for ((&x, &g), &w) in x[r.clone()].iter().zip(&target.data()[r.clone()]).zip(&weight.data()[r]) {
                // -[g ln s(x) + (1-g) ln(1-s(x))] = softplus(x) - g x
                num += w * (ops::softplus(x) - g * x);
                den += w;
            }
            total += num / den;
        }
        let out = Tensor::scalar(total / s.n as f64);
        let rg = self.any_grad(&[logits]);
        Ok(self.push(out, Op::WeightedBce { logits, target: target.clone(), weight: weight.clone() }, rg))
    }

    /// Pixel-weighted soft IoU loss `1 - (I + 1) / (U + 1)` on sigmoid
    /// probabilities, averaged over the batch.
    pub fn weighted_iou(&mut self, logits: Var, target: &Tensor, weight: &Tensor) -> Result<Var> {
        let s = self.shape(logits);
        ops::check_same_shape("weighted_iou", s, target.shape())?;
        ops::check_same_shape("weighted_iou", s, weight.shape())?;
        let x = self.value(logits).data();
        let item = s.numel() / s.n.max(1);
        let mut total = 0.0;
        for n in 0..s.n {
            let (inter, union) = iou_terms(&x[n * item..(n + 1) * item], target, weight, n * item);
            total += 1.0 - (inter + 1.0) / (union + 1.0);
        }
        let out = Tensor::scalar(total / s.n as f64);
        let rg = self.any_grad(&[logits]);
        Ok(self.push(out, Op::WeightedIou { logits, target: target.clone(), weight: weight.clone() }, rg))
    }

    /// Reverse sweep from a scalar `loss`; leaf gradients accumulate into
    /// whatever earlier calls left behind.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let s = self.shape(loss);
        if s.numel() != 1 {
            return Err(Error::InvalidShape { op: "backward", shape: s, reason: "loss must be a scalar".into() });
        }
        let mut work: Vec<Option<Tensor>> = (0..=loss.0).map(|_| None).collect();
        work[loss.0] = Some(Tensor::full(s, 1.0));
        for i in (0..=loss.0).rev() {
            let Some(grad) = work[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            if let Op::Leaf = node.op {
                if self.grads.len() <= i {
                    self.grads.resize_with(i + 1, || None);
                }
                match &mut self.grads[i] {
                    Some(acc) => acc.data_mut().iter_mut().zip(grad.data()).for_each(|(a, g)| *a += g),
                    slot @ None => *slot = Some(grad),
                }
                continue;
            }
            for (var, g) in self.local_grads(node, &grad) {
                if !self.nodes[var.0].requires_grad {
                    continue;
                }
                match &mut work[var.0] {
                    Some(acc) => acc.data_mut().iter_mut().zip(g.data()).for_each(|(a, b)| *a += b),
                    slot @ None => *slot = Some(g),
                }
            }
        }
        Ok(())
    }

    fn local_grads(&self, node: &Node, grad: &Tensor) -> Vec<(Var, Tensor)> {
        let out = &node.value;
        match &node.op {
            Op::Leaf => Vec::new(),
            Op::Conv2d { input, kernel, bias, geom } => {
                let want = [
                    self.requires_grad(*input),
                    self.requires_grad(*kernel),
                    bias.is_some_and(|b| self.requires_grad(b)),
                ];
                let g = ops::conv2d_backward(self.value(*input), self.value(*kernel), *geom, grad, want);
                let mut res = Vec::new();
                if let Some(t) = g.input {
                    res.push((*input, t));
                }
                if let Some(t) = g.kernel {
                    res.push((*kernel, t));
                }
                if let (Some(b), Some(t)) = (bias, g.bias) {
                    let shape = self.shape(*b);
                    res.push((*b, Tensor::from_vec(shape, t.into_data()).expect("bias length checked in forward")));
                }
                res
            }
            Op::Resize { input } => vec![(*input, ops::resize_backward(self.shape(*input), grad))],
            Op::Concat { inputs } => {
                let shapes: Vec<Shape> = inputs.iter().map(|&v| self.shape(v)).collect();
                inputs.iter().copied().zip(ops::split_channels(grad, &shapes)).collect()
            }
            Op::Binary { op, a, b } => match op {
                Pointwise::Add => vec![(*a, grad.clone()), (*b, grad.clone())],
                Pointwise::Sub => vec![(*a, grad.clone()), (*b, grad.map(|v| -v))],
                _ => {
                    let (x, y) = (self.value(*a), self.value(*b));
                    vec![(*a, zip_map(grad, y, |g, v| g * v)), (*b, zip_map(grad, x, |g, v| g * v))]
                }
            },
            Op::OneMinus { a } => vec![(*a, grad.map(|g| -g))],
            Op::Scale { a, factor } => vec![(*a, grad.map(|g| g * factor))],
            Op::Sigmoid { a } => vec![(*a, zip_map(grad, out, |g, s| g * s * (1.0 - s)))],
            Op::Relu { a } => vec![(*a, zip_map(grad, self.value(*a), |g, x| if x > 0.0 { g } else { 0.0 }))],
            Op::AvgPool { input, geom } => vec![(*input, ops::avg_pool_backward(self.shape(*input), *geom, grad))],
            Op::Stack { input } => vec![(*input, ops::unstack_channels(grad))],
            Op::Sum { a } => vec![(*a, Tensor::full(self.shape(*a), grad.data()[0]))],
            Op::WeightedBce { logits, target, weight } => {
                let x = self.value(*logits);
                let s = x.shape();
                let item = s.numel() / s.n;
                let upstream = grad.data()[0] / s.n as f64;
                let mut d = Tensor::zeros(s);
                for n in 0..s.n {
                    let r = n * item..(n + 1) * item;
                    let den: f64 = weight.data()[r.clone()].iter().sum();
                    for i in r {
                        let p = ops::sigmoid(x.data()[i]);
                        d.data_mut()[i] = upstream * weight.data()[i] * (p - target.data()[i]) / den;
                    }
                }
                vec![(*logits, d)]
            }
            Op::WeightedIou { logits, target, weight } => {
                let x = self.value(*logits);
                let s = x.shape();
                let item = s.numel() / s.n;
                let upstream = grad.data()[0] / s.n as f64;
                let mut d = Tensor::zeros(s);
                for n in 0..s.n {
                    let r = n * item..(n + 1) * item;
                    let (inter, union) = iou_terms(&x.data()[r.clone()], target, weight, r.start);
                    let (i1, u1) = (inter + 1.0, union + 1.0);
                    for i in r {
                        let p = ops::sigmoid(x.data()[i]);
                        let (g, w) = (target.data()[i], weight.data()[i]);
                        // L = 1 - I/U, dI/dp = w g, dU/dp = w (1 - g)
                        let dl_dp = -(w * g * u1 - i1 * w * (1.0 - g)) / (u1 * u1);
                        d.data_mut()[i] = upstream * dl_dp * p * (1.0 - p);
                    }
                }
                vec![(*logits, d)]
            }
        }
    }
}

fn iou_terms(logits: &[f64], target: &Tensor, weight: &Tensor, offset: usize) -> (f64, f64) {
    let (mut inter, mut union) = (0.0, 0.0);
    for (i, &x) in logits.iter().enumerate() {
        let p = ops::sigmoid(x);
        let (g, w) = (target.data()[offset + i], weight.data()[offset + i]);
        inter += w * p * g;
        union += w * (p + g - p * g);
    }
    (inter, union)
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::from_vec(a.shape(), data).expect("operands share a shape")
}
