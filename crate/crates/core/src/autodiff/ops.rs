//! Primitive operations: forward kernels, backward rules and the `Tensor`
//! methods that record them.
//!
//! Every backward rule is written in terms of recorded tensor operations, so
//! running it on attached tensors yields a differentiable gradient (used for
//! higher-order derivatives) and running it on detached tensors yields plain
//! constants.

use super::tensor::{numel, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum Op {
    Leaf,
    Add,
    Sub,
    Mul,
    Neg,
    Scale(f64),
    Sin,
    Cos,
    Tanh,
    Relu,
    MatMul,
    Transpose,
    Reshape(Vec<usize>),
    /// Tile the input across leading dimensions so it takes the given shape,
    /// whose trailing extents equal the input shape.
    BroadcastLeading(Vec<usize>),
    /// Inverse of `BroadcastLeading`: sum leading dimensions away, leaving the
    /// given trailing shape.
    SumLeading(Vec<usize>),
    SumAll,
    /// Scalar to any shape.
    Expand(Vec<usize>),
    SumLastAxis,
    BroadcastLastAxis(usize),
    Softmax,
    LogSumExp,
}

/// Elementwise operations accepted by [`elementwise`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ElementwiseOp {
    Add,
    Sub,
    Mul,
    Neg,
    Sin,
    Tanh,
    Relu,
    Scale(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReduceOp {
    Sum,
    Mean,
}

/// Applies a unary (`b = None`) or binary elementwise operation.
pub fn elementwise(op: ElementwiseOp, a: &Tensor, b: Option<&Tensor>) -> Result<Tensor> {
    let binary = |op_name: &str| {
        b.ok_or_else(|| Error::Contract(format!("{op_name} needs two operands")))
    };
    match op {
        ElementwiseOp::Add => a.add(binary("add")?),
        ElementwiseOp::Sub => a.sub(binary("sub")?),
        ElementwiseOp::Mul => a.mul(binary("mul")?),
        ElementwiseOp::Neg => a.neg(),
        ElementwiseOp::Sin => a.sin(),
        ElementwiseOp::Tanh => a.tanh(),
        ElementwiseOp::Relu => a.relu(),
        ElementwiseOp::Scale(c) => a.scale(c),
    }
}

pub fn reduce(op: ReduceOp, a: &Tensor) -> Result<Tensor> {
    match op {
        ReduceOp::Sum => a.sum(),
        ReduceOp::Mean => a.mean(),
    }
}

fn is_suffix(short: &[usize], long: &[usize]) -> bool {
    short.len() < long.len() && long[long.len() - short.len()..] == *short
}

fn map(data: &[f64], f: impl Fn(f64) -> f64) -> Vec<f64> {
    data.iter().map(|&x| f(x)).collect()
}

fn zip(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

fn last_axis(shape: &[usize]) -> Result<(usize, usize)> {
    match shape.split_last() {
        Some((&n, lead)) => Ok((numel(lead), n)),
        None => Err(Error::Shape {
            op: "last-axis reduction",
            lhs: shape.to_vec(),
            rhs: vec![],
        }),
    }
}

/// Forward kernel shared by recording and replay.
pub(crate) fn forward(op: &Op, inputs: &[(&[usize], &[f64])]) -> Result<(Vec<usize>, Vec<f64>)> {
    let arity = match op {
        Op::Leaf => 0,
        Op::Add | Op::Sub | Op::Mul | Op::MatMul => 2,
        _ => 1,
    };
    if inputs.len() != arity {
        return Err(Error::Contract(format!(
            "{op:?} takes {arity} inputs, got {}",
            inputs.len()
        )));
    }
    let same_shape = |name: &'static str| -> Result<()> {
        if inputs[0].0 != inputs[1].0 {
            return Err(Error::Shape {
                op: name,
                lhs: inputs[0].0.to_vec(),
                rhs: inputs[1].0.to_vec(),
            });
        }
        Ok(())
    };
    let (shape, x) = inputs.first().copied().unwrap_or((&[], &[]));
    let out = match op {
        Op::Leaf => return Err(Error::Contract("leaf nodes have no forward".into())),
        Op::Add => {
            same_shape("add")?;
            (shape.to_vec(), zip(x, inputs[1].1, |a, b| a + b))
        }
        Op::Sub => {
            same_shape("sub")?;
            (shape.to_vec(), zip(x, inputs[1].1, |a, b| a - b))
        }
        Op::Mul => {
            same_shape("mul")?;
            (shape.to_vec(), zip(x, inputs[1].1, |a, b| a * b))
        }
        Op::Neg => (shape.to_vec(), map(x, |a| -a)),
        Op::Scale(c) => (shape.to_vec(), map(x, |a| a * c)),
        Op::Sin => (shape.to_vec(), map(x, f64::sin)),
        Op::Cos => (shape.to_vec(), map(x, f64::cos)),
        Op::Tanh => (shape.to_vec(), map(x, f64::tanh)),
        Op::Relu => (shape.to_vec(), map(x, |a| if a > 0.0 { a } else { 0.0 })),
        Op::MatMul => {
            let (bshape, y) = inputs[1];
            let err = || Error::Shape {
                op: "matmul",
                lhs: shape.to_vec(),
                rhs: bshape.to_vec(),
            };
            let (&[m, k], &[k2, n]) = (shape, bshape) else {
                return Err(err());
            };
            if k != k2 {
                return Err(err());
            }
            let mut out = vec![0.0; m * n];
            for i in 0..m {
                let row = &mut out[i * n..(i + 1) * n];
                for p in 0..k {
                    let a = x[i * k + p];
                    let brow = &y[p * n..(p + 1) * n];
                    for (o, &b) in row.iter_mut().zip(brow) {
                        *o += a * b;
                    }
                }
            }
            (vec![m, n], out)
        }
        Op::Transpose => {
            let &[m, n] = shape else {
                return Err(Error::Shape {
                    op: "transpose",
                    lhs: shape.to_vec(),
                    rhs: vec![],
                });
            };
            let mut out = vec![0.0; m * n];
            for i in 0..m {
                for j in 0..n {
                    out[j * m + i] = x[i * n + j];
                }
            }
            (vec![n, m], out)
        }
        Op::Reshape(target) => {
            if numel(target) != x.len() {
                return Err(Error::Shape {
                    op: "reshape",
                    lhs: shape.to_vec(),
                    rhs: target.clone(),
                });
            }
            (target.clone(), x.to_vec())
        }
        Op::BroadcastLeading(target) => {
            if !is_suffix(shape, target) {
                return Err(Error::Shape {
                    op: "broadcast",
                    lhs: shape.to_vec(),
                    rhs: target.clone(),
                });
            }
            let reps = numel(target) / x.len().max(1);
            let mut out = Vec::with_capacity(numel(target));
            for _ in 0..reps {
                out.extend_from_slice(x);
            }
            (target.clone(), out)
        }
        Op::SumLeading(target) => {
            if !is_suffix(target, shape) {
                return Err(Error::Shape {
                    op: "sum-leading",
                    lhs: shape.to_vec(),
                    rhs: target.clone(),
                });
            }
            let n = numel(target);
            let mut out = vec![0.0; n];
            for chunk in x.chunks(n.max(1)) {
                for (o, &v) in out.iter_mut().zip(chunk) {
                    *o += v;
                }
            }
            (target.clone(), out)
        }
        Op::SumAll => (vec![], vec![x.iter().sum()]),
        Op::Expand(target) => {
            if !shape.is_empty() {
                return Err(Error::Shape {
                    op: "expand",
                    lhs: shape.to_vec(),
                    rhs: target.clone(),
                });
            }
            (target.clone(), vec![x[0]; numel(target)])
        }
        Op::SumLastAxis => {
            let (m, n) = last_axis(shape)?;
            let out = (0..m).map(|i| x[i * n..(i + 1) * n].iter().sum()).collect();
            (shape[..shape.len() - 1].to_vec(), out)
        }
        Op::BroadcastLastAxis(n) => {
            let mut out = Vec::with_capacity(x.len() * n);
            for &v in x {
                out.extend(std::iter::repeat_n(v, *n));
            }
            let mut s = shape.to_vec();
            s.push(*n);
            (s, out)
        }
        Op::Softmax => {
            let (m, n) = last_axis(shape)?;
            let mut out = vec![0.0; x.len()];
            for i in 0..m {
                let row = &x[i * n..(i + 1) * n];
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let dst = &mut out[i * n..(i + 1) * n];
                let mut total = 0.0;
                for (d, &v) in dst.iter_mut().zip(row) {
                    *d = (v - max).exp();
                    total += *d;
                }
                for d in dst.iter_mut() {
                    *d /= total;
                }
            }
            (shape.to_vec(), out)
        }
        Op::LogSumExp => {
            let (m, n) = last_axis(shape)?;
            let out = (0..m)
                .map(|i| {
                    let row = &x[i * n..(i + 1) * n];
                    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
                })
                .collect();
            (shape[..shape.len() - 1].to_vec(), out)
        }
    };
    Ok(out)
}

/// Vector-Jacobian product for one node. `inputs` and `output` are the
/// node's recorded operands (attached when building a differentiable
/// backward pass). Entries are `None` where `wanted` is false.
pub(crate) fn backward(
    op: &Op,
    inputs: &[Tensor],
    output: &Tensor,
    upstream: &Tensor,
    wanted: &[bool],
) -> Result<Vec<Option<Tensor>>> {
    let g = upstream;
    let want = |i: usize| wanted.get(i).copied().unwrap_or(false);
    let mut grads: Vec<Option<Tensor>> = vec![None; inputs.len()];
    match op {
        Op::Leaf => {}
        Op::Add => {
            grads[0] = Some(g.clone());
            grads[1] = Some(g.clone());
        }
        Op::Sub => {
            grads[0] = Some(g.clone());
            if want(1) {
                grads[1] = Some(g.neg()?);
            }
        }
        Op::Mul => {
            if want(0) {
                grads[0] = Some(g.mul(&inputs[1])?);
            }
            if want(1) {
                grads[1] = Some(g.mul(&inputs[0])?);
            }
        }
        Op::Neg => grads[0] = Some(g.neg()?),
        Op::Scale(c) => grads[0] = Some(g.scale(*c)?),
        Op::Sin => grads[0] = Some(g.mul(&inputs[0].cos()?)?),
        Op::Cos => grads[0] = Some(g.mul(&inputs[0].sin()?)?.neg()?),
        Op::Tanh => {
            // d tanh = 1 - tanh^2, expressed through the recorded output
            let y2 = output.mul(output)?;
            grads[0] = Some(g.sub(&g.mul(&y2)?)?);
        }
        Op::Relu => {
            // the step mask is piecewise constant, so it carries no provenance
            let mask: Vec<f64> = inputs[0]
                .values()
                .iter()
                .map(|&v| if v > 0.0 { 1.0 } else { 0.0 })
                .collect();
            let mask = Tensor::from_vec(mask, inputs[0].shape())?;
            grads[0] = Some(g.mul(&mask)?);
        }
        Op::MatMul => {
            if want(0) {
                grads[0] = Some(g.matmul(&inputs[1].transpose()?)?);
            }
            if want(1) {
                grads[1] = Some(inputs[0].transpose()?.matmul(g)?);
            }
        }
        Op::Transpose => grads[0] = Some(g.transpose()?),
        Op::Reshape(_) => grads[0] = Some(g.reshape(inputs[0].shape())?),
        Op::BroadcastLeading(_) => grads[0] = Some(g.sum_leading(inputs[0].shape())?),
        Op::SumLeading(_) => grads[0] = Some(g.broadcast_leading(inputs[0].shape())?),
        Op::SumAll => grads[0] = Some(g.expand(inputs[0].shape())?),
        Op::Expand(_) => grads[0] = Some(g.sum()?),
        Op::SumLastAxis => {
            let n = *inputs[0].shape().last().unwrap_or(&1);
            grads[0] = Some(g.broadcast_last_axis(n)?);
        }
        Op::BroadcastLastAxis(_) => grads[0] = Some(g.sum_last_axis()?),
        Op::Softmax => {
            // y * (g - <g, y>) row by row
            let n = *output.shape().last().unwrap_or(&1);
            let dot = g.mul(output)?.sum_last_axis()?.broadcast_last_axis(n)?;
            grads[0] = Some(output.mul(&g.sub(&dot)?)?);
        }
        Op::LogSumExp => {
            let n = *inputs[0].shape().last().unwrap_or(&1);
            let soft = inputs[0].softmax()?;
            grads[0] = Some(g.broadcast_last_axis(n)?.mul(&soft)?);
        }
    }
    Ok(grads)
}

impl Tensor {
    fn binary(&self, other: &Tensor, op: Op, name: &'static str) -> Result<Tensor> {
        if self.shape() == other.shape() {
            Tensor::apply(op, &[self, other])
        } else if is_suffix(other.shape(), self.shape()) {
            let b = other.broadcast_leading(self.shape())?;
            Tensor::apply(op, &[self, &b])
        } else if is_suffix(self.shape(), other.shape()) {
            let a = self.broadcast_leading(other.shape())?;
            Tensor::apply(op, &[&a, other])
        } else {
            Err(Error::Shape {
                op: name,
                lhs: self.shape().to_vec(),
                rhs: other.shape().to_vec(),
            })
        }
    }

    /// Elementwise sum. A right-hand side whose shape is a trailing suffix of
    /// the left-hand shape (a bias vector against a matrix, or a scalar) is
    /// broadcast across the leading dimensions, and vice versa.
    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.binary(other, Op::Add, "add")
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.binary(other, Op::Sub, "sub")
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.binary(other, Op::Mul, "mul")
    }

    pub fn neg(&self) -> Result<Tensor> {
        Tensor::apply(Op::Neg, &[self])
    }

    pub fn scale(&self, factor: f64) -> Result<Tensor> {
        Tensor::apply(Op::Scale(factor), &[self])
    }

    pub fn sin(&self) -> Result<Tensor> {
        Tensor::apply(Op::Sin, &[self])
    }

    pub fn cos(&self) -> Result<Tensor> {
        Tensor::apply(Op::Cos, &[self])
    }

    pub fn tanh(&self) -> Result<Tensor> {
        Tensor::apply(Op::Tanh, &[self])
    }

    /// Rectifier; its derivative at exactly zero is taken to be zero.
    pub fn relu(&self) -> Result<Tensor> {
        Tensor::apply(Op::Relu, &[self])
    }

    pub fn square(&self) -> Result<Tensor> {
        self.mul(self)
    }

    /// `[m×k]·[k×n] → [m×n]`.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        Tensor::apply(Op::MatMul, &[self, other])
    }

    pub fn transpose(&self) -> Result<Tensor> {
        Tensor::apply(Op::Transpose, &[self])
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        if shape == self.shape() {
            return Ok(self.clone());
        }
        Tensor::apply(Op::Reshape(shape.to_vec()), &[self])
    }

    pub fn broadcast_leading(&self, shape: &[usize]) -> Result<Tensor> {
        Tensor::apply(Op::BroadcastLeading(shape.to_vec()), &[self])
    }

    pub fn sum_leading(&self, shape: &[usize]) -> Result<Tensor> {
        Tensor::apply(Op::SumLeading(shape.to_vec()), &[self])
    }

    pub fn sum(&self) -> Result<Tensor> {
        Tensor::apply(Op::SumAll, &[self])
    }

    pub fn mean(&self) -> Result<Tensor> {
        let n = self.numel();
        if n == 0 {
            return Err(Error::Contract("mean of an empty tensor".into()));
        }
        self.sum()?.scale(1.0 / n as f64)
    }

    /// Scalar to `shape`.
    pub fn expand(&self, shape: &[usize]) -> Result<Tensor> {
        Tensor::apply(Op::Expand(shape.to_vec()), &[self])
    }

    pub fn sum_last_axis(&self) -> Result<Tensor> {
        Tensor::apply(Op::SumLastAxis, &[self])
    }

    pub fn broadcast_last_axis(&self, n: usize) -> Result<Tensor> {
        Tensor::apply(Op::BroadcastLastAxis(n), &[self])
    }

    /// Softmax over the last axis.
    pub fn softmax(&self) -> Result<Tensor> {
        Tensor::apply(Op::Softmax, &[self])
    }

    /// Max-shifted `log Σ exp` over the last axis.
    pub fn log_sum_exp(&self) -> Result<Tensor> {
        Tensor::apply(Op::LogSumExp, &[self])
    }
}
