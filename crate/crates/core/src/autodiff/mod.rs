//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! Tensors carry an optional handle into a [`Graph`]. Operations on attached
//! tensors append nodes; [`grad`] walks the nodes in reverse. With
//! `create_graph` the backward pass is itself recorded, so the returned
//! gradients can be differentiated again.

mod loss;
mod ops;
mod tensor;

pub use loss::{mse, softmax_cross_entropy, LossKind};
pub use ops::{elementwise, reduce, ElementwiseOp, ReduceOp};
pub use tensor::{Graph, Tensor};

use crate::error::{Error, Result};

/// Which derivatives to take, and whether the result should stay
/// differentiable.
#[derive(Clone, Debug)]
pub struct GradRequest<'a> {
    pub output: &'a Tensor,
    pub inputs: &'a [Tensor],
    pub create_graph: bool,
}

impl<'a> GradRequest<'a> {
    pub fn new(output: &'a Tensor, inputs: &'a [Tensor]) -> Self {
        GradRequest {
            output,
            inputs,
            create_graph: false,
        }
    }

    pub fn create_graph(mut self, create_graph: bool) -> Self {
        self.create_graph = create_graph;
        self
    }

    pub fn compute(&self) -> Result<Vec<Tensor>> {
        grad(self.output, self.inputs, self.create_graph)
    }
}

/// `∂output/∂input` for every input, each shaped like its input.
///
/// Inputs that do not influence `output` (including constants) get exact
/// zeros. When `create_graph` is set every returned tensor is attached to the
/// output's graph.
pub fn grad(output: &Tensor, inputs: &[Tensor], create_graph: bool) -> Result<Vec<Tensor>> {
    if !output.is_scalar() {
        return Err(Error::Contract(format!(
            "gradient output must be a scalar, got shape {:?}",
            output.shape()
        )));
    }
    let Some(graph) = output.graph().cloned() else {
        return Ok(inputs.iter().map(|t| Tensor::zeros(t.shape())).collect());
    };
    for t in inputs {
        if let Some(g) = t.graph() {
            if !g.same_as(&graph) {
                return Err(Error::GraphMismatch);
            }
        }
    }
    let out_id = output.node_id().expect("attached output");
    let nodes = graph.snapshot(out_id + 1);

    // needs[i]: node i lies on a path from some requested input
    let mut needs = vec![false; nodes.len()];
    for t in inputs {
        if let Some(id) = t.node_id() {
            if id <= out_id {
                needs[id] = true;
            }
        }
    }
    for (i, node) in nodes.iter().enumerate() {
        if !needs[i] && node.inputs.iter().any(|s| s.id.is_some_and(|j| needs[j])) {
            needs[i] = true;
        }
    }

    let attach = |shape: &[usize], data, id: Option<usize>| match id {
        Some(id) if create_graph => Tensor::attached(shape.to_vec(), data, &graph, id),
        _ => Tensor::from_parts(shape.to_vec(), data),
    };

    let mut adjoint: Vec<Option<Tensor>> = vec![None; nodes.len()];
    if needs[out_id] {
        adjoint[out_id] = Some(Tensor::scalar(1.0));
    }
    for i in (0..nodes.len()).rev() {
        if !needs[i] {
            continue;
        }
        let Some(upstream) = adjoint[i].clone() else {
            continue;
        };
        let node = &nodes[i];
        if node.inputs.is_empty() {
            continue;
        }
        let operands: Vec<Tensor> = node
            .inputs
            .iter()
            .map(|s| attach(&s.shape, s.data.clone(), s.id))
            .collect();
        let result = attach(&node.shape, node.data.clone(), Some(i));
        let wanted: Vec<bool> = node
            .inputs
            .iter()
            .map(|s| s.id.is_some_and(|j| needs[j]))
            .collect();
        let local = ops::backward(&node.op, &operands, &result, &upstream, &wanted)?;
        for (k, contribution) in local.into_iter().enumerate() {
            let (Some(contribution), true) = (contribution, wanted[k]) else {
                continue;
            };
            let j = node.inputs[k].id.expect("wanted inputs are attached");
            adjoint[j] = Some(match adjoint[j].take() {
                None => contribution,
                Some(acc) => acc.add(&contribution)?,
            });
        }
    }

    inputs
        .iter()
        .map(|t| {
            let g = t
                .node_id()
                .filter(|&id| id <= out_id)
                .and_then(|id| adjoint[id].clone())
                .unwrap_or_else(|| Tensor::zeros(t.shape()));
            Ok(if create_graph && g.is_constant() {
                graph.leaf(&g)
            } else {
                g
            })
        })
        .collect()
}
