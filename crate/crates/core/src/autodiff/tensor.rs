use std::fmt;
use std::sync::{Arc, Mutex, MutexGuard};

use super::ops::{self, Op};
use crate::error::{Error, Result};

/// Dense row-major `f64` array, optionally attached to a [`Graph`] node.
///
/// A tensor without a node is a constant: every gradient taken with respect
/// to it is zero. Cloning is cheap; the value buffer is shared.
#[derive(Clone)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Arc<[f64]>,
    node: Option<NodeRef>,
}

#[derive(Clone)]
pub(crate) struct NodeRef {
    pub(crate) graph: Graph,
    pub(crate) id: usize,
}

/// Append-only record of the operations applied to attached tensors.
///
/// Nodes only reference earlier nodes, so node order is a topological order.
/// Graphs are meant to be short-lived: build one per task or per outer step
/// and drop it together with every tensor attached to it.
#[derive(Clone, Default)]
pub struct Graph {
    inner: Arc<Mutex<Vec<Node>>>,
}

/// An input as captured when a node is recorded. It keeps the values and the
/// producing node id, but not the graph handle, so nodes never own their graph.
#[derive(Clone)]
pub(crate) struct Saved {
    pub(crate) id: Option<usize>,
    pub(crate) shape: Vec<usize>,
    pub(crate) data: Arc<[f64]>,
}

#[derive(Clone)]
pub(crate) struct Node {
    pub(crate) op: Op,
    pub(crate) inputs: Vec<Saved>,
    pub(crate) shape: Vec<usize>,
    pub(crate) data: Arc<[f64]>,
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tensor {
    pub fn from_vec(values: Vec<f64>, shape: &[usize]) -> Result<Self> {
        let expected = numel(shape);
        if expected != values.len() {
            return Err(Error::Structure {
                shape: shape.to_vec(),
                expected,
                actual: values.len(),
            });
        }
        Ok(Self::from_parts(shape.to_vec(), values.into()))
    }

    pub fn scalar(value: f64) -> Self {
        Self::from_parts(Vec::new(), Arc::from(vec![value]))
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, 1.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        Self::from_parts(shape.to_vec(), vec![value; numel(shape)].into())
    }

    pub(crate) fn from_parts(shape: Vec<usize>, data: Arc<[f64]>) -> Self {
        Tensor {
            shape,
            data,
            node: None,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.shape.is_empty()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> Result<f64> {
        if self.data.len() != 1 {
            return Err(Error::Contract(format!(
                "item() on tensor of shape {:?}",
                self.shape
            )));
        }
        Ok(self.data[0])
    }

    pub fn is_constant(&self) -> bool {
        self.node.is_none()
    }

    pub fn node_id(&self) -> Option<usize> {
        self.node.as_ref().map(|n| n.id)
    }

    pub fn graph(&self) -> Option<&Graph> {
        self.node.as_ref().map(|n| &n.graph)
    }

    /// Same values, no provenance.
    pub fn detach(&self) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.clone(),
            node: None,
        }
    }

    pub(crate) fn saved(&self) -> Saved {
        Saved {
            id: self.node_id(),
            shape: self.shape.clone(),
            data: self.data.clone(),
        }
    }

    /// Applies `op`, recording it when any input is attached.
    pub(crate) fn apply(op: Op, inputs: &[&Tensor]) -> Result<Tensor> {
        let mut graph: Option<&Graph> = None;
        for t in inputs {
            if let Some(node) = &t.node {
                match graph {
                    None => graph = Some(&node.graph),
                    Some(g) if g.same_as(&node.graph) => {}
                    Some(_) => return Err(Error::GraphMismatch),
                }
            }
        }
        let views: Vec<(&[usize], &[f64])> = inputs
            .iter()
            .map(|t| (t.shape.as_slice(), &t.data[..]))
            .collect();
        let (shape, values) = ops::forward(&op, &views)?;
        let data: Arc<[f64]> = values.into();
        match graph {
            None => Ok(Tensor::from_parts(shape, data)),
            Some(g) => {
                let node = Node {
                    op,
                    inputs: inputs.iter().map(|t| t.saved()).collect(),
                    shape: shape.clone(),
                    data: data.clone(),
                };
                let id = g.push(node);
                Ok(Tensor {
                    shape,
                    data,
                    node: Some(NodeRef {
                        graph: g.clone(),
                        id,
                    }),
                })
            }
        }
    }

    pub(crate) fn attached(shape: Vec<usize>, data: Arc<[f64]>, graph: &Graph, id: usize) -> Self {
        Tensor {
            shape,
            data,
            node: Some(NodeRef {
                graph: graph.clone(),
                id,
            }),
        }
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = f.debug_struct("Tensor");
        s.field("shape", &self.shape);
        if self.data.len() <= 16 {
            s.field("values", &&self.data[..]);
        } else {
            s.field("numel", &self.data.len());
        }
        s.field("node", &self.node_id()).finish()
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    fn lock(&self) -> MutexGuard<'_, Vec<Node>> {
        self.inner.lock().expect("graph mutex poisoned")
    }

    pub fn len(&self) -> usize {
        self.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn same_as(&self, other: &Graph) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner)
    }

    fn push(&self, node: Node) -> usize {
        let mut nodes = self.lock();
        nodes.push(node);
        nodes.len() - 1
    }

    /// Registers `value` as a differentiable leaf of this graph.
    pub fn leaf(&self, value: &Tensor) -> Tensor {
        let id = self.push(Node {
            op: Op::Leaf,
            inputs: Vec::new(),
            shape: value.shape.clone(),
            data: value.data.clone(),
        });
        Tensor::attached(value.shape.clone(), value.data.clone(), self, id)
    }

    pub fn variable(&self, values: Vec<f64>, shape: &[usize]) -> Result<Tensor> {
        Ok(self.leaf(&Tensor::from_vec(values, shape)?))
    }

    /// Copies of nodes `0..end`.
    pub(crate) fn snapshot(&self, end: usize) -> Vec<Node> {
        self.lock()[..end].to_vec()
    }

    /// Re-runs every recorded forward kernel on its saved inputs and reports
    /// whether all outputs are reproduced bit for bit.
    pub fn replay_matches(&self) -> bool {
        let nodes = self.snapshot(self.len());
        nodes.iter().all(|node| {
            if matches!(node.op, Op::Leaf) {
                return true;
            }
            let views: Vec<(&[usize], &[f64])> = node
                .inputs
                .iter()
                .map(|s| (s.shape.as_slice(), &s.data[..]))
                .collect();
            match ops::forward(&node.op, &views) {
                Ok((shape, values)) => {
                    shape == node.shape
                        && values
                            .iter()
                            .zip(node.data.iter())
                            .all(|(a, b)| a.to_bits() == b.to_bits())
                }
                Err(_) => false,
            }
        })
    }

    /// True when every node input references an earlier node.
    pub fn is_topological(&self) -> bool {
        let nodes = self.snapshot(self.len());
        nodes
            .iter()
            .enumerate()
            .all(|(i, n)| n.inputs.iter().all(|s| s.id.is_none_or(|j| j < i)))
    }
}

impl fmt::Debug for Graph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Graph").field("nodes", &self.len()).finish()
    }
}
