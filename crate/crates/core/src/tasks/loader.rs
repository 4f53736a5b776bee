use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{MetaDataset, SplitDataset, TaskData, TaskDescriptor, Targets};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::seed;

/// Above this many tasks a shuffled epoch draws ranks uniformly with
/// replacement instead of materializing a permutation.
pub const SAMPLING_THRESHOLD: u64 = 10_000_000;

/// Order in which one epoch visits task indices.
#[derive(Clone, Debug)]
pub enum TaskOrder {
    Sequential { next: u64, len: u64 },
    Permuted { order: Vec<u64>, next: usize },
    /// Uniform draws with replacement; an epoch still has `len` steps, and
    /// tasks may repeat within it.
    Sampled { rng: Box<ChaCha8Rng>, remaining: u64, len: u64 },
}

impl TaskOrder {
    pub fn new(len: u64, shuffle: bool, seed: u64) -> Self {
        if !shuffle {
            return TaskOrder::Sequential { next: 0, len };
        }
        let mut rng = seed::rng_for(seed, 0x6f72646572);
        if len > SAMPLING_THRESHOLD {
            TaskOrder::Sampled {
                rng: Box::new(rng),
                remaining: len,
                len,
            }
        } else {
            let mut order: Vec<u64> = (0..len).collect();
            order.shuffle(&mut rng);
            TaskOrder::Permuted { order, next: 0 }
        }
    }
}

impl Iterator for TaskOrder {
    type Item = u64;

    fn next(&mut self) -> Option<u64> {
        match self {
            TaskOrder::Sequential { next, len } => (*next < *len).then(|| {
                *next += 1;
                *next - 1
            }),
            TaskOrder::Permuted { order, next } => {
                let i = order.get(*next).copied();
                *next += 1;
                i
            }
            TaskOrder::Sampled {
                rng,
                remaining,
                len,
            } => (*remaining > 0).then(|| {
                *remaining -= 1;
                rng.random_range(0..*len)
            }),
        }
    }
}

/// Targets collated across a batch of tasks.
#[derive(Clone, Debug)]
pub enum BatchTargets {
    /// Row-major `[tasks, examples]` class positions.
    Labels { shape: [usize; 2], values: Vec<usize> },
    /// `[tasks, examples, ...target_shape]`
    Values(Tensor),
}

impl BatchTargets {
    pub fn shape(&self) -> Vec<usize> {
        match self {
            BatchTargets::Labels { shape, .. } => shape.to_vec(),
            BatchTargets::Values(t) => t.shape().to_vec(),
        }
    }
}

/// A batch of split tasks as dense tensors. Row `j` of every field belongs to
/// task `descriptors[j]`.
#[derive(Clone, Debug)]
pub struct TaskBatch {
    pub train_inputs: Tensor,
    pub train_targets: BatchTargets,
    pub test_inputs: Tensor,
    pub test_targets: BatchTargets,
    pub descriptors: Vec<TaskDescriptor>,
    pub indices: Vec<u64>,
}

fn row(t: &Tensor, j: usize) -> Result<Tensor> {
    let batch = t.shape()[0];
    let width = t.numel() / batch.max(1);
    Tensor::from_vec(t.values()[j * width..(j + 1) * width].to_vec(), &t.shape()[1..])
}

fn targets_row(t: &BatchTargets, j: usize) -> Result<Targets> {
    Ok(match t {
        BatchTargets::Labels { shape, values } => {
            Targets::Labels(values[j * shape[1]..(j + 1) * shape[1]].to_vec())
        }
        BatchTargets::Values(v) => Targets::Values(row(v, j)?),
    })
}

impl TaskBatch {
    pub fn len(&self) -> usize {
        self.descriptors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.descriptors.is_empty()
    }

    /// Support and query data of task `j`.
    pub fn task(&self, j: usize) -> Result<(TaskData, TaskData)> {
        if j >= self.len() {
            return Err(Error::Bounds {
                index: j as u64,
                len: self.len() as u64,
            });
        }
        Ok((
            TaskData {
                inputs: row(&self.train_inputs, j)?,
                targets: targets_row(&self.train_targets, j)?,
            },
            TaskData {
                inputs: row(&self.test_inputs, j)?,
                targets: targets_row(&self.test_targets, j)?,
            },
        ))
    }

    pub fn collate(parts: Vec<(TaskDescriptor, u64, TaskData, TaskData)>) -> Result<TaskBatch> {
        if parts.is_empty() {
            return Err(Error::Collation("no tasks to collate".into()));
        }
        let descriptors: Vec<TaskDescriptor> = parts.iter().map(|p| p.0.clone()).collect();
        let train: Vec<&TaskData> = parts.iter().map(|p| &p.2).collect();
        let test: Vec<&TaskData> = parts.iter().map(|p| &p.3).collect();
        Ok(TaskBatch {
            train_inputs: stack_inputs(&train, &descriptors)?,
            train_targets: stack_targets(&train, &descriptors)?,
            test_inputs: stack_inputs(&test, &descriptors)?,
            test_targets: stack_targets(&test, &descriptors)?,
            indices: parts.iter().map(|p| p.1).collect(),
            descriptors,
        })
    }
}

fn stack_inputs(parts: &[&TaskData], descriptors: &[TaskDescriptor]) -> Result<Tensor> {
    let shape = parts[0].inputs.shape();
    let mut values = Vec::with_capacity(parts[0].inputs.numel() * parts.len());
    for (d, desc) in parts.iter().zip(descriptors) {
        if d.inputs.shape() != shape {
            return Err(Error::Collation(format!(
                "task {desc} has input shape {:?}, batch has {shape:?}",
                d.inputs.shape()
            )));
        }
        values.extend_from_slice(d.inputs.values());
    }
    let mut full = vec![parts.len()];
    full.extend(shape);
    Tensor::from_vec(values, &full)
}

fn stack_targets(parts: &[&TaskData], descriptors: &[TaskDescriptor]) -> Result<BatchTargets> {
    let mismatch = |desc: &TaskDescriptor| Error::Collation(format!("task {desc} has incompatible targets"));
    match &parts[0].targets {
        Targets::Labels(first) => {
            let mut values = Vec::with_capacity(first.len() * parts.len());
            for (d, desc) in parts.iter().zip(descriptors) {
                match &d.targets {
                    Targets::Labels(l) if l.len() == first.len() => values.extend(l),
                    _ => return Err(mismatch(desc)),
                }
            }
            Ok(BatchTargets::Labels {
                shape: [parts.len(), first.len()],
                values,
            })
        }
        Targets::Values(first) => {
            let mut values = Vec::with_capacity(first.numel() * parts.len());
            for (d, desc) in parts.iter().zip(descriptors) {
                match &d.targets {
                    Targets::Values(v) if v.shape() == first.shape() => values.extend_from_slice(v.values()),
                    _ => return Err(mismatch(desc)),
                }
            }
            let mut full = vec![parts.len()];
            full.extend(first.shape());
            Ok(BatchTargets::Values(Tensor::from_vec(values, &full)?))
        }
    }
}

/// Iterates one epoch of a split meta-dataset as [`TaskBatch`]es.
///
/// Tasks of a batch are materialized in parallel; the emitted order is the
/// single-threaded order. The last batch may be smaller than `batch_size`.
pub struct BatchLoader<'a, D> {
    dataset: &'a SplitDataset<D>,
    batch_size: usize,
    order: TaskOrder,
}

impl<'a, D: MetaDataset> BatchLoader<'a, D> {
    pub fn new(dataset: &'a SplitDataset<D>, batch_size: usize, shuffle: bool, seed: u64) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        Ok(BatchLoader {
            dataset,
            batch_size,
            order: TaskOrder::new(dataset.num_tasks(), shuffle, seed),
        })
    }

    /// Loader for epoch `epoch`, with the shuffle stream keyed by `(seed, epoch)`.
    pub fn epoch(dataset: &'a SplitDataset<D>, batch_size: usize, shuffle: bool, seed: u64, epoch: u64) -> Result<Self> {
        Self::new(dataset, batch_size, shuffle, seed::mix(seed, epoch))
    }
}

impl<D: MetaDataset> Iterator for BatchLoader<'_, D> {
    type Item = Result<TaskBatch>;

    fn next(&mut self) -> Option<Result<TaskBatch>> {
        let indices: Vec<u64> = self.order.by_ref().take(self.batch_size).collect();
        if indices.is_empty() {
            return None;
        }
        let parts: Result<Vec<_>> = indices
            .par_iter()
            .map(|&i| {
                let split = self.dataset.get(i)?;
                Ok((split.descriptor.clone(), i, split.support()?, split.query()?))
            })
            .collect();
        Some(parts.and_then(TaskBatch::collate))
    }
}
