//! Meta-datasets: collections of tasks, each task a small dataset that is
//! split into a support part (for adaptation) and a query part (for
//! evaluation and meta-optimization), then collated into batches of tasks.

mod combination;
pub mod combinatorics;
mod loader;
mod splitter;

use std::fmt;
use std::sync::Arc;

pub use combination::CombinationDataset;
pub use combinatorics::{binomial, rank_combination, unrank_combination};
pub use loader::{BatchLoader, BatchTargets, TaskBatch, TaskOrder, SAMPLING_THRESHOLD};
pub use splitter::{ClassSplitter, SplitDataset};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::fewshot::ClassStore;
use crate::seed;
use crate::toy::ToyParams;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MetaSplit {
    Train,
    Val,
    Test,
}

impl MetaSplit {
    pub const ALL: [MetaSplit; 3] = [MetaSplit::Train, MetaSplit::Val, MetaSplit::Test];

    pub fn name(self) -> &'static str {
        match self {
            MetaSplit::Train => "train",
            MetaSplit::Val => "val",
            MetaSplit::Test => "test",
        }
    }

    pub(crate) fn code(self) -> u64 {
        match self {
            MetaSplit::Train => 1,
            MetaSplit::Val => 2,
            MetaSplit::Test => 3,
        }
    }
}

impl fmt::Display for MetaSplit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for MetaSplit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(MetaSplit::Train),
            "val" => Ok(MetaSplit::Val),
            "test" => Ok(MetaSplit::Test),
            other => Err(Error::Config(format!("unknown meta-split {other}"))),
        }
    }
}

/// Identifies a task uniquely.
#[derive(Clone, Debug, PartialEq)]
pub enum TaskDescriptor {
    /// Strictly increasing global class ids.
    Classes(Vec<usize>),
    Toy { index: u64, params: ToyParams },
}

impl TaskDescriptor {
    /// Hash used to key per-task random streams.
    pub fn stable_hash(&self) -> u64 {
        match self {
            TaskDescriptor::Classes(ids) => {
                seed::hash_words(std::iter::once(1).chain(ids.iter().map(|&c| c as u64)))
            }
            TaskDescriptor::Toy { index, params } => seed::hash_words(
                [2, *index]
                    .into_iter()
                    .chain(params.values().into_iter().map(f64::to_bits)),
            ),
        }
    }

    pub fn classes(&self) -> Option<&[usize]> {
        match self {
            TaskDescriptor::Classes(ids) => Some(ids),
            TaskDescriptor::Toy { .. } => None,
        }
    }
}

impl fmt::Display for TaskDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TaskDescriptor::Classes(ids) => {
                let ids: Vec<String> = ids.iter().map(ToString::to_string).collect();
                write!(f, "({})", ids.join(","))
            }
            TaskDescriptor::Toy { index, params } => write!(f, "#{index} {params}"),
        }
    }
}

/// Identity of one example within its task: the global class id (0 for
/// regression tasks) and the position within that class.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ExampleId {
    pub class: usize,
    pub index: usize,
}

#[derive(Clone)]
pub enum InputSource {
    Dense(Arc<[f64]>),
    /// Loaded from the store on access.
    Stored {
        store: Arc<ClassStore>,
        class: usize,
        index: usize,
    },
}

impl fmt::Debug for InputSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InputSource::Dense(v) => write!(f, "Dense({} values)", v.len()),
            InputSource::Stored { class, index, .. } => write!(f, "Stored({class}, {index})"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Target {
    /// Position of the example's class in the task descriptor.
    Class(usize),
    Values(Arc<[f64]>),
}

#[derive(Clone, Debug)]
pub struct Example {
    pub id: ExampleId,
    pub input: InputSource,
    pub target: Target,
}

impl Example {
    pub fn load_input(&self) -> Result<Arc<[f64]>> {
        match &self.input {
            InputSource::Dense(v) => Ok(v.clone()),
            InputSource::Stored {
                store,
                class,
                index,
            } => store.example(*class, *index),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TaskKind {
    Classification { n_way: usize },
    Regression,
}

/// All examples of one task, grouped by class in descriptor order.
#[derive(Clone, Debug)]
pub struct TaskDataset {
    pub descriptor: TaskDescriptor,
    pub kind: TaskKind,
    pub input_shape: Vec<usize>,
    /// Shape of one regression target; empty for classification.
    pub target_shape: Vec<usize>,
    pub examples: Vec<Example>,
}

impl TaskDataset {
    /// Examples per class position (a single count for regression tasks).
    pub fn class_counts(&self) -> Vec<usize> {
        match self.kind {
            TaskKind::Regression => vec![self.examples.len()],
            TaskKind::Classification { n_way } => {
                let mut counts = vec![0; n_way];
                for e in &self.examples {
                    if let Target::Class(c) = e.target {
                        counts[c] += 1;
                    }
                }
                counts
            }
        }
    }
}

/// A dataset of tasks.
pub trait MetaDataset: Send + Sync {
    fn num_tasks(&self) -> u64;

    fn meta_split(&self) -> MetaSplit;

    /// Deterministic in `index` (and the dataset's construction seed).
    fn get_task(&self, index: u64) -> Result<TaskDataset>;

    fn task_kind(&self) -> TaskKind;
}

impl<D: MetaDataset + ?Sized> MetaDataset for Arc<D> {
    fn num_tasks(&self) -> u64 {
        (**self).num_tasks()
    }

    fn meta_split(&self) -> MetaSplit {
        (**self).meta_split()
    }

    fn get_task(&self, index: u64) -> Result<TaskDataset> {
        (**self).get_task(index)
    }

    fn task_kind(&self) -> TaskKind {
        (**self).task_kind()
    }
}

pub(crate) fn check_index(index: u64, len: u64) -> Result<()> {
    if index >= len {
        return Err(Error::Bounds { index, len });
    }
    Ok(())
}

/// One task's disjoint support (`train`) and query (`test`) parts.
#[derive(Clone, Debug)]
pub struct SplitTask {
    pub descriptor: TaskDescriptor,
    pub kind: TaskKind,
    pub input_shape: Vec<usize>,
    pub target_shape: Vec<usize>,
    pub train: Vec<Example>,
    pub test: Vec<Example>,
}

/// Dense inputs and targets for one part of a task.
#[derive(Clone, Debug)]
pub struct TaskData {
    /// `[n, ...input_shape]`
    pub inputs: Tensor,
    pub targets: Targets,
}

#[derive(Clone, Debug)]
pub enum Targets {
    Labels(Vec<usize>),
    /// `[n, ...target_shape]`
    Values(Tensor),
}

impl TaskData {
    pub fn len(&self) -> usize {
        self.inputs.shape().first().copied().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Inputs reshaped to `[n, features]` for fully connected models.
    pub fn flat_inputs(&self) -> Result<Tensor> {
        let n = self.len();
        let features = self.inputs.numel() / n.max(1);
        self.inputs.reshape(&[n, features])
    }
}

impl SplitTask {
    pub fn support(&self) -> Result<TaskData> {
        self.collate(&self.train)
    }

    pub fn query(&self) -> Result<TaskData> {
        self.collate(&self.test)
    }

    fn collate(&self, part: &[Example]) -> Result<TaskData> {
        let mut inputs = Vec::new();
        for e in part {
            inputs.extend_from_slice(&e.load_input()?);
        }
        let mut shape = vec![part.len()];
        shape.extend(&self.input_shape);
        let inputs = Tensor::from_vec(inputs, &shape)
            .map_err(|e| Error::Collation(format!("task {}: {e}", self.descriptor)))?;
        let targets = match self.kind {
            TaskKind::Classification { .. } => Targets::Labels(
                part.iter()
                    .map(|e| match e.target {
                        Target::Class(c) => Ok(c),
                        Target::Values(_) => Err(Error::Collation("mixed target kinds".into())),
                    })
                    .collect::<Result<_>>()?,
            ),
            TaskKind::Regression => {
                let mut values = Vec::new();
                for e in part {
                    match &e.target {
                        Target::Values(v) => values.extend_from_slice(v),
                        Target::Class(_) => return Err(Error::Collation("mixed target kinds".into())),
                    }
                }
                let mut shape = vec![part.len()];
                shape.extend(&self.target_shape);
                Targets::Values(
                    Tensor::from_vec(values, &shape).map_err(|e| Error::Collation(e.to_string()))?,
                )
            }
        };
        Ok(TaskData { inputs, targets })
    }
}
