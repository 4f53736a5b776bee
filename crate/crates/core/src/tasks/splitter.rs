use rand::seq::SliceRandom;

use super::{Example, MetaDataset, SplitTask, Target, TaskDataset, TaskKind};
use crate::error::{Error, Result};
use crate::seed;

/// Splits every class of a task into `k_train` support and `k_test` query
/// examples. Regression tasks are treated as a single class.
///
/// With `shuffle`, each class's examples are permuted first by a stream keyed
/// on `(seed, descriptor)`, so a task's split does not depend on which other
/// tasks were visited before it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ClassSplitter {
    pub k_train: usize,
    pub k_test: usize,
    pub shuffle: bool,
    pub seed: u64,
}

impl ClassSplitter {
    pub fn new(k_train: usize, k_test: usize) -> Self {
        ClassSplitter {
            k_train,
            k_test,
            shuffle: true,
            seed: 0,
        }
    }

    pub fn shuffle(mut self, shuffle: bool) -> Self {
        self.shuffle = shuffle;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn split(&self, task: &TaskDataset) -> Result<SplitTask> {
        let groups: Vec<Vec<&Example>> = match task.kind {
            TaskKind::Regression => vec![task.examples.iter().collect()],
            TaskKind::Classification { n_way } => {
                let mut groups = vec![Vec::new(); n_way];
                for e in &task.examples {
                    match e.target {
                        Target::Class(c) if c < n_way => groups[c].push(e),
                        _ => {
                            return Err(Error::Validation(format!(
                                "example {:?} has no valid class position",
                                e.id
                            )))
                        }
                    }
                }
                groups
            }
        };
        let need = self.k_train + self.k_test;
        let mut rng = seed::rng_for(self.seed, task.descriptor.stable_hash());
        let mut train = Vec::with_capacity(groups.len() * self.k_train);
        let mut test = Vec::with_capacity(groups.len() * self.k_test);
        for (position, mut group) in groups.into_iter().enumerate() {
            if group.len() < need {
                let class = match task.descriptor.classes() {
                    Some(ids) => format!("{} (position {position})", ids[position]),
                    None => format!("task {}", task.descriptor),
                };
                return Err(Error::InsufficientExamples {
                    class,
                    available: group.len(),
                    required: need,
                });
            }
            if self.shuffle {
                group.shuffle(&mut rng);
            }
            train.extend(group[..self.k_train].iter().map(|&e| e.clone()));
            test.extend(group[self.k_train..need].iter().map(|&e| e.clone()));
        }
        Ok(SplitTask {
            descriptor: task.descriptor.clone(),
            kind: task.kind,
            input_shape: task.input_shape.clone(),
            target_shape: task.target_shape.clone(),
            train,
            test,
        })
    }
}

/// A meta-dataset whose tasks come out already split.
#[derive(Clone, Debug)]
pub struct SplitDataset<D> {
    inner: D,
    splitter: ClassSplitter,
}

impl<D: MetaDataset> SplitDataset<D> {
    pub fn new(inner: D, splitter: ClassSplitter) -> Self {
        SplitDataset { inner, splitter }
    }

    pub fn inner(&self) -> &D {
        &self.inner
    }

    pub fn splitter(&self) -> &ClassSplitter {
        &self.splitter
    }

    pub fn num_tasks(&self) -> u64 {
        self.inner.num_tasks()
    }

    pub fn get(&self, index: u64) -> Result<SplitTask> {
        self.splitter.split(&self.inner.get_task(index)?)
    }
}
