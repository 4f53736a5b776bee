use std::sync::Arc;

use super::{
    check_index, combinatorics, Example, ExampleId, InputSource, MetaDataset, MetaSplit, Target,
    TaskDataset, TaskDescriptor, TaskKind,
};
use crate::error::{Error, Result};
use crate::fewshot::ClassStore;

/// N-way classification tasks: task `i` is the `i`-th N-subset of the store's
/// class pool in lexicographic order, with labels given by each class's
/// position in that subset.
#[derive(Clone, Debug)]
pub struct CombinationDataset {
    store: Arc<ClassStore>,
    n_way: usize,
    num_tasks: u64,
}

impl CombinationDataset {
    pub fn new(store: Arc<ClassStore>, n_way: usize) -> Result<Self> {
        let pool = store.num_classes();
        if n_way == 0 || pool < n_way {
            return Err(Error::Config(format!(
                "{n_way}-way tasks need at least {n_way} classes, the {} pool has {pool}",
                store.meta_split()
            )));
        }
        let num_tasks = combinatorics::binomial(pool, n_way)
            .ok_or_else(|| Error::Config(format!("C({pool}, {n_way}) overflows 64 bits")))?;
        Ok(CombinationDataset {
            store,
            n_way,
            num_tasks,
        })
    }

    pub fn n_way(&self) -> usize {
        self.n_way
    }

    pub fn store(&self) -> &Arc<ClassStore> {
        &self.store
    }

    pub fn descriptor(&self, index: u64) -> Result<TaskDescriptor> {
        check_index(index, self.num_tasks)?;
        combinatorics::unrank_combination(index, self.store.num_classes(), self.n_way)
            .map(TaskDescriptor::Classes)
    }
}

impl MetaDataset for CombinationDataset {
    fn num_tasks(&self) -> u64 {
        self.num_tasks
    }

    fn meta_split(&self) -> MetaSplit {
        self.store.meta_split()
    }

    fn task_kind(&self) -> TaskKind {
        TaskKind::Classification { n_way: self.n_way }
    }

    fn get_task(&self, index: u64) -> Result<TaskDataset> {
        let descriptor = self.descriptor(index)?;
        let classes = descriptor.classes().expect("combination descriptor").to_vec();
        let mut examples = Vec::new();
        for (position, &class) in classes.iter().enumerate() {
            for i in 0..self.store.example_count(class) {
                examples.push(Example {
                    id: ExampleId { class, index: i },
                    input: InputSource::Stored {
                        store: self.store.clone(),
                        class,
                        index: i,
                    },
                    target: Target::Class(position),
                });
            }
        }
        Ok(TaskDataset {
            descriptor,
            kind: self.task_kind(),
            input_shape: self.store.input_shape().to_vec(),
            target_shape: Vec::new(),
            examples,
        })
    }
}
