//! Meta-learning toolkit: meta-datasets of few-shot tasks, a higher-order
//! reverse-mode autodiff engine, parameter-substituting network modules and
//! a MAML trainer built from them.

pub mod autodiff;
pub mod error;
pub mod fewshot;
pub mod maml;
pub mod nn;
pub mod seed;
pub mod tasks;
pub mod toy;

pub use autodiff::{grad, GradRequest, Graph, Tensor};
pub use error::{Error, Result};
pub use nn::{MetaModule, ParamSet};
pub use tasks::{MetaDataset, MetaSplit, SplitTask, TaskBatch, TaskDescriptor};
