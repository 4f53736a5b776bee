//! Model-agnostic meta-learning on top of [`MetaModule`] substitution.
//!
//! The inner loop adapts a copy of the parameters with plain gradient steps
//! on a task's support set; the outer loop differentiates the query loss of
//! the adapted parameters back to the stored ones, through the adaptation
//! unless `first_order` is set.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;

use crate::autodiff::{grad, mse, softmax_cross_entropy, Graph, Tensor};
use crate::error::{Error, Result};
use crate::nn::{sgd_step, MetaModule, ParamSet};
use crate::tasks::{BatchLoader, MetaDataset, MetaSplit, SplitDataset, SplitTask, TaskBatch, TaskData, TaskOrder, Targets};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MamlConfig {
    pub inner_lr: f64,
    pub outer_lr: f64,
    pub inner_steps: usize,
    pub first_order: bool,
    pub meta_batch_size: usize,
    pub total_outer_steps: usize,
    pub seed: u64,
}

impl Default for MamlConfig {
    fn default() -> Self {
        MamlConfig {
            inner_lr: 0.01,
            outer_lr: 0.001,
            inner_steps: 1,
            first_order: false,
            meta_batch_size: 4,
            total_outer_steps: 2000,
            seed: 0,
        }
    }
}

impl MamlConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.inner_lr >= 0.0 && self.inner_lr.is_finite()) {
            return Err(Error::Config(format!("inner learning rate {} must be non-negative", self.inner_lr)));
        }
        if !(self.outer_lr > 0.0 && self.outer_lr.is_finite()) {
            return Err(Error::Config(format!("outer learning rate {} must be positive", self.outer_lr)));
        }
        if self.inner_steps == 0 {
            return Err(Error::Config("at least one inner step is required".into()));
        }
        if self.meta_batch_size == 0 {
            return Err(Error::Config("meta-batch size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Mean squared error for regression targets, softmax cross-entropy for labels.
pub fn task_loss(predictions: &Tensor, targets: &Targets) -> Result<Tensor> {
    match targets {
        Targets::Labels(labels) => softmax_cross_entropy(predictions, labels),
        Targets::Values(values) => mse(predictions, values),
    }
}

/// Fraction of rows whose arg-max matches the label.
pub fn accuracy(logits: &Tensor, labels: &[usize]) -> f64 {
    let classes = logits.shape().last().copied().unwrap_or(1).max(1);
    let hits = logits
        .values()
        .chunks(classes)
        .zip(labels)
        .filter(|(row, &label)| {
            let best = row
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
            best.0 == label
        })
        .count();
    hits as f64 / labels.len().max(1) as f64
}

/// Inner-loop adaptation on `support`, starting from the module's stored
/// parameters. Without `first_order` every step is recorded so the result
/// stays differentiable with respect to the stored parameters.
///
/// A module whose parameters are not on any graph is adapted on a private
/// graph and the result comes back detached.
pub fn adapt_on<M: MetaModule>(module: &M, support: &TaskData, config: &MamlConfig) -> Result<ParamSet> {
    if module.named_parameters().iter().all(|(_, t)| t.is_constant()) {
        let bound = module.attach(&Graph::new())?;
        let first_order = MamlConfig {
            first_order: true,
            ..*config
        };
        return Ok(adapt_on(&bound, support, &first_order)?.detach());
    }
    let inputs = support.flat_inputs()?;
    let create_graph = !config.first_order;
    let mut params = module.named_parameters();
    for _ in 0..config.inner_steps {
        let loss = task_loss(&module.forward(&inputs, Some(&params))?, &support.targets)?;
        let grads = grad(&loss, &params.tensors(), create_graph)?;
        params = sgd_step(&params, &params.with_tensors(grads)?, config.inner_lr, create_graph)?;
    }
    Ok(params)
}

/// [`adapt_on`] applied to the support part of a split task.
pub fn adapt<M: MetaModule>(module: &M, task: &SplitTask, config: &MamlConfig) -> Result<ParamSet> {
    adapt_on(module, &task.support()?, config)
}

/// Per-task quantities of one outer step.
#[derive(Clone, Debug)]
pub struct TaskGradient {
    /// Query loss after adaptation.
    pub outer_loss: f64,
    /// Support loss before adaptation.
    pub pre_adapt_loss: f64,
    /// Support loss after adaptation.
    pub post_adapt_loss: f64,
    /// `∂ outer_loss / ∂ stored parameters`, in parameter order.
    pub gradient: Vec<Vec<f64>>,
}

/// Outer loss and meta-gradient of a single task, on a fresh graph.
pub fn task_meta_gradient<M: MetaModule>(module: &M, support: &TaskData, query: &TaskData, config: &MamlConfig) -> Result<TaskGradient> {
    let graph = Graph::new();
    let bound = module.attach(&graph)?;
    let leaves = bound.named_parameters().tensors();
    let support_x = support.flat_inputs()?;
    let pre = task_loss(&module.forward(&support_x, None)?, &support.targets)?.item()?;
    let adapted = adapt_on(&bound, support, config)?;
    let post = task_loss(&module.forward(&support_x, Some(&adapted.detach()))?, &support.targets)?.item()?;
    let outer = task_loss(&bound.forward(&query.flat_inputs()?, Some(&adapted))?, &query.targets)?;
    let gradient = grad(&outer, &leaves, false)?
        .into_iter()
        .map(|g| g.values().to_vec())
        .collect();
    Ok(TaskGradient {
        outer_loss: outer.item()?,
        pre_adapt_loss: pre,
        post_adapt_loss: post,
        gradient,
    })
}

#[derive(Clone, Debug)]
pub struct OuterStep<M> {
    pub module: M,
    /// Mean over tasks of the post-adaptation query loss.
    pub outer_loss: f64,
    pub pre_adapt_loss: f64,
    pub post_adapt_loss: f64,
    /// Mean meta-gradient that was applied.
    pub meta_gradient: ParamSet,
}

/// Mean meta-gradient over a batch. Tasks run in parallel; their results are
/// summed in task order, so the outcome does not depend on scheduling.
pub fn batch_meta_gradient<M>(module: &M, batch: &TaskBatch, config: &MamlConfig) -> Result<(f64, f64, f64, ParamSet)>
where
    M: MetaModule + Sync,
{
    if batch.is_empty() {
        return Err(Error::Contract("outer step on an empty batch".into()));
    }
    let per_task: Vec<TaskGradient> = (0..batch.len())
        .into_par_iter()
        .map(|j| {
            let (support, query) = batch.task(j)?;
            task_meta_gradient(module, &support, &query, config)
        })
        .collect::<Result<_>>()?;
    let stored = module.named_parameters();
    let n = per_task.len() as f64;
    let mut sums: Vec<Vec<f64>> = stored.iter().map(|(_, t)| vec![0.0; t.numel()]).collect();
    let (mut outer, mut pre, mut post) = (0.0, 0.0, 0.0);
    for task in &per_task {
        outer += task.outer_loss;
        pre += task.pre_adapt_loss;
        post += task.post_adapt_loss;
        for (acc, g) in sums.iter_mut().zip(&task.gradient) {
            for (a, v) in acc.iter_mut().zip(g) {
                *a += v;
            }
        }
    }
    let mean = stored.with_tensors(
        sums.into_iter()
            .zip(stored.iter())
            .map(|(s, (_, t))| Tensor::from_vec(s.into_iter().map(|v| v / n).collect(), t.shape()))
            .collect::<Result<_>>()?,
    )?;
    Ok((outer / n, pre / n, post / n, mean))
}

/// One meta-update with plain gradient descent at `outer_lr`.
pub fn outer_step<M>(module: &M, batch: &TaskBatch, config: &MamlConfig) -> Result<OuterStep<M>>
where
    M: MetaModule + Sync,
{
    let (outer_loss, pre_adapt_loss, post_adapt_loss, meta_gradient) = batch_meta_gradient(module, batch, config)?;
    let updated = sgd_step(&module.named_parameters().detach(), &meta_gradient, config.outer_lr, false)?;
    Ok(OuterStep {
        module: module.with_parameters(&updated)?,
        outer_loss,
        pre_adapt_loss,
        post_adapt_loss,
        meta_gradient,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub outer_loss: f64,
    pub pre_adapt_loss: f64,
    pub post_adapt_loss: f64,
    pub wall_ms: f64,
}

#[derive(Clone, Debug, Default)]
pub struct TrainReport {
    pub records: Vec<StepRecord>,
    pub evaluation: Option<EvalSummary>,
}

pub const REPORT_HEADER: &str = "step,outer_loss,pre_adapt_loss,post_adapt_loss,wall_ms";

impl TrainReport {
    pub fn outer_losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.outer_loss).collect()
    }

    /// CSV with [`REPORT_HEADER`]; losses use the shortest representation
    /// that parses back to the same `f64`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{REPORT_HEADER}")?;
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{},{:.3}",
                r.step, r.outer_loss, r.pre_adapt_loss, r.post_adapt_loss, r.wall_ms
            )?;
        }
        Ok(())
    }
}

/// Runs `total_outer_steps` outer steps over shuffled epochs of `dataset`.
pub fn meta_train<D, M>(dataset: &SplitDataset<D>, module: M, config: &MamlConfig) -> Result<(M, TrainReport)>
where
    D: MetaDataset,
    M: MetaModule + Sync,
{
    config.validate()?;
    let mut module = module;
    let mut report = TrainReport::default();
    let mut epoch = 0u64;
    while report.records.len() < config.total_outer_steps {
        let loader = BatchLoader::epoch(dataset, config.meta_batch_size, true, config.seed, epoch)?;
        for batch in loader {
            if report.records.len() >= config.total_outer_steps {
                break;
            }
            let start = Instant::now();
            let step = outer_step(&module, &batch?, config)?;
            module = step.module;
            report.records.push(StepRecord {
                step: report.records.len(),
                outer_loss: step.outer_loss,
                pre_adapt_loss: step.pre_adapt_loss,
                post_adapt_loss: step.post_adapt_loss,
                wall_ms: start.elapsed().as_secs_f64() * 1e3,
            });
        }
        epoch += 1;
        if dataset.num_tasks() == 0 {
            return Err(Error::Config("cannot train on an empty meta-dataset".into()));
        }
    }
    Ok((module, report))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalConfig {
    pub num_tasks: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            num_tasks: 100,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len().max(1) as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        MeanStd { mean, std: var.sqrt() }
    }
}

/// Query-set metrics of one evaluated task.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TaskEval {
    pub index: u64,
    pub pre_loss: f64,
    pub post_loss: f64,
    pub pre_accuracy: Option<f64>,
    pub post_accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalSummary {
    pub tasks: Vec<TaskEval>,
    pub pre_loss: MeanStd,
    pub post_loss: MeanStd,
    pub pre_accuracy: Option<MeanStd>,
    pub post_accuracy: Option<MeanStd>,
    /// Fraction of tasks whose query loss dropped after adaptation.
    pub improved_fraction: f64,
}

/// Adapts on each task's support set and measures the query set, before
/// and after adaptation, over `eval.num_tasks` tasks chosen by `eval.seed`.
pub fn evaluate_task<M: MetaModule>(module: &M, index: u64, task: &SplitTask, config: &MamlConfig) -> Result<TaskEval> {
    let support = task.support()?;
    let adapted = adapt_on(module, &support, config)?;
    let query = task.query()?;
    let qx = query.flat_inputs()?;
    let before = module.forward(&qx, None)?;
    let after = module.forward(&qx, Some(&adapted))?;
    let (pre_accuracy, post_accuracy) = match &query.targets {
        Targets::Labels(l) => (Some(accuracy(&before, l)), Some(accuracy(&after, l))),
        Targets::Values(_) => (None, None),
    };
    Ok(TaskEval {
        index,
        pre_loss: task_loss(&before, &query.targets)?.item()?,
        post_loss: task_loss(&after, &query.targets)?.item()?,
        pre_accuracy,
        post_accuracy,
    })
}

pub fn evaluate<D, M>(dataset: &SplitDataset<D>, module: &M, config: &MamlConfig, eval: &EvalConfig) -> Result<EvalSummary>
where
    D: MetaDataset,
    M: MetaModule + Sync,
{
    if dataset.inner().meta_split() == MetaSplit::Train {
        return Err(Error::Contract("evaluation needs a held-out (val or test) meta-split".into()));
    }
    let module = module.with_parameters(&module.named_parameters().detach())?;
    // adaptation values do not depend on whether the steps are recorded
    let config = MamlConfig {
        first_order: true,
        ..*config
    };
    let indices: Vec<u64> = TaskOrder::new(dataset.num_tasks(), true, eval.seed)
        .take(eval.num_tasks)
        .collect();
    let tasks: Vec<TaskEval> = indices
        .par_iter()
        .map(|&i| evaluate_task(&module, i, &dataset.get(i)?, &config))
        .collect::<Result<_>>()?;
    let col = |f: &dyn Fn(&TaskEval) -> f64| tasks.iter().map(f).collect::<Vec<_>>();
    let has_accuracy = tasks.first().is_some_and(|t| t.post_accuracy.is_some());
    Ok(EvalSummary {
        pre_loss: MeanStd::of(&col(&|t| t.pre_loss)),
        post_loss: MeanStd::of(&col(&|t| t.post_loss)),
        pre_accuracy: has_accuracy.then(|| MeanStd::of(&col(&|t| t.pre_accuracy.unwrap_or(0.0)))),
        post_accuracy: has_accuracy.then(|| MeanStd::of(&col(&|t| t.post_accuracy.unwrap_or(0.0)))),
        improved_fraction: tasks.iter().filter(|t| t.post_loss < t.pre_loss).count() as f64 / tasks.len().max(1) as f64,
        tasks,
    })
}
