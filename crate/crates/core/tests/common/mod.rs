#![allow(dead_code)]

pub mod ops;

use std::path::Path;
use std::sync::Arc;

use metatask::autodiff::{grad, Graph, Tensor};
use metatask::fewshot::{generate_synthetic_corpus, ingest_directory, DatasetManifest, SyntheticSpec, MANIFEST_FILE};
use metatask::maml::{adapt_on, task_loss, MamlConfig};
use metatask::nn::{MetaModule, MetaSequential, ParamSet};
use metatask::tasks::{CombinationDataset, TaskData, Targets};
use metatask::{MetaSplit, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;
pub const FD_ABS: f64 = 1e-6;
pub const FD_REL: f64 = 1e-5;

pub type TensorFn = dyn Fn(&[Tensor]) -> Result<Tensor>;

pub fn tensor(values: Vec<f64>, shape: &[usize]) -> Tensor {
    Tensor::from_vec(values, shape).unwrap()
}

pub fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    tensor((0..n).map(|_| rng.random_range(lo..hi)).collect(), shape)
}

/// Reduces any output to a scalar with fixed, non-uniform weights so every
/// output element contributes a distinct amount.
fn weighted_sum(out: &Tensor) -> Result<Tensor> {
    let w: Vec<f64> = (0..out.numel()).map(|i| 0.5 + 0.37 * ((i * 7 % 11) as f64)).collect();
    out.mul(&Tensor::from_vec(w, out.shape())?)?.sum()
}

/// Central differences of `weighted_sum(f(inputs))` against reverse mode.
/// Returns the worst violation of `|ad - fd| <= abs + rel·|fd|`, or `Ok`.
pub fn check_first_order(f: &TensorFn, inputs: &[Tensor], abs: f64, rel: f64) -> std::result::Result<(), String> {
    let graph = Graph::new();
    let leaves: Vec<Tensor> = inputs.iter().map(|t| graph.leaf(t)).collect();
    let out = weighted_sum(&f(&leaves).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let analytic = grad(&out, &leaves, false).map_err(|e| e.to_string())?;
    let eval = |xs: &[Tensor]| weighted_sum(&f(xs).unwrap()).unwrap().item().unwrap();
    for (i, input) in inputs.iter().enumerate() {
        for j in 0..input.numel() {
            let mut plus = inputs.to_vec();
            let mut minus = inputs.to_vec();
            plus[i] = bump(input, j, FD_STEP);
            minus[i] = bump(input, j, -FD_STEP);
            let fd = (eval(&plus) - eval(&minus)) / (2.0 * FD_STEP);
            let ad = analytic[i].values()[j];
            if (ad - fd).abs() > abs + rel * fd.abs() {
                return Err(format!("input {i} element {j}: analytic {ad}, numeric {fd}"));
            }
        }
    }
    Ok(())
}

/// Checks the gradient of `v·∇f` (built with `create_graph`) against central
/// differences of the analytic first derivative.
pub fn check_second_order(f: &TensorFn, inputs: &[Tensor], abs: f64, rel: f64) -> std::result::Result<(), String> {
    let first = |xs: &[Tensor], create_graph: bool| -> Result<(Vec<Tensor>, Vec<Tensor>)> {
        let graph = Graph::new();
        let leaves: Vec<Tensor> = xs.iter().map(|t| graph.leaf(t)).collect();
        let out = weighted_sum(&f(&leaves)?)?;
        Ok((grad(&out, &leaves, create_graph)?, leaves))
    };
    let directional = |gs: &[Tensor]| -> Result<Tensor> {
        let mut total = Tensor::scalar(0.0);
        for g in gs {
            total = total.add(&weighted_sum(g)?)?;
        }
        Ok(total)
    };
    let (gs, leaves) = first(inputs, true).map_err(|e| e.to_string())?;
    let hvp = grad(&directional(&gs).map_err(|e| e.to_string())?, &leaves, false).map_err(|e| e.to_string())?;
    let eval = |xs: &[Tensor]| directional(&first(xs, false).unwrap().0).unwrap().item().unwrap();
    for (i, input) in inputs.iter().enumerate() {
        for j in 0..input.numel() {
            let mut plus = inputs.to_vec();
            let mut minus = inputs.to_vec();
            plus[i] = bump(input, j, FD_STEP);
            minus[i] = bump(input, j, -FD_STEP);
            let fd = (eval(&plus) - eval(&minus)) / (2.0 * FD_STEP);
            let ad = hvp[i].values()[j];
            if (ad - fd).abs() > abs + rel * fd.abs() {
                return Err(format!("input {i} element {j}: analytic {ad}, numeric {fd}"));
            }
        }
    }
    Ok(())
}

pub fn bump(t: &Tensor, j: usize, h: f64) -> Tensor {
    let mut v = t.values().to_vec();
    v[j] += h;
    tensor(v, t.shape())
}

pub fn regression_data(rng: &mut ChaCha8Rng, n: usize) -> TaskData {
    let x = uniform(rng, &[n, 1], -2.0, 2.0);
    let y = tensor(x.values().iter().map(|v| 1.3 * (v + 0.4).sin()).collect(), &[n, 1]);
    TaskData {
        inputs: x,
        targets: Targets::Values(y),
    }
}

/// Query loss after adaptation, as a plain function of the stored
/// parameters: the black-box pipeline used as a finite-difference oracle.
pub fn composite_outer_loss(module: &MetaSequential, params: &ParamSet, support: &TaskData, query: &TaskData, config: &MamlConfig) -> f64 {
    let start = module.with_parameters(params).unwrap();
    let adapted = adapt_on(&start, support, config).unwrap();
    let pred = start.forward(&query.flat_inputs().unwrap(), Some(&adapted)).unwrap();
    task_loss(&pred, &query.targets).unwrap().item().unwrap()
}

/// Central differences of [`composite_outer_loss`] for every stored value,
/// in parameter order.
pub fn composite_fd_gradient(module: &MetaSequential, support: &TaskData, query: &TaskData, config: &MamlConfig) -> Vec<Vec<f64>> {
    let params = module.named_parameters();
    let paths = params.paths();
    paths
        .iter()
        .map(|path| {
            let t = params.get(path).unwrap();
            (0..t.numel())
                .map(|j| {
                    let with = |h: f64| {
                        let mut p = ParamSet::new();
                        for (q, v) in params.iter() {
                            p.insert(q, if q == path { bump(v, j, h) } else { v.clone() }).unwrap();
                        }
                        composite_outer_loss(module, &p, support, query, config)
                    };
                    (with(FD_STEP) - with(-FD_STEP)) / (2.0 * FD_STEP)
                })
                .collect()
        })
        .collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Writes (or reuses) a synthetic corpus under `dir` and returns its manifest.
pub fn synthetic_corpus(dir: &Path, spec: &SyntheticSpec) -> DatasetManifest {
    let manifest = dir.join(MANIFEST_FILE);
    if manifest.exists() {
        return DatasetManifest::load(&manifest).unwrap();
    }
    generate_synthetic_corpus(dir, spec).unwrap()
}

pub fn combination_split(dir: &Path, manifest: &DatasetManifest, split: MetaSplit, n_way: usize) -> CombinationDataset {
    let store = ingest_directory(dir, manifest, split).unwrap();
    CombinationDataset::new(Arc::new(store), n_way).unwrap()
}

/// Largest elementwise difference, relative to the largest reference magnitude.
pub fn max_relative_error(actual: &[Vec<f64>], reference: &[Vec<f64>]) -> f64 {
    let scale = reference.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let diff = actual
        .iter()
        .flatten()
        .zip(reference.iter().flatten())
        .fold(0.0f64, |m, (a, r)| m.max((a - r).abs()));
    diff / scale
}

/// A `sizes`-shaped tanh MLP with one regression task drawn from `seed`.
pub fn tanh_net_and_task(sizes: &[usize], seed: u64, shots: usize, queries: usize) -> (MetaSequential, TaskData, TaskData) {
    let module = MetaSequential::mlp(sizes, metatask::nn::Activation::Tanh, seed).unwrap();
    let mut r = rng(seed);
    (module, regression_data(&mut r, shots), regression_data(&mut r, queries))
}

/// In-memory store whose example `e` of class `c` is filled with `c + e/1000`.
pub fn memory_store(split: MetaSplit, classes: usize, per_class: usize, shape: &[usize]) -> metatask::fewshot::ClassStore {
    let n: usize = shape.iter().product();
    let data = (0..classes)
        .map(|c| {
            let examples = (0..per_class).map(|e| vec![c as f64 + e as f64 / 1000.0; n]).collect();
            (format!("class_{c:03}"), examples)
        })
        .collect();
    metatask::fewshot::ClassStore::from_classes(split, shape.to_vec(), data).unwrap()
}

/// Checks support/query disjointness, per-class counts and the label
/// convention over `trials` random tasks, each split with its own seed.
pub fn check_split_disjointness(trials: u64) -> std::result::Result<(), String> {
    use metatask::tasks::{ClassSplitter, Target};
    use metatask::MetaDataset;
    let store = Arc::new(memory_store(MetaSplit::Train, 30, 20, &[1, 1, 1]));
    let ds = CombinationDataset::new(store, 5).unwrap();
    let mut r = rng(0x5eed);
    for trial in 0..trials {
        let (k_train, k_test) = (r.random_range(1..=5), r.random_range(1..=15));
        let splitter = ClassSplitter::new(k_train, k_test).seed(r.random::<u64>());
        let index = r.random_range(0..ds.num_tasks());
        let task = ds.get_task(index).map_err(|e| e.to_string())?;
        let split = splitter.split(&task).map_err(|e| e.to_string())?;
        let train_ids: std::collections::HashSet<_> = split.train.iter().map(|e| e.id).collect();
        if train_ids.len() != split.train.len() || split.test.iter().any(|e| train_ids.contains(&e.id)) {
            return Err(format!("trial {trial}: task {index} has an example in both parts"));
        }
        for (part, k) in [(&split.train, k_train), (&split.test, k_test)] {
            let mut counts = [0usize; 5];
            for e in part.iter() {
                match e.target {
                    Target::Class(c) if c < 5 => counts[c] += 1,
                    _ => return Err(format!("trial {trial}: bad label")),
                }
                let class = split.descriptor.classes().unwrap()[match e.target {
                    Target::Class(c) => c,
                    _ => unreachable!(),
                }];
                if e.id.class != class {
                    return Err(format!("trial {trial}: label does not match class position"));
                }
            }
            if counts != [k; 5] {
                return Err(format!("trial {trial}: per-class counts {counts:?}, expected {k}"));
            }
        }
    }
    Ok(())
}

/// 5-way 1-shot, 15-query tasks from synthetic glyphs replicated to
/// `3×84×84`, collated at batch 16. Returns the four tensor shapes.
pub fn shape_contract_shapes(dir: &Path) -> std::result::Result<[Vec<usize>; 4], String> {
    use metatask::tasks::{BatchLoader, ClassSplitter, SplitDataset};
    let spec = SyntheticSpec {
        num_classes: 20,
        examples_per_class: 16,
        image_size: 28,
        seed: 3,
    };
    let manifest = synthetic_corpus(dir, &spec);
    let store = ingest_directory(dir, &manifest, MetaSplit::Train)
        .map_err(|e| e.to_string())?
        .resized(84)
        .with_channels(3)
        .map_err(|e| e.to_string())?;
    let ds = SplitDataset::new(CombinationDataset::new(Arc::new(store), 5).unwrap(), ClassSplitter::new(1, 15));
    let batch = BatchLoader::new(&ds, 16, true, 0)
        .map_err(|e| e.to_string())?
        .next()
        .ok_or("no batch")?
        .map_err(|e| e.to_string())?;
    Ok([
        batch.train_inputs.shape().to_vec(),
        batch.train_targets.shape(),
        batch.test_inputs.shape().to_vec(),
        batch.test_targets.shape(),
    ])
}

/// All k-subsets of 0..n in lexicographic order, by recursion.
fn enumerate(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, n: usize, k: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == k {
            out.push(prefix.clone());
            return;
        }
        for i in start..n {
            prefix.push(i);
            go(i + 1, n, k, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    go(0, n, k, &mut Vec::new(), &mut out);
    out
}

pub fn combinations_match_enumeration(max_n: usize) -> std::result::Result<(), String> {
    for n in 0..=max_n {
        for k in 0..=n {
            let all = enumerate(n, k);
            if metatask::tasks::binomial(n, k) != Some(all.len() as u64) {
                return Err(format!("C({n},{k})"));
            }
            for (i, combo) in all.iter().enumerate() {
                if metatask::tasks::unrank_combination(i as u64, n, k).map_err(|e| e.to_string())? != *combo {
                    return Err(format!("unrank({i}, {n}, {k})"));
                }
                if metatask::tasks::rank_combination(combo, n).map_err(|e| e.to_string())? != i as u64 {
                    return Err(format!("rank({combo:?}, {n})"));
                }
            }
        }
    }
    Ok(())
}

/// Test accuracy of a softmax-regression probe trained by full-batch
/// gradient descent on the first `train_per_class` examples of each class in
/// `classes`, tested on the rest.
pub fn linear_probe_accuracy(store: &metatask::fewshot::ClassStore, classes: std::ops::Range<usize>, train_per_class: usize) -> f64 {
    use metatask::autodiff::softmax_cross_entropy;
    use metatask::maml::accuracy;
    use metatask::nn::MetaLinear;
    let features: usize = store.input_shape().iter().product();
    let (mut xtr, mut ytr, mut xte, mut yte) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (label, class) in classes.clone().enumerate() {
        for e in 0..store.example_count(class) {
            let x = store.example(class, e).unwrap();
            if e < train_per_class {
                xtr.extend_from_slice(&x);
                ytr.push(label);
            } else {
                xte.extend_from_slice(&x);
                yte.push(label);
            }
        }
    }
    let xtr = tensor(xtr, &[ytr.len(), features]);
    let xte = tensor(xte, &[yte.len(), features]);
    let mut probe = MetaLinear::new(features, classes.len(), true, &mut rng(1));
    for _ in 0..300 {
        let g = Graph::new();
        let bound = probe.attach(&g).unwrap();
        let loss = softmax_cross_entropy(&bound.forward(&xtr, None).unwrap(), &ytr).unwrap();
        let params = bound.named_parameters();
        let grads = params.with_tensors(grad(&loss, &params.tensors(), false).unwrap()).unwrap();
        probe = probe.with_parameters(&metatask::nn::sgd_step(&params.detach(), &grads, 0.5, false).unwrap()).unwrap();
    }
    accuracy(&probe.forward(&xte, None).unwrap(), &yte)
}

/// Every class of the corpus, in manifest order, as one store.
pub fn whole_corpus(dir: &Path, manifest: &DatasetManifest) -> metatask::fewshot::ClassStore {
    let mut all = manifest.clone();
    all.splits.train = manifest.classes.iter().map(|c| c.name.clone()).collect();
    all.splits.val.clear();
    all.splits.test.clear();
    ingest_directory(dir, &all, MetaSplit::Train).unwrap()
}

/// Mean 20-way probe accuracy over the disjoint 20-class blocks of the corpus.
pub fn corpus_probe_accuracy(dir: &Path, manifest: &DatasetManifest) -> f64 {
    let store = whole_corpus(dir, manifest);
    let blocks: Vec<_> = (0..store.num_classes()).step_by(20).map(|s| s..(s + 20).min(store.num_classes())).collect();
    let per_class = store.example_count(0) / 2;
    blocks.iter().map(|b| linear_probe_accuracy(&store, b.clone(), per_class)).sum::<f64>() / blocks.len() as f64
}
