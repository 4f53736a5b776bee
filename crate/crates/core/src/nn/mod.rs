//! Network modules whose forward pass can run on substituted parameters.
//!
//! `forward(x, None)` uses the stored parameters. `forward(x, Some(params))`
//! uses the supplied tensors instead, so their full provenance (for example
//! one step of gradient descent on the stored parameters) becomes part of the
//! output's graph.

mod checkpoint;

use indexmap::IndexMap;
use rand::Rng;

pub use checkpoint::{load_params, read_params, save_params, write_params, CHECKPOINT_VERSION};

use crate::autodiff::{Graph, Tensor};
use crate::error::{Error, Result};
use crate::seed;

/// Ordered, path-keyed parameter collection.
#[derive(Clone, Debug, Default)]
pub struct ParamSet {
    entries: IndexMap<String, Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds an entry; paths must be unique.
    pub fn insert(&mut self, path: impl Into<String>, tensor: Tensor) -> Result<()> {
        let path = path.into();
        if self.entries.contains_key(&path) {
            return Err(Error::Contract(format!("duplicate parameter path {path}")));
        }
        self.entries.insert(path, tensor);
        Ok(())
    }

    pub fn get(&self, path: &str) -> Option<&Tensor> {
        self.entries.get(path)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn paths(&self) -> Vec<String> {
        self.entries.keys().cloned().collect()
    }

    pub fn tensors(&self) -> Vec<Tensor> {
        self.entries.values().cloned().collect()
    }

    /// Rebuilds a set with the same paths from tensors in path order.
    pub fn with_tensors(&self, tensors: Vec<Tensor>) -> Result<ParamSet> {
        if tensors.len() != self.len() {
            return Err(Error::Contract(format!(
                "{} tensors for {} parameter paths",
                tensors.len(),
                self.len()
            )));
        }
        Ok(ParamSet {
            entries: self.entries.keys().cloned().zip(tensors).collect(),
        })
    }

    /// Every entry registered as a fresh leaf of `graph`.
    pub fn attach(&self, graph: &Graph) -> ParamSet {
        ParamSet {
            entries: self
                .entries
                .iter()
                .map(|(k, v)| (k.clone(), graph.leaf(v)))
                .collect(),
        }
    }

    pub fn detach(&self) -> ParamSet {
        ParamSet {
            entries: self
                .entries
                .iter()
                .map(|(k, v)| (k.clone(), v.detach()))
                .collect(),
        }
    }

    /// Entries under `prefix`, with the prefix removed.
    pub fn scoped(&self, prefix: &str) -> ParamSet {
        ParamSet {
            entries: self
                .entries
                .iter()
                .filter_map(|(k, v)| k.strip_prefix(prefix).map(|rest| (rest.to_string(), v.clone())))
                .collect(),
        }
    }

    pub fn num_values(&self) -> usize {
        self.entries.values().map(Tensor::numel).sum()
    }

    /// Euclidean norm over all entries.
    pub fn norm(&self) -> f64 {
        self.entries
            .values()
            .flat_map(|t| t.values().iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }
}

impl FromIterator<(String, Tensor)> for ParamSet {
    fn from_iter<I: IntoIterator<Item = (String, Tensor)>>(iter: I) -> Self {
        ParamSet {
            entries: iter.into_iter().collect(),
        }
    }
}

/// A module that can run on its own or on substituted parameters.
pub trait MetaModule {
    /// Stored parameters with hierarchical dotted paths.
    fn named_parameters(&self) -> ParamSet;

    fn forward(&self, input: &Tensor, params: Option<&ParamSet>) -> Result<Tensor>;

    /// A copy of the module whose stored parameters are `params`.
    fn with_parameters(&self, params: &ParamSet) -> Result<Self>
    where
        Self: Sized;

    /// A copy whose stored parameters are leaves of `graph`.
    fn attach(&self, graph: &Graph) -> Result<Self>
    where
        Self: Sized,
    {
        self.with_parameters(&self.named_parameters().attach(graph))
    }
}

fn lookup<'a>(params: &'a ParamSet, path: &str, expected: &Tensor) -> Result<&'a Tensor> {
    let t = params
        .get(path)
        .ok_or_else(|| Error::MissingParameter(path.to_string()))?;
    if t.shape() != expected.shape() {
        return Err(Error::ParameterShape {
            path: path.to_string(),
            expected: expected.shape().to_vec(),
            actual: t.shape().to_vec(),
        });
    }
    Ok(t)
}

/// Fully connected layer `y = x·Wᵀ + b` with `W: [out×in]`, `b: [out]`.
#[derive(Clone, Debug)]
pub struct MetaLinear {
    weight: Tensor,
    bias: Option<Tensor>,
}

impl MetaLinear {
    /// Weights uniform in `[-1/√in, 1/√in]`, bias zero.
    pub fn new<R: Rng + ?Sized>(in_features: usize, out_features: usize, bias: bool, rng: &mut R) -> Self {
        let bound = 1.0 / (in_features.max(1) as f64).sqrt();
        let weight: Vec<f64> = (0..in_features * out_features)
            .map(|_| rng.random_range(-bound..=bound))
            .collect();
        MetaLinear {
            weight: Tensor::from_vec(weight, &[out_features, in_features]).expect("sized"),
            bias: bias.then(|| Tensor::zeros(&[out_features])),
        }
    }

    pub fn from_tensors(weight: Tensor, bias: Option<Tensor>) -> Result<Self> {
        let &[out, _] = weight.shape() else {
            return Err(Error::Shape {
                op: "MetaLinear weight",
                lhs: weight.shape().to_vec(),
                rhs: vec![],
            });
        };
        if let Some(b) = &bias {
            if b.shape() != [out] {
                return Err(Error::ParameterShape {
                    path: "bias".into(),
                    expected: vec![out],
                    actual: b.shape().to_vec(),
                });
            }
        }
        Ok(MetaLinear { weight, bias })
    }

    pub fn in_features(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_features(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn weight(&self) -> &Tensor {
        &self.weight
    }

    pub fn bias(&self) -> Option<&Tensor> {
        self.bias.as_ref()
    }
}

impl MetaModule for MetaLinear {
    fn named_parameters(&self) -> ParamSet {
        let mut set = ParamSet::new();
        set.insert("weight", self.weight.clone()).expect("unique");
        if let Some(b) = &self.bias {
            set.insert("bias", b.clone()).expect("unique");
        }
        set
    }

    fn forward(&self, input: &Tensor, params: Option<&ParamSet>) -> Result<Tensor> {
        let (weight, bias) = match params {
            None => (&self.weight, self.bias.as_ref()),
            Some(p) => (
                lookup(p, "weight", &self.weight)?,
                match &self.bias {
                    Some(b) => Some(lookup(p, "bias", b)?),
                    None => None,
                },
            ),
        };
        let out = input.matmul(&weight.transpose()?)?;
        match bias {
            Some(b) => out.add(b),
            None => Ok(out),
        }
    }

    fn with_parameters(&self, params: &ParamSet) -> Result<Self> {
        let weight = lookup(params, "weight", &self.weight)?.clone();
        let bias = match &self.bias {
            Some(b) => Some(lookup(params, "bias", b)?.clone()),
            None => None,
        };
        Ok(MetaLinear { weight, bias })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    pub fn apply(self, x: &Tensor) -> Result<Tensor> {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.relu(),
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            other => Err(Error::Config(format!("unknown activation {other}"))),
        }
    }
}

#[derive(Clone, Debug)]
pub enum Layer {
    Linear(MetaLinear),
    Activation(Activation),
}

/// Children applied in construction order; child `i` owns the path prefix `"i."`.
#[derive(Clone, Debug, Default)]
pub struct MetaSequential {
    layers: Vec<Layer>,
}

impl MetaSequential {
    pub fn new(layers: Vec<Layer>) -> Self {
        MetaSequential { layers }
    }

    /// `sizes[0] → sizes[1] → … → sizes[last]` with `activation` between
    /// linear layers. Initialization is drawn from a stream keyed by `seed`.
    pub fn mlp(sizes: &[usize], activation: Activation, seed: u64) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::Config("an MLP needs at least input and output sizes".into()));
        }
        let mut rng = seed::rng_for(seed, 0x6d6c70);
        let mut layers = Vec::new();
        for (i, pair) in sizes.windows(2).enumerate() {
            if i > 0 {
                layers.push(Layer::Activation(activation));
            }
            layers.push(Layer::Linear(MetaLinear::new(pair[0], pair[1], true, &mut rng)));
        }
        Ok(MetaSequential { layers })
    }

    /// Rebuilds an MLP (as produced by [`MetaSequential::mlp`]) from its
    /// parameters, e.g. after loading a checkpoint.
    pub fn mlp_from_parameters(params: &ParamSet, activation: Activation) -> Result<Self> {
        let mut layers = Vec::new();
        let mut index = 0;
        loop {
            let prefix = format!("{index}.");
            let scope = params.scoped(&prefix);
            if scope.is_empty() {
                break;
            }
            let weight = scope
                .get("weight")
                .ok_or_else(|| Error::MissingParameter(format!("{prefix}weight")))?
                .detach();
            let bias = scope.get("bias").map(Tensor::detach);
            if index > 0 {
                layers.push(Layer::Activation(activation));
            }
            layers.push(Layer::Linear(MetaLinear::from_tensors(weight, bias)?));
            index += 2;
        }
        if layers.is_empty() {
            return Err(Error::Checkpoint("no linear layers in parameter set".into()));
        }
        let rebuilt = MetaSequential { layers };
        if rebuilt.named_parameters().len() != params.len() {
            return Err(Error::Checkpoint(
                "parameter set does not describe an alternating linear/activation stack".into(),
            ));
        }
        Ok(rebuilt)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn output_size(&self) -> Option<usize> {
        self.layers.iter().rev().find_map(|l| match l {
            Layer::Linear(lin) => Some(lin.out_features()),
            Layer::Activation(_) => None,
        })
    }
}

impl MetaModule for MetaSequential {
    fn named_parameters(&self) -> ParamSet {
        let mut set = ParamSet::new();
        for (i, layer) in self.layers.iter().enumerate() {
            if let Layer::Linear(lin) = layer {
                for (path, t) in lin.named_parameters().iter() {
                    set.insert(format!("{i}.{path}"), t.clone()).expect("unique");
                }
            }
        }
        set
    }

    fn forward(&self, input: &Tensor, params: Option<&ParamSet>) -> Result<Tensor> {
        let mut x = input.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            x = match layer {
                Layer::Activation(act) => act.apply(&x)?,
                Layer::Linear(lin) => {
                    let scoped = params.map(|p| p.scoped(&format!("{i}.")));
                    lin.forward(&x, scoped.as_ref())
                        .map_err(|e| prefix_error(e, i))?
                }
            };
        }
        Ok(x)
    }

    fn with_parameters(&self, params: &ParamSet) -> Result<Self> {
        let layers = self
            .layers
            .iter()
            .enumerate()
            .map(|(i, layer)| match layer {
                Layer::Linear(lin) => lin
                    .with_parameters(&params.scoped(&format!("{i}.")))
                    .map(Layer::Linear)
                    .map_err(|e| prefix_error(e, i)),
                Layer::Activation(a) => Ok(Layer::Activation(*a)),
            })
            .collect::<Result<_>>()?;
        Ok(MetaSequential { layers })
    }
}

fn prefix_error(err: Error, index: usize) -> Error {
    match err {
        Error::MissingParameter(p) => Error::MissingParameter(format!("{index}.{p}")),
        Error::ParameterShape {
            path,
            expected,
            actual,
        } => Error::ParameterShape {
            path: format!("{index}.{path}"),
            expected,
            actual,
        },
        other => other,
    }
}

/// `params[p] - lr * grads[p]` for every path.
///
/// Without `create_graph` the gradients are detached first, which drops the
/// second-order terms (the first-order approximation).
pub fn sgd_step(params: &ParamSet, grads: &ParamSet, lr: f64, create_graph: bool) -> Result<ParamSet> {
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(Error::Contract(format!("learning rate must be non-negative, got {lr}")));
    }
    let mut diff: Vec<&str> = params
        .iter()
        .map(|(p, _)| p)
        .filter(|p| grads.get(p).is_none())
        .chain(grads.iter().map(|(p, _)| p).filter(|p| params.get(p).is_none()))
        .collect();
    if !diff.is_empty() {
        diff.sort_unstable();
        return Err(Error::Contract(format!(
            "parameter and gradient paths differ: {}",
            diff.join(", ")
        )));
    }
    let mut out = ParamSet::new();
    for (path, p) in params.iter() {
        let g = &grads.entries[path];
        if g.shape() != p.shape() {
            return Err(Error::ParameterShape {
                path: path.to_string(),
                expected: p.shape().to_vec(),
                actual: g.shape().to_vec(),
            });
        }
        let g = if create_graph { g.clone() } else { g.detach() };
        out.insert(path, p.sub(&g.scale(lr)?)?)?;
    }
    Ok(out)
}
