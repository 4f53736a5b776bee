//! Class-indexed example storage, on-disk ingestion and a synthetic corpus.

mod ingest;
mod manifest;
mod synthetic;

use std::sync::Arc;

pub use ingest::{ingest_directory, sha256_hex};
pub use manifest::{DatasetManifest, FileEntry, ManifestClass, SplitLists, MANIFEST_FILE, MANIFEST_VERSION};
pub use synthetic::{generate_synthetic_corpus, render_glyph_class, SyntheticSpec};

use crate::error::{Error, Result};
use crate::tasks::MetaSplit;

/// A deterministic class-level transform. Each variant applied to a class
/// yields a new class.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ClassTransform {
    Identity,
    /// Counter-clockwise rotation by `quarter_turns × 90°` (mod 4).
    Rotate(u8),
}

impl ClassTransform {
    pub const ROT90: ClassTransform = ClassTransform::Rotate(1);
    pub const ROT180: ClassTransform = ClassTransform::Rotate(2);
    pub const ROT270: ClassTransform = ClassTransform::Rotate(3);

    fn quarter_turns(self) -> u8 {
        match self {
            ClassTransform::Identity => 0,
            ClassTransform::Rotate(q) => q % 4,
        }
    }

    fn then(self, next: ClassTransform) -> ClassTransform {
        match (self.quarter_turns() + next.quarter_turns()) % 4 {
            0 => ClassTransform::Identity,
            q => ClassTransform::Rotate(q),
        }
    }

    pub fn suffix(self) -> String {
        match self.quarter_turns() {
            0 => String::new(),
            q => format!("/rot{}", q as u32 * 90),
        }
    }

    pub fn apply(self, data: &[f64], shape: &[usize]) -> Result<Vec<f64>> {
        match self.quarter_turns() {
            0 => Ok(data.to_vec()),
            q => rotate_image(data, shape, q),
        }
    }
}

/// Rotates every channel of a `[c, h, w]` image counter-clockwise by
/// `quarter_turns × 90°`. Only square images can be rotated.
pub fn rotate_image(data: &[f64], shape: &[usize], quarter_turns: u8) -> Result<Vec<f64>> {
    let &[c, h, w] = shape else {
        return Err(Error::Transform(format!("expected a [c, h, w] image, got {shape:?}")));
    };
    if h != w {
        return Err(Error::Transform(format!("cannot rotate a non-square {h}×{w} image")));
    }
    let n = h;
    let mut cur = data.to_vec();
    for _ in 0..quarter_turns % 4 {
        let mut next = vec![0.0; cur.len()];
        for ch in 0..c {
            let plane = &cur[ch * n * n..(ch + 1) * n * n];
            let dst = &mut next[ch * n * n..(ch + 1) * n * n];
            for i in 0..n {
                for j in 0..n {
                    dst[i * n + j] = plane[j * n + (n - 1 - i)];
                }
            }
        }
        cur = next;
    }
    Ok(cur)
}

/// Nearest-neighbour resize of a `[c, h, w]` image to `[c, size, size]`.
pub fn resize_nearest(data: &[f64], shape: &[usize], size: usize) -> Vec<f64> {
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    let mut out = Vec::with_capacity(c * size * size);
    for ch in 0..c {
        for y in 0..size {
            let sy = y * h / size;
            for x in 0..size {
                let sx = x * w / size;
                out.push(data[ch * h * w + sy * w + sx]);
            }
        }
    }
    out
}

#[derive(Debug)]
struct BaseClass {
    name: String,
    examples: Vec<Arc<[f64]>>,
}

#[derive(Clone, Debug)]
struct StoreClass {
    base: usize,
    transform: ClassTransform,
}

/// Classes of one meta-split, with dense ids `0..C` and lazily transformed
/// `[channels, height, width]` examples.
#[derive(Clone, Debug)]
pub struct ClassStore {
    meta_split: MetaSplit,
    base_shape: Vec<usize>,
    base: Arc<Vec<BaseClass>>,
    classes: Vec<StoreClass>,
    channels: Option<usize>,
    size: Option<usize>,
}

impl ClassStore {
    /// Builds a store from in-memory `(name, examples)` pairs; every example
    /// must hold `product(shape)` values, with `shape = [c, h, w]`.
    pub fn from_classes(meta_split: MetaSplit, shape: Vec<usize>, classes: Vec<(String, Vec<Vec<f64>>)>) -> Result<Self> {
        if shape.len() != 3 {
            return Err(Error::Config(format!("image shape must be [c, h, w], got {shape:?}")));
        }
        let numel: usize = shape.iter().product();
        let mut base = Vec::with_capacity(classes.len());
        for (name, examples) in classes {
            if let Some(bad) = examples.iter().find(|e| e.len() != numel) {
                return Err(Error::Structure {
                    shape: shape.clone(),
                    expected: numel,
                    actual: bad.len(),
                });
            }
            base.push(BaseClass {
                name,
                examples: examples.into_iter().map(Arc::from).collect(),
            });
        }
        let classes = (0..base.len())
            .map(|i| StoreClass {
                base: i,
                transform: ClassTransform::Identity,
            })
            .collect();
        Ok(ClassStore {
            meta_split,
            base_shape: shape,
            base: Arc::new(base),
            classes,
            channels: None,
            size: None,
        })
    }

    pub fn meta_split(&self) -> MetaSplit {
        self.meta_split
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn class_name(&self, class: usize) -> String {
        let c = &self.classes[class];
        format!("{}{}", self.base[c.base].name, c.transform.suffix())
    }

    pub fn class_names(&self) -> Vec<String> {
        (0..self.num_classes()).map(|c| self.class_name(c)).collect()
    }

    pub fn example_count(&self, class: usize) -> usize {
        self.classes
            .get(class)
            .map_or(0, |c| self.base[c.base].examples.len())
    }

    pub fn total_examples(&self) -> usize {
        (0..self.num_classes()).map(|c| self.example_count(c)).sum()
    }

    /// Shape of every example returned by [`ClassStore::example`].
    pub fn input_shape(&self) -> Vec<usize> {
        let c = self.channels.unwrap_or(self.base_shape[0]);
        match self.size {
            Some(s) => vec![c, s, s],
            None => vec![c, self.base_shape[1], self.base_shape[2]],
        }
    }

    pub fn example(&self, class: usize, index: usize) -> Result<Arc<[f64]>> {
        let entry = self.classes.get(class).ok_or(Error::Bounds {
            index: class as u64,
            len: self.classes.len() as u64,
        })?;
        let examples = &self.base[entry.base].examples;
        let raw = examples.get(index).ok_or(Error::Bounds {
            index: index as u64,
            len: examples.len() as u64,
        })?;
        if entry.transform == ClassTransform::Identity && self.channels.is_none() && self.size.is_none() {
            return Ok(raw.clone());
        }
        let mut shape = self.base_shape.clone();
        let mut data = entry.transform.apply(raw, &shape)?;
        if let Some(size) = self.size {
            data = resize_nearest(&data, &shape, size);
            shape = vec![shape[0], size, size];
        }
        if let Some(c) = self.channels.filter(|&c| c != shape[0]) {
            data = data.repeat(c);
        }
        Ok(data.into())
    }

    /// View whose examples are resized (nearest neighbour) to `size × size`.
    pub fn resized(&self, size: usize) -> ClassStore {
        ClassStore {
            size: Some(size),
            ..self.clone()
        }
    }

    /// View with `channels` channels; a single-channel store is replicated.
    pub fn with_channels(&self, channels: usize) -> Result<ClassStore> {
        if channels != self.base_shape[0] && self.base_shape[0] != 1 {
            return Err(Error::Config(format!(
                "cannot map {} channels to {channels}",
                self.base_shape[0]
            )));
        }
        Ok(ClassStore {
            channels: Some(channels),
            ..self.clone()
        })
    }
}

/// Enlarges the class pool: every class paired with the identity and with
/// each transform becomes its own class. Class `c` of the input store maps to
/// ids `c·(1+T) .. c·(1+T)+T` of the output, identity first.
pub fn augment_classes(store: &ClassStore, transforms: &[ClassTransform]) -> ClassStore {
    let variants: Vec<ClassTransform> = std::iter::once(ClassTransform::Identity)
        .chain(transforms.iter().copied())
        .collect();
    let classes = store
        .classes
        .iter()
        .flat_map(|c| {
            variants.iter().map(move |t| StoreClass {
                base: c.base,
                transform: c.transform.then(*t),
            })
        })
        .collect();
    ClassStore {
        classes,
        ..store.clone()
    }
}
