//! Procedural glyph corpus in the class-per-directory layout.
//!
//! Each class is a fixed set of 2–4 random strokes. Each example jitters the
//! stroke endpoints, shifts the whole glyph slightly and adds background
//! noise, so examples of one class look alike but are never identical.

use std::fs;
use std::io::Cursor;
use std::path::Path;

use image::{GrayImage, ImageFormat};
use rand::Rng;

use super::manifest::{DatasetManifest, FileEntry, ManifestClass, SplitLists, MANIFEST_FILE, MANIFEST_VERSION};
use super::sha256_hex;
use crate::error::{Error, Result};
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SyntheticSpec {
    pub num_classes: usize,
    pub examples_per_class: usize,
    pub image_size: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            num_classes: 100,
            examples_per_class: 20,
            image_size: 28,
            seed: 0,
        }
    }
}

type Segment = [(f64, f64); 2];

fn class_strokes(seed: u64, class: usize) -> Vec<Segment> {
    let mut rng = seed::rng_for(seed, 0x676c_7970_6800_0000 ^ class as u64);
    let count = rng.random_range(2..=4);
    (0..count)
        .map(|_| {
            let mut p = || (rng.random_range(0.12..0.88), rng.random_range(0.12..0.88));
            [p(), p()]
        })
        .collect()
}

fn distance_to_segment(p: (f64, f64), [a, b]: &Segment) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    let (cx, cy) = (a.0 + t * dx, a.1 + t * dy);
    ((p.0 - cx).powi(2) + (p.1 - cy).powi(2)).sqrt()
}

/// Row-major 8-bit pixels of example `example` of class `class`.
pub fn render_glyph_class(seed: u64, class: usize, example: usize, size: usize) -> Vec<u8> {
    let strokes = class_strokes(seed, class);
    let mut rng = seed::rng_for(seed::mix(seed, class as u64), example as u64);
    let shift = (rng.random_range(-0.04..0.04), rng.random_range(-0.04..0.04));
    let strokes: Vec<Segment> = strokes
        .iter()
        .map(|s| {
            let mut jitter = |(x, y): (f64, f64)| {
                (
                    x + shift.0 + rng.random_range(-0.05..0.05),
                    y + shift.1 + rng.random_range(-0.05..0.05),
                )
            };
            [jitter(s[0]), jitter(s[1])]
        })
        .collect();
    let half_width = 0.045;
    let soft = 1.0 / size as f64;
    let mut pixels = Vec::with_capacity(size * size);
    for row in 0..size {
        for col in 0..size {
            let p = ((col as f64 + 0.5) / size as f64, (row as f64 + 0.5) / size as f64);
            let ink = strokes
                .iter()
                .map(|s| (1.0 - (distance_to_segment(p, s) - half_width) / soft).clamp(0.0, 1.0))
                .fold(0.0, f64::max);
            let value = (ink + rng.random_range(0.0..0.1)).min(1.0);
            pixels.push((value * 255.0).round() as u8);
        }
    }
    pixels
}

fn encode_png(pixels: Vec<u8>, size: usize) -> Result<Vec<u8>> {
    let img = GrayImage::from_raw(size as u32, size as u32, pixels).expect("size×size pixels");
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png).map_err(|source| Error::Image {
        path: "<memory>".into(),
        source,
    })?;
    Ok(out.into_inner())
}

/// Writes `out/<class>/<example>.png` plus `out/manifest.json` and returns
/// the manifest. Classes are split 64/16/20 (train/val/test) in order.
pub fn generate_synthetic_corpus(out: &Path, spec: &SyntheticSpec) -> Result<DatasetManifest> {
    if spec.image_size < 8 {
        return Err(Error::Config(format!(
            "image size must be at least 8, got {}",
            spec.image_size
        )));
    }
    let width = spec.num_classes.saturating_sub(1).to_string().len().max(3);
    let mut classes = Vec::with_capacity(spec.num_classes);
    for class in 0..spec.num_classes {
        let name = format!("glyph_{class:0width$}");
        let dir = out.join(&name);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let mut files = Vec::with_capacity(spec.examples_per_class);
        for example in 0..spec.examples_per_class {
            let bytes = encode_png(render_glyph_class(spec.seed, class, example, spec.image_size), spec.image_size)?;
            let file = format!("{example:04}.png");
            let path = dir.join(&file);
            fs::write(&path, &bytes).map_err(|e| Error::io(&path, e))?;
            files.push(FileEntry {
                name: file,
                sha256: sha256_hex(&bytes),
            });
        }
        classes.push(ManifestClass { name, files });
    }
    let n = spec.num_classes;
    let n_train = (n * 64 + 50) / 100;
    let n_val = ((n * 16 + 50) / 100).min(n - n_train);
    let names: Vec<String> = classes.iter().map(|c| c.name.clone()).collect();
    let manifest = DatasetManifest {
        format_version: MANIFEST_VERSION,
        image_shape: [1, spec.image_size, spec.image_size],
        splits: SplitLists {
            train: names[..n_train].to_vec(),
            val: names[n_train..n_train + n_val].to_vec(),
            test: names[n_train + n_val..].to_vec(),
        },
        classes,
    };
    manifest.validate()?;
    manifest.save(&out.join(MANIFEST_FILE))?;
    Ok(manifest)
}
