use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{ClassStore, DatasetManifest};
use crate::error::{Error, Result};
use crate::tasks::MetaSplit;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Loads the classes of `split` from `root/<class>/<file>`.
///
/// Every file is checked against its manifest checksum and decoded to
/// channel-first values in `[0, 1]`. Class ids follow manifest order.
pub fn ingest_directory(root: &Path, manifest: &DatasetManifest, split: MetaSplit) -> Result<ClassStore> {
    manifest.validate()?;
    let [channels, height, width] = manifest.image_shape;
    let mut classes = Vec::new();
    for name in manifest.splits.get(split) {
        let class = manifest.class(name).expect("validated manifest");
        let dir = root.join(name);
        if !dir.is_dir() {
            return Err(Error::MissingPath(dir));
        }
        let mut examples = Vec::with_capacity(class.files.len());
        for file in &class.files {
            let path = dir.join(&file.name);
            let bytes = fs::read(&path).map_err(|e| {
                if e.kind() == std::io::ErrorKind::NotFound {
                    Error::MissingPath(path.clone())
                } else {
                    Error::io(&path, e)
                }
            })?;
            let actual = sha256_hex(&bytes);
            if actual != file.sha256 {
                return Err(Error::Checksum {
                    path,
                    expected: file.sha256.clone(),
                    actual,
                });
            }
            let image = image::load_from_memory(&bytes).map_err(|source| Error::Image {
                path: path.clone(),
                source,
            })?;
            if image.width() as usize != width || image.height() as usize != height {
                return Err(Error::Manifest(format!(
                    "{} is {}×{}, manifest says {width}×{height}",
                    path.display(),
                    image.width(),
                    image.height()
                )));
            }
            examples.push(decode_chw(&image, channels));
        }
        classes.push((name.clone(), examples));
    }
    ClassStore::from_classes(split, manifest.image_shape.to_vec(), classes)
}

fn decode_chw(image: &image::DynamicImage, channels: usize) -> Vec<f64> {
    if channels == 1 {
        return image.to_luma8().into_raw().into_iter().map(|p| p as f64 / 255.0).collect();
    }
    let rgb = image.to_rgb8();
    let (w, h) = rgb.dimensions();
    let plane = (w * h) as usize;
    let raw = rgb.into_raw();
    let mut out = vec![0.0; 3 * plane];
    for (i, px) in raw.chunks_exact(3).enumerate() {
        for c in 0..3 {
            out[c * plane + i] = px[c] as f64 / 255.0;
        }
    }
    out
}
