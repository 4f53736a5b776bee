mod common;

use std::collections::HashSet;

use common::*;
use metatask::fewshot::{ingest_directory, DatasetManifest, SyntheticSpec, MANIFEST_FILE};
use metatask::{Error, MetaSplit};

const CORPUS: SyntheticSpec = SyntheticSpec {
    num_classes: 100,
    examples_per_class: 20,
    image_size: 28,
    seed: 7,
};

fn png_count(dir: &std::path::Path) -> usize {
    walk(dir).into_iter().filter(|p| p.extension().is_some_and(|e| e == "png")).count()
}

fn walk(dir: &std::path::Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            out.extend(walk(&path));
        } else {
            out.push(path);
        }
    }
    out
}

#[test]
fn corpus_layout_and_regeneration() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ma = synthetic_corpus(a.path(), &CORPUS);
    let mb = synthetic_corpus(b.path(), &CORPUS);
    assert_eq!(png_count(a.path()), 2000);
    assert_eq!(ma.classes.len(), 100);
    assert!(ma.classes.iter().all(|c| c.files.len() == 20));
    assert_eq!(ma, mb);
    assert_eq!(DatasetManifest::load(&a.path().join(MANIFEST_FILE)).unwrap(), ma);
    let other = tempfile::tempdir().unwrap();
    let mc = synthetic_corpus(other.path(), &SyntheticSpec { seed: 8, ..CORPUS });
    assert_ne!(ma.classes[0].files[0].sha256, mc.classes[0].files[0].sha256);
}

#[test]
fn ingestion_is_deterministic_and_in_range() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synthetic_corpus(dir.path(), &CORPUS);
    let first = ingest_directory(dir.path(), &manifest, MetaSplit::Test).unwrap();
    let second = ingest_directory(dir.path(), &manifest, MetaSplit::Test).unwrap();
    assert_eq!(first.class_names(), second.class_names());
    for c in 0..first.num_classes() {
        for e in 0..first.example_count(c) {
            let x = first.example(c, e).unwrap();
            assert_eq!(x, second.example(c, e).unwrap());
            assert!(x.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}

#[test]
fn manifest_projection_onto_a_sixty_twenty_twenty_split() {
    let dir = tempfile::tempdir().unwrap();
    let mut manifest = synthetic_corpus(dir.path(), &CORPUS);
    let names: Vec<String> = manifest.classes.iter().map(|c| c.name.clone()).collect();
    manifest.splits.train = names[..60].to_vec();
    manifest.splits.val = names[60..80].to_vec();
    manifest.splits.test = names[80..].to_vec();
    let train = ingest_directory(dir.path(), &manifest, MetaSplit::Train).unwrap();
    assert_eq!(train.num_classes(), 60);
    assert_eq!(train.class_names(), names[..60]);
    let sets: Vec<HashSet<String>> = MetaSplit::ALL
        .iter()
        .map(|&s| ingest_directory(dir.path(), &manifest, s).unwrap().class_names().into_iter().collect())
        .collect();
    assert!(sets[0].is_disjoint(&sets[1]) && sets[0].is_disjoint(&sets[2]) && sets[1].is_disjoint(&sets[2]));

    manifest.splits.val.push(names[0].clone());
    let err = ingest_directory(dir.path(), &manifest, MetaSplit::Train).unwrap_err();
    assert!(matches!(err, Error::Manifest(ref m) if m.contains("listed in both")), "{err}");
}

#[test]
fn classes_have_distinct_mean_images() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synthetic_corpus(dir.path(), &CORPUS);
    let store = whole_corpus(dir.path(), &manifest);
    let means: Vec<Vec<f64>> = (0..store.num_classes())
        .map(|c| {
            let mut m = vec![0.0; 784];
            for e in 0..store.example_count(c) {
                for (a, v) in m.iter_mut().zip(store.example(c, e).unwrap().iter()) {
                    *a += v / 20.0;
                }
            }
            m
        })
        .collect();
    for i in 0..means.len() {
        for j in i + 1..means.len() {
            let d: f64 = means[i].iter().zip(&means[j]).map(|(a, b)| (a - b).powi(2)).sum();
            assert!(d > 0.0, "classes {i} and {j}");
        }
    }
}

#[test]
fn corpus_is_linearly_separable() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synthetic_corpus(dir.path(), &CORPUS);
    let acc = corpus_probe_accuracy(dir.path(), &manifest);
    assert!(acc > 0.8, "linear probe accuracy {acc}");
}

#[test]
fn grayscale_replicates_to_three_channels() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synthetic_corpus(dir.path(), &SyntheticSpec { num_classes: 10, examples_per_class: 2, ..CORPUS });
    let store = ingest_directory(dir.path(), &manifest, MetaSplit::Train).unwrap();
    let big = store.resized(84).with_channels(3).unwrap();
    assert_eq!(big.input_shape(), [3, 84, 84]);
    let x = big.example(0, 0).unwrap();
    let plane = 84 * 84;
    assert_eq!(x[..plane], x[plane..2 * plane]);
    assert_eq!(x[..plane], x[2 * plane..]);
    // nearest-neighbour 28 → 84 repeats each source pixel 3×3 times
    let small = store.example(0, 0).unwrap();
    assert_eq!(x[0], small[0]);
    assert_eq!(x[84 * 3 + 3], small[28 + 1]);
}
