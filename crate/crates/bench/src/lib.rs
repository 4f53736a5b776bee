//! Criterion benchmarks for the `metatask` crate live in `benches/`.
