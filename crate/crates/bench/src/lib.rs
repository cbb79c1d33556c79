//! Criterion benchmarks for segfeat; see `benches/segfeat.rs`.
