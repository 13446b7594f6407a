//! Criterion benchmarks for satpart; see `benches/`.
