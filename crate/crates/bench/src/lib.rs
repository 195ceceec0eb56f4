//! Criterion benchmarks for the audit pipeline live in `benches/`.
