//! Criterion benchmarks for the detector simulator; see `benches/`.
