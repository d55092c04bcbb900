//! Criterion benchmarks for `sparse-pce`; see `benches/`.
