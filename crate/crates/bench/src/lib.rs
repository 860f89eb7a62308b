//! Criterion benchmarks for the lumen3d pipeline stages; see `benches/`.
